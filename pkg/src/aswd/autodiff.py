"""Tape-based reverse-mode differentiation over float64 numpy arrays.

A :class:`Tape` records every primitive applied to its :class:`Var` values.
Leaves created with :meth:`Tape.watch` are bound to a :class:`Parameter`;
calling :func:`backward` on a scalar ``Var`` accumulates the derivative of
that scalar into every watched parameter's ``grad``.

Only the primitives needed by the sliced distances live here. There is no
broadcasting beyond what each primitive documents.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericError, ShapeError

Tensor = np.ndarray


def as_tensor(x) -> Tensor:
    """Copy ``x`` into a finite float64 array."""
    arr = np.array(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError("tensor construction: non-finite entries")
    return arr


class Parameter:
    """A differentiable value with a gradient accumulator of the same shape."""

    def __init__(self, value):
        self.value = as_tensor(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter(shape={self.value.shape})"


@dataclass
class _Node:
    op: str
    parents: tuple
    value: Tensor
    vjp: Callable | None = None
    param: Parameter | None = None
    saved: dict = field(default_factory=dict)


class Tape:
    """Append-only record of primitive applications.

    Nodes are stored in creation order, so a node's inputs always precede it.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, node: _Node) -> "Var":
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def constant(self, value) -> "Var":
        return self._push(_Node("const", (), as_tensor(value)))

    def watch(self, param: Parameter) -> "Var":
        """Leaf whose gradient is accumulated into ``param.grad``."""
        return self._push(_Node("leaf", (), param.value, param=param))

    def lift(self, x) -> "Var":
        if isinstance(x, Var):
            if x.tape is not self:
                raise ContractError("variable belongs to a different tape")
            return x
        if isinstance(x, Parameter):
            return self.watch(x)
        return self.constant(x)

    def replay(self, index: int) -> Tensor:
        """Recompute node ``index`` from the stored values of its inputs."""
        node = self.nodes[index]
        if node.op in ("const", "leaf"):
            return node.value
        fwd = _REPLAY[node.op]
        return fwd(node, *[self.nodes[p].value for p in node.parents])


class Var:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> Tensor:
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, float(p))

    def __repr__(self):
        return f"Var(op={self.tape.nodes[self.index].op}, shape={self.shape})"


# ---------------------------------------------------------------------------
# primitive machinery

_REPLAY: dict[str, Callable] = {}


def _common_tape(args) -> Tape:
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ContractError("operands recorded on different tapes")
    if tape is None:
        raise ContractError("primitive needs at least one recorded operand")
    return tape


def _record(op: str, args, value: Tensor, vjp: Callable, **saved) -> Var:
    # a NaN or Inf anywhere makes the sum non-finite
    if not np.isfinite(value.sum()):
        raise NumericError(f"numeric overflow in primitive '{op}'")
    tape = _common_tape(args)
    parents = tuple(tape.lift(a).index for a in args)
    return tape._push(_Node(op, parents, value, vjp, saved=saved))


def _val(x) -> Tensor:
    if isinstance(x, Var):
        return x.value
    if isinstance(x, Parameter):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not conform")


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Var:
    av, bv = _val(a), _val(b)
    if bv.ndim == 1 and av.ndim == 2 and bv.shape[0] == av.shape[1]:
        # row-bias form: (N, d) + (d,)
        return _record("add_row", (a, b), av + bv, lambda g: (g, g.sum(axis=0)))
    _same_shape("add", av, bv)
    return _record("add", (a, b), av + bv, lambda g: (g, g))


def sub(a, b) -> Var:
    av, bv = _val(a), _val(b)
    _same_shape("sub", av, bv)
    return _record("sub", (a, b), av - bv, lambda g: (g, -g))


def mul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    _same_shape("mul", av, bv)
    return _record("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def scale(a, c: float) -> Var:
    av = _val(a)
    return _record("scale", (a,), av * c, lambda g: (g * c,), c=c)


def matmul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: shapes {av.shape} and {bv.shape} do not conform")
    return _record("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def transpose(a) -> Var:
    av = _val(a)
    if av.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {av.shape}")
    return _record("transpose", (a,), av.T.copy(), lambda g: (g.T,))


def reshape(a, shape) -> Var:
    av = _val(a)
    shape = tuple(shape)
    if int(np.prod(shape)) != av.size:
        raise ShapeError(f"reshape: cannot view {av.shape} as {shape}")
    return _record("reshape", (a,), av.reshape(shape), lambda g: (g.reshape(av.shape),), shape=shape)


def relu(a) -> Var:
    av = _val(a)
    mask = av > 0.0  # derivative at exactly 0 is 0
    return _record("relu", (a,), np.where(mask, av, 0.0), lambda g: (g * mask,))


def absolute(a) -> Var:
    av = _val(a)
    sign = np.sign(av)
    return _record("abs", (a,), np.abs(av), lambda g: (g * sign,))


def power(a, p: float) -> Var:
    """Elementwise ``a**p``.

    For ``p < 1`` the derivative at a zero base is taken as 0 instead of inf.
    """
    av = _val(a)
    if p != int(p) and np.any(av < 0):
        raise NumericError("numeric overflow in primitive 'power': negative base")
    out = np.power(av, p)

    def vjp(g):
        if p == 1.0:
            return (g,)
        if p == 2.0:
            return (g * 2.0 * av,)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p * np.power(av, p - 1.0)
        d = np.where(np.isfinite(d), d, 0.0)
        return (g * d,)

    return _record("power", (a,), out, vjp, p=p)


def concat(a, b) -> Var:
    """Concatenate along the last axis."""
    av, bv = _val(a), _val(b)
    if av.ndim != bv.ndim or av.shape[:-1] != bv.shape[:-1]:
        raise ShapeError(f"concat: shapes {av.shape} and {bv.shape} do not conform")
    cut = av.shape[-1]
    return _record(
        "concat",
        (a, b),
        np.concatenate([av, bv], axis=-1),
        lambda g: (g[..., :cut], g[..., cut:]),
    )


def inner(a, b) -> Var:
    """Inner product of two vectors of equal length."""
    av, bv = _val(a), _val(b)
    if av.ndim != 1:
        raise ShapeError(f"inner: expected vectors, got shape {av.shape}")
    _same_shape("inner", av, bv)
    return _record("inner", (a, b), np.asarray(av @ bv), lambda g: (g * bv, g * av))


def total(a) -> Var:
    """Sum of all entries."""
    av = _val(a)
    return _record("sum", (a,), np.asarray(av.sum()), lambda g: (np.full(av.shape, g),))


def mean(a) -> Var:
    av = _val(a)
    n = av.size
    return _record("mean", (a,), np.asarray(av.mean()), lambda g: (np.full(av.shape, g / n),))


def row_norms(a) -> Var:
    """L2 norm of every row of a matrix. The derivative at a zero row is 0."""
    av = _val(a)
    if av.ndim != 2:
        raise ShapeError(f"row_norms: expected a matrix, got shape {av.shape}")
    out = np.sqrt(np.einsum("ij,ij->i", av, av))

    def vjp(g):
        safe = np.where(out > 0.0, out, 1.0)
        return (av * (g / safe)[:, None] * (out > 0.0)[:, None],)

    return _record("row_norms", (a,), out, vjp)


def gather_columns(a, perm: np.ndarray, _checked: bool = False) -> Var:
    """``out[n, l] = a[perm[n, l], l]`` where every column of ``perm`` is a permutation.

    The backward pass scatters the incoming gradient through the same
    permutation.
    """
    av = _val(a)
    perm = np.asarray(perm)
    if perm.shape != av.shape or av.ndim != 2:
        raise ShapeError(f"gather: index shape {perm.shape} does not match {av.shape}")
    if not _checked and not np.array_equal(
        np.sort(perm, axis=0), np.broadcast_to(np.arange(av.shape[0])[:, None], av.shape)
    ):
        raise ContractError("gather: indices are not a permutation of each column")
    return _gather(a, av, perm)


def _gather(a, av, perm):
    flat = (perm * av.shape[1] + np.arange(av.shape[1])).reshape(-1)
    out = av.reshape(-1)[flat].reshape(av.shape)

    def vjp(g):
        grad = np.empty(g.size)
        grad[flat] = g.reshape(-1)
        return (grad.reshape(g.shape),)

    return _record("gather", (a,), out, vjp, perm=perm)


def sort_columns(a) -> Var:
    """Sort each column ascending; the permutation is frozen for the backward pass."""
    av = _val(a)
    return _gather(a, av, stable_argsort(av))


def stable_argsort(x: np.ndarray) -> np.ndarray:
    """Column-wise argsort with ties broken by row index."""
    perm = np.argsort(x, axis=0)
    if x.shape[0] > 1:
        s = x.reshape(-1)[perm * x.shape[1] + np.arange(x.shape[1])]
        if np.any(s[1:] == s[:-1]):
            # quicksort leaves equal values in arbitrary order
            perm = np.argsort(x, axis=0, kind="stable")
    return perm


def pairwise_distance(a, centers) -> Var:
    """``out[n, l] = ||a[n] - centers[l]||_2``; gradient flows to ``a`` only."""
    av = _val(a)
    cv = _val(centers)
    if av.ndim != 2 or cv.ndim != 2 or av.shape[1] != cv.shape[1]:
        raise ShapeError(f"pairwise_distance: shapes {av.shape} and {cv.shape} do not conform")
    diff = av[:, None, :] - cv[None, :, :]
    out = np.sqrt(np.einsum("nld,nld->nl", diff, diff))

    def vjp(g):
        safe = np.where(out > 0.0, out, np.inf)
        return (np.einsum("nl,nld->nd", g / safe, diff),)

    return _record("pairwise_distance", (a,), out, vjp)


def monomials(a, table: np.ndarray) -> Var:
    """``out[n, i] = prod_j a[n, j] ** table[i, j]`` for a table of integer exponents."""
    av = _val(a)
    table = np.asarray(table, dtype=np.int64)
    if av.ndim != 2 or table.ndim != 2 or table.shape[1] != av.shape[1]:
        raise ShapeError(f"monomials: shapes {av.shape} and {table.shape} do not conform")
    out = monomial_features(av, table)

    def vjp(g):
        grad = np.zeros_like(av)
        for j in range(av.shape[1]):
            e = table[:, j]
            lowered = table.copy()
            lowered[:, j] = np.maximum(e - 1, 0)
            d = monomial_features(av, lowered) * e[None, :]
            grad[:, j] = np.einsum("ni,ni->n", g, d)
        return (grad,)

    return _record("monomials", (a,), out, vjp, table=table)


def monomial_features(x: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Plain-numpy monomial evaluation shared by :func:`monomials`."""
    out = np.ones((x.shape[0], table.shape[0]))
    for j in range(x.shape[1]):
        out = out * np.power(x[:, j : j + 1], table[None, :, j])
    return out


_REPLAY.update(
    add=lambda n, a, b: a + b,
    add_row=lambda n, a, b: a + b,
    sub=lambda n, a, b: a - b,
    mul=lambda n, a, b: a * b,
    scale=lambda n, a: a * n.saved["c"],
    matmul=lambda n, a, b: a @ b,
    transpose=lambda n, a: a.T.copy(),
    reshape=lambda n, a: a.reshape(n.saved["shape"]),
    relu=lambda n, a: np.where(a > 0.0, a, 0.0),
    abs=lambda n, a: np.abs(a),
    power=lambda n, a: np.power(a, n.saved["p"]),
    concat=lambda n, a, b: np.concatenate([a, b], axis=-1),
    inner=lambda n, a, b: np.asarray(a @ b),
    sum=lambda n, a: np.asarray(a.sum()),
    mean=lambda n, a: np.asarray(a.mean()),
    row_norms=lambda n, a: np.sqrt(np.einsum("ij,ij->i", a, a)),
    gather=lambda n, a: np.take_along_axis(a, n.saved["perm"], axis=0),
    monomials=lambda n, a: monomial_features(a, n.saved["table"]),
)


# ---------------------------------------------------------------------------
# reverse pass


def backward(output: Var) -> None:
    """Accumulate d(output)/d(leaf) into every watched parameter's ``grad``.

    Intermediate adjoints are discarded when the pass finishes.
    """
    if output.value.size != 1 or output.value.ndim not in (0, 1):
        raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
    tape = output.tape
    nodes = tape.nodes
    adj: dict[int, Tensor] = {output.index: np.ones_like(output.value)}
    for i in range(output.index, -1, -1):
        g = adj.pop(i, None)
        if g is None:
            continue
        node = nodes[i]
        if node.op == "leaf":
            node.param.grad = node.param.grad + g
            continue
        if node.vjp is None:
            continue
        for p, gp in zip(node.parents, node.vjp(g)):
            if nodes[p].op == "const":
                continue
            prev = adj.get(p)
            adj[p] = gp if prev is None else prev + gp


def gradient_check(fn: Callable[[Tape, Var], Var], point, step: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``fn(tape, x)`` must build a scalar from the watched input ``x``. The
    relative error per coordinate is ``|a - b| / max(|a|, |b|)``, and 0 when
    both are 0.
    """
    if step <= 0:
        raise ContractError("gradient_check: step must be positive")
    point = as_tensor(point)
    p = Parameter(point)
    tape = Tape()
    out = fn(tape, tape.watch(p))
    backward(out)
    analytic = p.grad

    def f(x):
        t = Tape()
        val = fn(t, t.constant(x)).item()
        if not np.isfinite(val):
            raise NumericError("gradient_check: non-finite evaluation")
        return val

    numeric = np.empty_like(point)
    flat = point.reshape(-1)
    for i in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += step
        minus[i] -= step
        numeric.reshape(-1)[i] = (
            f(plus.reshape(point.shape)) - f(minus.reshape(point.shape))
        ) / (2.0 * step)
    return relative_error(analytic, numeric)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.abs(a), np.abs(b))
    err = np.where(denom > 0, np.abs(a - b) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(err.max()) if err.size else 0.0


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    shape: tuple
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Tensor = field(default=None)  # type: ignore[assignment]
    v: Tensor = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.lr <= 0:
            raise ContractError("Adam learning rate must be positive")
        self.shape = tuple(self.shape)
        if self.m is None:
            self.m = np.zeros(self.shape)
        if self.v is None:
            self.v = np.zeros(self.shape)

    @classmethod
    def for_param(cls, param: Parameter, **kw) -> "AdamState":
        return cls(param.shape, **kw)


def adam_step(param: Parameter, state: AdamState, maximize: bool = False) -> None:
    """One bias-corrected Adam update of ``param`` from ``param.grad``.

    The gradient is reset to zero afterwards. ``maximize`` ascends instead.
    """
    if state.m.shape != param.shape or state.v.shape != param.shape:
        raise ContractError(
            f"Adam state shape {state.m.shape} does not match parameter {param.shape}"
        )
    g = -param.grad if maximize else param.grad
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    param.value = param.value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    param.zero_grad()


class Adam:
    """Adam over a fixed list of parameters."""

    def __init__(self, params: Sequence[Parameter], lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.states = [
            AdamState.for_param(p, lr=lr, beta1=beta1, beta2=beta2, eps=eps) for p in self.params
        ]

    def step(self, maximize: bool = False):
        for p, s in zip(self.params, self.states):
            adam_step(p, s, maximize=maximize)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
