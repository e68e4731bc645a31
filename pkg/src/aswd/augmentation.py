"""Augmented sliced Wasserstein distance.

Samples are pushed through a mapping ``g`` before being sliced by random
directions. With ``g(x) = [x, phi(x)]`` the mapping is injective for any
``phi``, which is what makes the resulting distance a metric. ``phi`` is a
single fully connected layer with a ReLU, trained to maximize the sliced
distance of the mapped samples minus a penalty on the mapped norms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Parameter, Tape, Var
from .errors import ConfigError, ContractError, NumericError, ShapeError
from .metrics import ProjectionSet, _lift_pair, sample_unit_sphere, sliced_from_projections

MODES = ("injective", "raw", "identity")


class AugmentationNetwork:
    """``phi(x) = ReLU(x W + b)`` plus the rule for assembling ``g`` from it.

    mode ``injective``  g(x) = [x, phi(x)], output dimension 2d
    mode ``raw``        g(x) = phi(x), output dimension d (not injective in general)
    mode ``identity``   g(x) = x, no trainable parameters
    """

    def __init__(self, weight, bias, mode: str = "injective", lam: float = 0.1):
        if mode not in MODES:
            raise ConfigError(f"unknown augmentation mode {mode!r}; expected one of {MODES}")
        if lam < 0:
            raise ConfigError(f"regularization lambda must be >= 0, got {lam}")
        self.weight = Parameter(weight)
        self.bias = Parameter(bias)
        d = self.weight.shape[0]
        if self.weight.shape != (d, d) or self.bias.shape != (d,):
            raise ShapeError(
                f"expected a {d}x{d} weight and length-{d} bias, got "
                f"{self.weight.shape} and {self.bias.shape}"
            )
        self.mode = mode
        self.lam = float(lam)

    @classmethod
    def random(cls, d: int, seed=None, mode: str = "injective", lam: float = 0.1):
        """Weights uniform in [-1/sqrt(d), 1/sqrt(d)], zero biases."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(d)
        return cls(rng.uniform(-bound, bound, (d, d)), np.zeros(d), mode, lam)

    @classmethod
    def identity(cls, d: int, lam: float = 0.0):
        return cls(np.zeros((d, d)), np.zeros(d), "identity", lam)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    @property
    def output_dim(self) -> int:
        return 2 * self.dim if self.mode == "injective" else self.dim

    def parameters(self) -> list[Parameter]:
        return [] if self.mode == "identity" else [self.weight, self.bias]

    def copy(self) -> "AugmentationNetwork":
        return AugmentationNetwork(self.weight.value, self.bias.value, self.mode, self.lam)

    def phi(self, X: Var, train: bool = False) -> Var:
        tape = X.tape
        if X.shape[1] != self.dim:
            raise ShapeError(f"network expects dimension {self.dim}, samples have {X.shape[1]}")
        if train:
            W, b = tape.watch(self.weight), tape.watch(self.bias)
        else:
            W, b = tape.constant(self.weight.value), tape.constant(self.bias.value)
        return ad.relu(ad.add(ad.matmul(X, W), b))

    def __call__(self, X: Var, train: bool = False) -> Var:
        if X.shape[1] != self.dim:
            raise ShapeError(f"network expects dimension {self.dim}, samples have {X.shape[1]}")
        if self.mode == "identity":
            return X
        h = self.phi(X, train)
        return ad.concat(X, h) if self.mode == "injective" else h

    def numpy(self, X: np.ndarray) -> np.ndarray:
        """Apply ``g`` to a plain array."""
        return self(Tape().constant(X)).value


class MonomialMap:
    """``g(x) = (x^{alpha_1}, ..., x^{alpha_D})`` for a fixed exponent table."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.int64)

    @property
    def output_dim(self) -> int:
        return self.table.shape[0]

    def __call__(self, X: Var, train: bool = False) -> Var:
        return ad.monomials(X, self.table)


def _apply(net, X):
    """Run ``net`` on X, returning (result, recorded?)."""
    if isinstance(X, Var):
        return net(X), True
    return net(Tape().constant(X)), False


def phi_forward(net: AugmentationNetwork, X):
    """``ReLU(X W + b)``; a ``Var`` in gives a ``Var`` out."""
    out, recorded = _apply(net.phi, X)
    return out if recorded else out.value


def injective_forward(net: AugmentationNetwork, X):
    """The mapping ``g`` of ``net`` applied row-wise."""
    out, recorded = _apply(net, X)
    return out if recorded else out.value


def spatial_radon_project(net, X, proj: ProjectionSet):
    """N x L matrix of ``<g(x_n), theta_l>``.

    ``net`` is anything callable on a recorded sample set that has an
    ``output_dim``, such as :class:`AugmentationNetwork` or :class:`MonomialMap`.
    """
    G, recorded = _apply(net, X)
    if proj.dim != G.shape[1]:
        raise ShapeError(f"directions have dimension {proj.dim}, mapped samples {G.shape[1]}")
    out = ad.matmul(G, proj.directions.T)
    return out if recorded else out.value


def _regularizer(net: AugmentationNetwork, GX: Var, GY: Var) -> Var:
    return ad.scale(ad.add(ad.mean(ad.row_norms(GX)), ad.mean(ad.row_norms(GY))), net.lam)


def regularizer(net: AugmentationNetwork, X, Y):
    """``lam * (1/N) * sum_n (||g(x_n)|| + ||g(y_n)||)``."""
    tape, Xv, Yv, recorded = _lift_pair(X, Y)
    out = _regularizer(net, net(Xv), net(Yv))
    return out if recorded else out.item()


def objective(net: AugmentationNetwork, X, Y, proj: ProjectionSet, k: float = 2.0, train: bool = False):
    """Training objective: sliced distance of the mapped samples minus the norm penalty.

    With ``train=True`` the network parameters are watched on the tape, so
    :func:`~aswd.autodiff.backward` fills their gradients.
    """
    tape, Xv, Yv, recorded = _lift_pair(X, Y)
    GX, GY = net(Xv, train), net(Yv, train)
    t = proj.directions.T
    dist = sliced_from_projections(ad.matmul(GX, t), ad.matmul(GY, t), k)
    out = ad.sub(dist, _regularizer(net, GX, GY))
    return out if (recorded or train) else out.item()


@dataclass
class OptimizationReport:
    trace: list = field(default_factory=list)
    final_regularizer: float = 0.0
    seed: int | None = None


def optimize_network(
    net: AugmentationNetwork,
    X,
    Y,
    L: int = 10,
    seed=None,
    k: float = 2.0,
    M: int = 10,
    lr: float = 0.002,
    optimizer: Adam | None = None,
) -> tuple[AugmentationNetwork, OptimizationReport]:
    """Run ``M`` Adam ascent steps on :func:`objective`, redrawing the directions each step.

    ``net`` is updated in place and returned. ``seed`` is an integer or a
    generator for the direction draws. Passing ``optimizer`` keeps the Adam
    moments across calls.
    """
    if M < 0:
        raise ContractError(f"iteration budget must be >= 0, got {M}")
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    X = np.asarray(ad._val(X))
    Y = np.asarray(ad._val(Y))
    report = OptimizationReport(seed=seed if isinstance(seed, (int, np.integer)) else None)
    params = net.parameters()
    if M == 0 or not params:
        return net, report
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if optimizer is None:
        optimizer = Adam(params, lr=lr)
    for it in range(M):
        proj = sample_unit_sphere(L, net.output_dim, rng)
        tape = Tape()
        try:
            obj = objective(net, tape.constant(X), tape.constant(Y), proj, k, train=True)
        except NumericError as exc:
            raise NumericError(f"network optimization iteration {it}: {exc}") from exc
        value = obj.item()
        if not np.isfinite(value):
            raise NumericError(f"network optimization iteration {it}: non-finite objective")
        report.trace.append(value)
        ad.backward(obj)
        optimizer.step(maximize=True)
    report.final_regularizer = regularizer(net, X, Y)
    return net, report


def aswd_fixed(X, Y, net, proj: ProjectionSet, k: float = 2.0):
    """Sliced distance between ``g(X)`` and ``g(Y)`` for a given mapping and directions."""
    tape, Xv, Yv, recorded = _lift_pair(X, Y)
    t = proj.directions.T
    out = sliced_from_projections(ad.matmul(net(Xv), t), ad.matmul(net(Yv), t), k)
    return out if recorded else out.item()


def aswd(
    X,
    Y,
    L: int = 10,
    k: float = 2.0,
    lam: float = 0.1,
    M: int = 10,
    lr: float = 0.002,
    seed: int | None = 0,
    mode: str = "injective",
):
    """Train an augmentation network on (X, Y), then evaluate on fresh directions.

    Returns ``(distance, net)``. The distance is a ``Var`` when X or Y is one,
    with the trained network held fixed.
    """
    Xa, Ya = ad._val(X), ad._val(Y)
    if Xa.ndim != 2 or Xa.shape != Ya.shape:
        raise ShapeError(f"sample sets must be N x d with equal shapes, got {Xa.shape} and {Ya.shape}")
    init_ss, train_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
    d = Xa.shape[1]
    if mode == "identity":
        net = AugmentationNetwork.identity(d, lam)
    else:
        net = AugmentationNetwork.random(d, np.random.default_rng(init_ss), mode, lam)
    optimize_network(net, Xa, Ya, L, np.random.default_rng(train_ss), k, M, lr)
    proj = sample_unit_sphere(L, net.output_dim, np.random.default_rng(eval_ss))
    return aswd_fixed(X, Y, net, proj, k), net


# ---------------------------------------------------------------------------
# persistence

_HEADER = "aswd-network 1"


def save_network(net: AugmentationNetwork, path) -> None:
    """Write the network as text: a header, then shape lines each followed by row-major values."""
    W, b = net.weight.value, net.bias.value
    lines = [
        _HEADER,
        f"mode {net.mode}",
        f"lambda {net.lam!r}",
        f"weight {W.shape[0]} {W.shape[1]}",
        " ".join(repr(float(v)) for v in W.reshape(-1)),
        f"bias {b.shape[0]}",
        " ".join(repr(float(v)) for v in b),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_network(path) -> AugmentationNetwork:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _HEADER:
        raise ConfigError(f"{path}: not a saved augmentation network")
    try:
        mode = lines[1].split()[1]
        lam = float(lines[2].split()[1])
        r, c = (int(v) for v in lines[3].split()[1:])
        W = np.array([float(v) for v in lines[4].split()]).reshape(r, c)
        (n,) = (int(v) for v in lines[5].split()[1:])
        b = np.array([float(v) for v in lines[6].split()]) if n else np.zeros(0)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed network record ({exc})") from exc
    return AugmentationNetwork(W, b, mode, lam)
