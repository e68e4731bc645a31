"""Sliced distances between equal-size empirical measures.

Every distance accepts plain arrays or recorded :class:`~aswd.autodiff.Var`
sample sets. With arrays the result is a ``float``; when an argument is a
``Var`` the result is a scalar ``Var`` on the same tape, ready for
:func:`~aswd.autodiff.backward`.

One-dimensional distances use the quantile-matching estimator

    W_k^k(u, v) = (1/N) * sum_n |u_(n) - v_(n)|^k

over ascending-sorted values, and a sliced distance averages ``W_k^k`` over
the directions before taking the k-th root.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Var
from .errors import ConfigError, ContractError, ShapeError


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class ProjectionSet:
    """``L`` unit directions in ``R^d``, stored as the rows of ``directions``."""

    directions: np.ndarray
    seed: int | None = None

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


def sample_unit_sphere(L: int, dim: int, seed=None) -> ProjectionSet:
    """Draw ``L`` directions uniformly on the sphere ``S^{dim-1}``.

    ``seed`` may be an integer or a ``numpy.random.Generator``; the latter is
    advanced in place so successive calls give fresh directions.
    """
    if L < 1 or dim < 1:
        raise ContractError(f"need L >= 1 and dim >= 1, got L={L}, dim={dim}")
    rng = _rng(seed)
    theta = rng.standard_normal((L, dim))
    norms = np.linalg.norm(theta, axis=1)
    while np.any(norms == 0.0):
        bad = norms == 0.0
        theta[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(theta, axis=1)
    theta = theta / norms[:, None]
    return ProjectionSet(theta, seed if isinstance(seed, (int, np.integer)) else None)


def enumerate_multi_indices(d: int, m: int) -> np.ndarray:
    """All exponent vectors of length ``d`` summing to ``m``, in descending lexicographic order.

    >>> enumerate_multi_indices(2, 3).tolist()
    [[3, 0], [2, 1], [1, 2], [0, 3]]
    """
    if d < 1 or m < 1:
        raise ContractError(f"need d >= 1 and m >= 1, got d={d}, m={m}")

    def rec(dims, total):
        if dims == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in rec(dims - 1, total - first):
                yield (first,) + rest

    table = np.array(list(rec(d, m)), dtype=np.int64)
    assert table.shape[0] == comb(m + d - 1, d - 1)
    return table


@dataclass
class DefiningFunction:
    """Defining function ``beta(x, theta)`` of a generalized Radon transform.

    ``linear``      beta = <x, theta>
    ``polynomial``  beta = sum_i theta_i x^{alpha_i}, odd homogeneous degree
    ``circular``    beta = ||x - r theta||_2
    """

    kind: str = "linear"
    degree: int = 3
    radius: float = 1.0
    dim: int | None = None
    table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "circular"):
            raise ConfigError(f"unknown defining function kind {self.kind!r}")
        if self.kind == "polynomial":
            if self.degree < 1 or self.degree % 2 == 0:
                raise ConfigError(
                    f"polynomial defining function needs an odd degree, got {self.degree}"
                )
            if self.dim is not None and self.table is None:
                self.table = enumerate_multi_indices(self.dim, self.degree)
        if self.kind == "circular" and not self.radius > 0:
            raise ConfigError(f"circular radius must be positive, got {self.radius}")

    def projection_dim(self, d: int) -> int:
        if self.kind == "polynomial":
            return comb(self.degree + d - 1, d - 1)
        return d

    def project(self, X, theta: np.ndarray):
        """``beta(x_n, theta_l)`` for every sample and direction, as an N x L matrix."""
        d = ad._val(X).shape[1]
        if theta.shape[1] != self.projection_dim(d):
            raise ShapeError(
                f"{self.kind} defining function on d={d} needs directions of "
                f"dimension {self.projection_dim(d)}, got {theta.shape[1]}"
            )
        if self.kind == "linear":
            return ad.matmul(X, theta.T)
        if self.kind == "polynomial":
            table = self.table
            if table is None or table.shape[1] != d:
                table = enumerate_multi_indices(d, self.degree)
            return ad.matmul(ad.monomials(X, table), theta.T)
        return ad.pairwise_distance(X, self.radius * theta)


# ---------------------------------------------------------------------------
# helpers


def _lift_pair(X, Y) -> tuple[Tape, Var, Var, bool]:
    """Put X and Y on a common tape; the flag says whether the caller passed Vars."""
    tape = None
    for a in (X, Y):
        if isinstance(a, Var):
            tape = a.tape
            break
    recorded = tape is not None or isinstance(X, Parameter) or isinstance(Y, Parameter)
    if tape is None:
        tape = Tape()
    Xv, Yv = tape.lift(X), tape.lift(Y)
    if Xv.value.ndim != 2 or Yv.value.ndim != 2:
        raise ShapeError("sample sets must be N x d matrices")
    if Xv.shape != Yv.shape:
        raise ShapeError(f"sample sets differ in shape: {Xv.shape} vs {Yv.shape}")
    return tape, Xv, Yv, recorded


def _finish(out: Var, recorded: bool):
    return out if recorded else out.item()


def sliced_from_projections(PX, PY, k: float = 2.0) -> Var:
    """``((1/L) sum_l W_k^k(PX[:, l], PY[:, l]))^{1/k}`` for N x L projected samples."""
    diff = ad.sub(ad.sort_columns(PX), ad.sort_columns(PY))
    powered = ad.power(ad.absolute(diff), k)
    return ad.power(ad.mean(powered), 1.0 / k)


def per_direction_distances(PX: np.ndarray, PY: np.ndarray, k: float = 2.0) -> np.ndarray:
    """``W_k`` between the columns of two N x L projection matrices (no tape)."""
    diff = np.sort(PX, axis=0) - np.sort(PY, axis=0)
    return np.mean(np.abs(diff) ** k, axis=0) ** (1.0 / k)


# ---------------------------------------------------------------------------
# distances


def wasserstein_1d(u, v, k: float = 2.0):
    """``W_k`` between two equal-size sets of scalars by sorting."""
    if k < 1:
        raise ContractError(f"order k must be >= 1, got {k}")
    uv, vv = ad._val(u), ad._val(v)
    if uv.ndim != 1 or vv.ndim != 1:
        raise ShapeError("wasserstein_1d expects two vectors")
    if uv.shape != vv.shape:
        raise ContractError(
            f"wasserstein_1d needs equal sample counts, got {uv.shape[0]} and {vv.shape[0]}"
        )
    tape = u.tape if isinstance(u, Var) else v.tape if isinstance(v, Var) else None
    recorded = tape is not None
    tape = tape or Tape()
    U = ad.reshape(tape.lift(u), (uv.shape[0], 1))
    V = ad.reshape(tape.lift(v), (vv.shape[0], 1))
    return _finish(sliced_from_projections(U, V, k), recorded)


def swd(X, Y, proj: ProjectionSet, k: float = 2.0):
    """Sliced Wasserstein distance with the given directions."""
    tape, Xv, Yv, recorded = _lift_pair(X, Y)
    if proj.dim != Xv.shape[1]:
        raise ShapeError(f"directions have dimension {proj.dim}, samples {Xv.shape[1]}")
    theta_t = proj.directions.T
    out = sliced_from_projections(ad.matmul(Xv, theta_t), ad.matmul(Yv, theta_t), k)
    return _finish(out, recorded)


def gswd(X, Y, fn: DefiningFunction, proj: ProjectionSet, k: float = 2.0):
    """Generalized sliced Wasserstein distance under a defining function."""
    tape, Xv, Yv, recorded = _lift_pair(X, Y)
    theta = proj.directions
    out = sliced_from_projections(fn.project(Xv, theta), fn.project(Yv, theta), k)
    return _finish(out, recorded)


@dataclass
class MaxSliceResult:
    value: float
    direction: np.ndarray
    trace: list = field(default_factory=list)


def max_swd_direction(
    X,
    Y,
    k: float = 2.0,
    steps: int = 50,
    lr: float = 0.01,
    seed=None,
    start: np.ndarray | None = None,
) -> MaxSliceResult:
    """Projected gradient ascent of ``W_k(<X, theta>, <Y, theta>)`` over unit ``theta``.

    Returns the best value seen (including the start) and its direction.
    """
    Xa, Ya = ad._val(X), ad._val(Y)
    if Xa.shape != Ya.shape or Xa.ndim != 2:
        raise ShapeError(f"sample sets differ in shape: {Xa.shape} vs {Ya.shape}")
    if start is None:
        theta = sample_unit_sphere(1, Xa.shape[1], seed).directions[0]
    else:
        theta = np.asarray(start, dtype=np.float64)
        theta = theta / np.linalg.norm(theta)
    best_val, best_theta = -np.inf, theta
    trace = []
    for i in range(steps + 1):
        p = Parameter(theta[None, :])
        tape = Tape()
        t = ad.transpose(tape.watch(p))
        val = sliced_from_projections(ad.matmul(tape.constant(Xa), t), ad.matmul(tape.constant(Ya), t), k)
        v = val.item()
        trace.append(v)
        if v > best_val:
            best_val, best_theta = v, theta
        if i == steps:
            break
        ad.backward(val)
        step = theta + lr * p.grad[0]
        n = np.linalg.norm(step)
        if n == 0.0:
            break
        theta = step / n
    return MaxSliceResult(float(best_val), best_theta, trace)


def max_swd(X, Y, k: float = 2.0, steps: int = 50, lr: float = 0.01, seed=None) -> float:
    """Max-sliced Wasserstein distance found by projected gradient ascent."""
    return max_swd_direction(X, Y, k, steps, lr, seed).value


class ProjectionNet:
    """One-layer map ``R^d -> R^L`` whose outputs serve directly as projections.

    ``activation`` is ``"relu"`` or ``"linear"``.
    """

    def __init__(self, weight, bias, activation: str = "relu"):
        self.weight = Parameter(weight)
        self.bias = Parameter(bias)
        if activation not in ("relu", "linear"):
            raise ConfigError(f"unknown activation {activation!r}")
        self.activation = activation

    @classmethod
    def random(cls, d: int, L: int, seed=None, activation: str = "relu") -> "ProjectionNet":
        rng = _rng(seed)
        bound = 1.0 / np.sqrt(d)
        return cls(rng.uniform(-bound, bound, (d, L)), np.zeros(L), activation)

    @property
    def width(self) -> int:
        return self.weight.shape[1]

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, X, tape: Tape | None = None):
        if tape is None:
            tape = X.tape
        out = ad.add(ad.matmul(X, tape.constant(self.weight.value)), tape.constant(self.bias.value))
        return ad.relu(out) if self.activation == "relu" else out


def gswd_nn(X, Y, net: ProjectionNet, k: float = 2.0):
    """Sliced distance that uses the outputs of ``net`` as the projections.

    This is only a pseudo-metric: a degenerate ``net`` maps distinct measures
    to identical projections.
    """
    tape, Xv, Yv, recorded = _lift_pair(X, Y)
    if net.weight.shape[0] != Xv.shape[1]:
        raise ShapeError(f"net expects dimension {net.weight.shape[0]}, samples have {Xv.shape[1]}")
    out = sliced_from_projections(net(Xv, tape), net(Yv, tape), k)
    return _finish(out, recorded)


@dataclass
class DistanceHistogram:
    edges: np.ndarray
    counts: np.ndarray
    distances: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.distances.mean())

    @property
    def mode_bin(self) -> int:
        return int(np.argmax(self.counts))


def projection_histogram(
    X,
    Y,
    projector: Callable[[np.ndarray], np.ndarray] | None,
    proj: ProjectionSet,
    k: float = 2.0,
    bins: int = 20,
) -> DistanceHistogram:
    """Histogram of the per-direction distances ``W_k(beta(X, theta_l), beta(Y, theta_l))``.

    ``projector`` maps an N x d array to N x d_theta before the linear
    projection; ``None`` means the identity.
    """
    if bins < 1:
        raise ContractError(f"bins must be >= 1, got {bins}")
    Xa, Ya = np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64)
    if projector is not None:
        Xa, Ya = projector(Xa), projector(Ya)
    dists = per_direction_distances(Xa @ proj.directions.T, Ya @ proj.directions.T, k)
    hi = float(dists.max())
    counts, edges = np.histogram(dists, bins=bins, range=(0.0, hi if hi > 0 else 1.0))
    return DistanceHistogram(edges, counts, dists)
