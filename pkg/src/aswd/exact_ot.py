"""Exact Wasserstein distance between equal-size uniform empirical measures.

With N points on each side and uniform weights an optimal coupling can be
taken to be a permutation, so the transport problem is a linear assignment.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import fsum

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import ContractError, ShapeError


@dataclass(frozen=True)
class Assignment:
    permutation: np.ndarray
    cost: float


def _check_pair(X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape != Y.shape:
        raise ShapeError(f"sample sets must be N x d with equal shapes, got {X.shape} and {Y.shape}")
    return X, Y


def cost_matrix(X, Y, k: float = 2.0) -> np.ndarray:
    """``C[i, j] = ||x_i - y_j||_2^k``."""
    X, Y = _check_pair(X, Y)
    if k == 2:
        return cdist(X, Y, "sqeuclidean")
    return cdist(X, Y) ** k


def solve_assignment(cost) -> Assignment:
    """Minimum-cost permutation of a square cost matrix.

    ``cost`` is the correctly rounded sum of ``C[i, sigma(i)]``, so it does
    not depend on the order of the rows.
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ShapeError(f"cost matrix must be square, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ContractError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(C.shape[0], dtype=np.int64)
    perm[rows] = cols
    return Assignment(perm, fsum(C[np.arange(C.shape[0]), perm]))


def exact_wasserstein(X, Y, k: float = 2.0) -> float:
    """``W_k`` between the uniform empirical measures on the rows of X and Y."""
    X, Y = _check_pair(X, Y)
    a = solve_assignment(cost_matrix(X, Y, k))
    return max(a.cost / X.shape[0], 0.0) ** (1.0 / k)
