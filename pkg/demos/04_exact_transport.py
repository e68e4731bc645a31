"""
Exact transport between point clouds
====================================

With equal sample counts and uniform weights an optimal plan is a
permutation, found by a linear assignment solver. Sliced estimates never
exceed this exact value.
"""
import numpy as np

from aswd.exact_ot import cost_matrix, exact_wasserstein, solve_assignment
from aswd.metrics import sample_unit_sphere, swd

rng = np.random.default_rng(3)
X = rng.normal(size=(6, 2))
Y = X[::-1] + 0.1

a = solve_assignment(cost_matrix(X, Y))
print("optimal matching:", a.permutation, "cost", a.cost)

X = rng.normal(size=(400, 2))
Y = rng.normal(size=(400, 2)) + [3.0, 0.0]
exact = exact_wasserstein(X, Y)
print("exact W2:", exact)
for L in (1, 10, 100):
    print(f"SWD with {L:3d} directions:", swd(X, Y, sample_unit_sphere(L, 2, seed=L)))
