"""
Sliced distances on two Gaussian clouds
=======================================

The sliced Wasserstein distance projects both sample sets on random
directions and averages the sorted 1-D matchings. Generalized variants swap
the linear projection for a polynomial or circular defining function, or for
a random ReLU layer; max-sliced searches for the single best direction.
"""
import numpy as np

from aswd.metrics import (
    DefiningFunction,
    ProjectionNet,
    gswd,
    gswd_nn,
    max_swd,
    sample_unit_sphere,
    swd,
    wasserstein_1d,
)

rng = np.random.default_rng(1)
X = rng.normal(size=(300, 2))
Y = rng.normal(size=(300, 2)) + [2.0, 0.0]

# In one dimension the optimal matching pairs sorted values.
print("W2 of a unit shift in 1-D:", wasserstein_1d(X[:, 0], X[:, 0] + 1.0))

p = sample_unit_sphere(50, 2, seed=0)
print("SWD            ", swd(X, Y, p))

poly = DefiningFunction("polynomial", degree=3, dim=2)
print("GSWD poly-3    ", gswd(X, Y, poly, sample_unit_sphere(50, poly.projection_dim(2), seed=0)))
print("GSWD circular  ", gswd(X, Y, DefiningFunction("circular", radius=1.0), p))
print("GSWD-NN        ", gswd_nn(X, Y, ProjectionNet.random(2, 50, seed=0)))

# The best single direction sees the whole shift, so max-SWD comes out near 2.
print("max-SWD        ", max_swd(X, Y, steps=100, seed=0))
