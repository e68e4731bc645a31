"""
Reverse-mode gradients on a tape
================================

Every distance in the package is built from a small set of differentiable
primitives recorded on a tape. Here we differentiate a toy loss and check the
result against central differences.
"""
import numpy as np

from aswd import autodiff as ad

rng = np.random.default_rng(0)
X = ad.Parameter(rng.normal(size=(5, 2)))

# Watch the parameter, build a scalar, sweep backwards.
tape = ad.Tape()
x = tape.watch(X)
loss = ad.total(ad.power(ad.absolute(ad.sort_columns(x)), 3.0))
ad.backward(loss)
print("loss", loss.item())
print("gradient\n", X.grad)

# The same function handed to the finite-difference checker.
err = ad.gradient_check(lambda t, v: ad.total(ad.power(ad.absolute(ad.sort_columns(v)), 3.0)), X.value)
print("max relative error vs central differences:", err)

# Adam, maximizing a concave quadratic: the iterate walks to the peak at 3.
w = ad.Parameter(np.zeros(1))
opt = ad.Adam([w], lr=0.1)
for _ in range(200):
    t = ad.Tape()
    v = t.watch(w)
    d = ad.sub(v, t.constant(np.array([3.0])))
    ad.backward(ad.scale(ad.total(ad.mul(d, d)), -1.0))
    opt.step(maximize=True)
print("Adam ascent ends at", w.value)
