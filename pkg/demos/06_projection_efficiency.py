"""
How many directions see the difference?
=======================================

Two 100-dimensional Gaussians that differ by a shift of norm 5. A random
linear direction is nearly orthogonal to the shift, so most SWD slices report
small distances. The augmented projector's slices are histogrammed alongside.
"""
from aswd.cli import HistogramSection, histogram_pair

for lr in (0.002, 0.05):
    sec = HistogramSection(dim=100, shift=5.0, n=500, L=1000, lr=lr)
    h_swd, h_aswd = histogram_pair(sec, seed=0)
    print(f"network lr {lr}: mean slice distance swd {h_swd.mean:.3f}, aswd {h_aswd.mean:.3f}")
    for name, h in (("swd", h_swd), ("aswd", h_aswd)):
        bars = " ".join(f"{c:3d}" for c in h.counts)
        print(f"  {name:4s} bins up to {h.edges[-1]:.2f}: {bars}")
