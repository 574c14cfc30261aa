"""
Heat kernel decay on the gasket cable system
============================================

The heat kernel of the cable system behaves like the Euclidean one for
short times and like the fractal's sub-Gaussian kernel for long times.
This script computes kernel columns from a few sources, reads off the
on-diagonal decay and the gradient decay, and fits the envelope constants.
"""

# %%
# A generation-6 gasket core with four mesh segments per cable.
import numpy as np

from cablelab import ScalingLaws, build_sierpinski, refine
from cablelab.heat import HeatScan
from cablelab.heat import gradient_decay_slope, on_diagonal_slope, verify_ghk, verify_uhk

mesh = refine(build_sierpinski(6), 4)
laws = ScalingLaws.sierpinski()
sources = [int(mesh.base.vertex_id(c)) for c in ([16, 0], [16, 16])]
print(mesh.n_nodes, "nodes")

# %%
# Columns ``p_t(x, .)`` for times spread over more than an order of magnitude.
times = np.geomspace(4, 100, 8)
scan = HeatScan.run(mesh, sources, times)
for x in sources:
    print(x, "on-diagonal slope", round(on_diagonal_slope(scan, x), 3), "target", round(-laws.alpha / laws.beta, 3))
    print(x, "gradient slope", round(gradient_decay_slope(scan, x), 3), "target", round(-laws.gradient_gap, 3))

# %%
# Envelope constants.  Each ratio compares the kernel with the volume and
# Upsilon factors of the upper bound; the fitted constant is their supremum.
uhk = verify_uhk(scan)
ghk = verify_ghk(scan)
print("UHK", uhk.fitted_constant, "near-diagonal lower constant", uhk.notes["nle_c"])
print("GHK", ghk.fitted_constant)
for t, v in sorted(ghk.notes["by_time"].items()):
    print(f"  t={t:7.2f}  sup ratio {v:.4f}")
