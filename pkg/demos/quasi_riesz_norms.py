"""
Empirical norms of the quasi-Riesz transform
============================================

The Riesz transform is not bounded on these fractals for large ``p``, but
the quasi-Riesz transform, which replaces the part at infinity by
``grad exp(-Delta) Delta^-eps``, is.  We estimate its operator norms on a
battery of test functions and watch them across generations.
"""

# %%
from cablelab import ScalingLaws
from cablelab.riesz import lp_norm_scan

laws = ScalingLaws.vicsek(2)
eps = laws.gradient_gap / 2
print("eps =", round(eps, 4))

# %%
# Quasi-Riesz norms for three exponents; a flat sequence means bounded.
reports = lp_norm_scan("quasi", "vicsek", [2, 3, 4], ps=(1.5, 2.0, 4.0), eps=eps, n_samples=60)
for p, rep in reports.items():
    print(f"p={p:g}", [round(n, 4) for n in rep.norms], "slope", round(rep.slope, 4), rep.to_dict()["verdict"])

# %%
# The local part alone is an L^2 contraction.
local = lp_norm_scan("local", "vicsek", [2, 3, 4], ps=(2.0,), n_samples=60)[2.0]
print([round(n, 4) for n in local.norms])
