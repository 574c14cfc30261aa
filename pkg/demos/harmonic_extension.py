"""
Exact harmonic extension on the gasket and Vicsek cells
=======================================================

Harmonic functions on a gasket skeleton are determined by their three
corner values; every finer vertex follows from a rational averaging rule.
This script walks through the rule, the loss of oscillation per level, and
the family of functions whose gradient defeats the classical reverse
Hoelder inequality on the gasket.
"""

# %%
# The averaging rule.  Corner data (1, 0, 0) gives the three midpoints.
from fractions import Fraction

from cablelab.exact import oscillation, rh_counterexample, sg_extend, vicsek_extend

hf = sg_extend(1, 0, 0, 1)
for coord in ([1, 0], [1, 1], [0, 1]):
    print(coord, hf.at(coord))

# %%
# Two levels down the corner vertex next to ``q1`` carries weights
# 16/25, 5/25 and 4/25.
a = [Fraction(3), Fraction(-1), Fraction(2)]
h2 = sg_extend(*a, 2)
print(h2.at([1, 0]), Fraction(16, 25) * a[0] + Fraction(5, 25) * a[1] + Fraction(4, 25) * a[2])

# %%
# Oscillation drops by 3/5 each time the cell side halves.  ``cells(k)``
# lists the cells of side ``2**k``.
h4 = sg_extend(1, 0, 0, 4)
for k in range(4, -1, -1):
    print("side", 2**k, max(oscillation(h4, c) for c in h4.cells(k)))

# %%
# Kirchhoff's law holds exactly at every interior vertex.
print(set(h4.kirchhoff_residual().values()))

# %%
# On a Vicsek cell the corner-to-centre diagonal is linear, so the value
# one third of the way in is 7/9 of the corner plus 2/9 of the centre.
hv = vicsek_extend([1, -1, 1, -1], 2)
print([str(hv.at([i, i])) for i in range(0, 10, 3)])

# %%
# The gasket counterexample: the gradient at the junction shrinks like
# (3/5)^(n+1) while the radius doubles, so ``r |grad u| / avg |u|`` grows
# by a factor approaching 6/5 per doubling.
prev = None
for n in range(9):
    ce = rh_counterexample(n)
    ratio = float(ce.rh_ratio)
    print(n, ce.gradient, f"{ratio:.4f}", "" if prev is None else f"x{ratio / prev:.4f}")
    prev = ratio
