import time
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cablelab.elliptic import DirichletSolver
from cablelab.exact import (
    _abs_linear_integral,
    as_rational,
    oscillation,
    rational_str,
    rh_counterexample,
    sg_extend,
    solve_exact,
    vicsek_extend,
)
from cablelab.fractal import build_sierpinski, build_vicsek, enumerate_skeletons
from cablelab.mesh import refine

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=50)


def test_rational_helpers():
    assert as_rational("3/6") == F(1, 2)
    assert rational_str(F(-4, 6)) == "-2/3"
    with pytest.raises(TypeError):
        as_rational(0.5)


def test_two_fifths_rule():
    hf = sg_extend(1, 0, 0, 1)
    assert (hf.at([1, 0]), hf.at([1, 1]), hf.at([0, 1])) == (F(2, 5), F(1, 5), F(2, 5))


@given(rationals, rationals, rationals)
def test_depth_two_corner_weights(a1, a2, a3):
    hf = sg_extend(a1, a2, a3, 2)
    assert hf.at([1, 0]) == F(16, 25) * a1 + F(5, 25) * a2 + F(4, 25) * a3
    assert hf.at([0, 1]) == F(16, 25) * a1 + F(4, 25) * a2 + F(5, 25) * a3


@given(rationals, st.integers(0, 4))
def test_constants_are_harmonic(c, depth):
    assert set(sg_extend(c, c, c, depth).values) == {c}
    assert set(vicsek_extend([c] * 4, depth).values) == {c}


@given(rationals, rationals, rationals, st.integers(1, 4))
def test_sg_kirchhoff_exact(a1, a2, a3, depth):
    hf = sg_extend(a1, a2, a3, depth)
    assert all(r == 0 for r in hf.kirchhoff_residual().values())


@given(st.lists(rationals, min_size=4, max_size=4), st.integers(1, 3))
def test_vicsek_kirchhoff_exact(b, level):
    hf = vicsek_extend(b, level)
    assert all(r == 0 for r in hf.kirchhoff_residual().values())


def test_maximum_principle_many_tuples():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        a = [F(int(x), int(d)) for x, d in zip(rng.integers(-20, 21, 3), rng.integers(1, 9, 3))]
        hf = sg_extend(*a, 1)
        assert min(a) <= min(hf.values) and max(hf.values) <= max(a)


@pytest.mark.parametrize("level", [2, 3, 4])
def test_vicsek_q0_identity(level):
    rng = np.random.default_rng(level)
    b = [F(int(x), 7) for x in rng.integers(-10, 11, 4)]
    hf = vicsek_extend(b, level)
    s = 3**level
    q0 = hf.at([2 * 3 ** (level - 2)] * 2)
    assert q0 == F(7, 9) * b[0] + F(2, 9) * hf.at([s, s])


def test_vicsek_alternating_data():
    hf = vicsek_extend([1, -1, 1, -1], 2)
    assert hf.at([9, 9]) == 0
    for i in range(10):
        assert hf.at([i, i]) == 1 - F(i, 9)


@given(st.lists(st.fractions(0, 1, max_denominator=20), min_size=3, max_size=3), st.booleans())
def test_barriers(rest, neg):
    # u(q1) = 1 is the largest boundary value in absolute terms
    signs = [-1 if neg else 1, 1, -1]
    b = [F(1)] + [s * x for s, x in zip(signs, rest)]
    hv = vicsek_extend(b, 3)
    w0 = [i for i, c in enumerate(hv.graph.coords.tolist()) if max(c) <= 6]
    assert min(hv.values[i] for i in w0) >= F(5, 9)
    hs = sg_extend(b[0], b[1], b[2], 3)
    w0 = [i for i, c in enumerate(hs.graph.coords.tolist()) if sum(c) <= 2]
    assert min(hs.values[i] for i in w0) >= F(7, 25)


def test_oscillation():
    hf = sg_extend(1, 0, 0, 1)
    cell = [c for c in hf.cells(0) if c.offset == (0, 0)][0]
    assert oscillation(hf, cell) == F(3, 5)
    assert oscillation(sg_extend(2, 2, 2, 2), hf.cells(0)[1]) == 0


@given(rationals, rationals, rationals)
def test_oscillation_decay_three_fifths(a1, a2, a3):
    hf = sg_extend(a1, a2, a3, 3)
    top = max(a1, a2, a3) - min(a1, a2, a3)
    for k in range(4):
        for cell in enumerate_skeletons(hf.graph, k):
            assert oscillation(hf, cell) <= F(3, 5) ** (3 - k) * top


def test_exact_matches_float_solve():
    g = build_sierpinski(4)
    hf = sg_extend(1, 0, 0, 4)
    s = DirichletSolver(refine(g, 1), np.setdiff1d(np.arange(g.n_vertices), g.corner_ids), "cg")
    bv = np.array([float(hf.values[i]) for i in s.bnd])
    assert np.max(np.abs(s.solve(bv) - hf.as_float())) < 1e-10
    gv = build_vicsek(2, 2)
    hv = vicsek_extend([F(1, 3), 2, -1, F(5, 7)], 2)
    s = DirichletSolver(refine(gv, 1), np.setdiff1d(np.arange(gv.n_vertices), gv.corner_ids), "direct")
    bv = np.array([float(hv.values[i]) for i in s.bnd])
    assert np.max(np.abs(s.solve(bv) - hv.as_float())) < 1e-10


def test_rational_elimination_oracle():
    g = build_sierpinski(2)
    hf = sg_extend(F(1, 2), -1, 3, 2)
    vals = solve_exact(g, hf.boundary_ids, hf.boundary_values)
    assert tuple(vals) == hf.values
    gv = build_vicsek(2, 1)
    hv = vicsek_extend([1, 2, 3, 4], 1)
    assert tuple(solve_exact(gv, hv.boundary_ids, hv.boundary_values)) == hv.values


def test_counterexample_gradient():
    assert rh_counterexample(0).gradient == F(3, 5)
    assert rh_counterexample(2).gradient == F(27, 125)
    for n in range(9):
        assert rh_counterexample(n).gradient == F(3, 5) ** (n + 1)


def test_counterexample_gradient_from_values():
    # the slope on the cable leaving the junction, read off the exact values
    for n in range(4):
        ce = rh_counterexample(n)
        hf = ce.cell_values()
        S = 2 ** (n + 1)
        assert abs(hf.at([S, 0]) - hf.at([S - 1, 0])) == ce.gradient
        assert abs(hf.at([S - 1, 1]) - hf.at([S, 0])) == ce.gradient


def test_counterexample_ratio_grows():
    ratios = [rh_counterexample(n).rh_ratio for n in range(9)]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert all(rh_counterexample(n).average_abs <= 1 for n in range(6))


def test_abs_linear_integral():
    assert _abs_linear_integral(F(1), F(-1)) == F(1, 2)
    assert _abs_linear_integral(F(2), F(4)) == 3
    assert _abs_linear_integral(F(-3), F(0)) == F(3, 2)


def test_budget_under_one_second():
    t = time.perf_counter()
    sg_extend(1, 0, 0, 1)
    sg_extend(F(1), F(2), F(3), 2)
    [rh_counterexample(n).gradient for n in range(9)]
    vicsek_extend([1, 2, 3, 4], 3)
    assert time.perf_counter() - t < 1.0
