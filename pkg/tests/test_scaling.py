import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cablelab.scaling import (
    ScalingLaws,
    dyadic_sum_weight,
    gap_bound,
    gap_function,
    phi,
    psi,
    psi_inv,
    upsilon,
    upsilon_asymptotic,
    upsilon_grid,
)

SG = ScalingLaws.sierpinski()
V2 = ScalingLaws.vicsek(2)


def test_family_exponents():
    assert math.isclose(SG.alpha, math.log(3) / math.log(2))
    assert math.isclose(SG.beta, math.log(5) / math.log(2))
    for N in (2, 3, 4):
        L = ScalingLaws.vicsek(N)
        assert math.isclose(L.beta, L.alpha + 1)
    assert math.isclose(V2.gradient_gap, 1 - math.log(5) / math.log(15))
    assert math.isclose(SG.tail_exponent, SG.beta / (SG.beta - 1))


def test_exponent_constraints():
    with pytest.raises(ValueError):
        ScalingLaws(1.0, 1.5)
    with pytest.raises(ValueError):
        ScalingLaws(1.0, 2.5)
    with pytest.raises(ValueError):
        ScalingLaws.for_family("carpet")


def test_breakpoints():
    assert phi(1.0, 1.3) == psi(1.0, 2.7) == 1.0
    assert math.isclose(SG.psi(2.0), 5.0)
    for f in (phi, psi):
        assert math.isclose(f(1 - 1e-12, 2.3), f(1.0, 2.3), rel_tol=1e-9)
    with pytest.raises(ValueError):
        psi(0.0, 2.3)
    with pytest.raises(ValueError):
        psi_inv(-1.0, 2.3)


def test_psi_inverse():
    r = np.random.default_rng(0).uniform(0.01, 100, 100)
    for L in (SG, V2):
        assert np.allclose(L.psi_inv(L.psi(r)), r, rtol=1e-13)


def test_upsilon_examples():
    assert upsilon(0.0, 3.0, 2.5) == 0.0
    for beta in (2.0, 2.3, 3.0):
        assert math.isclose(upsilon(4.0, 1.0, beta), 4.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.sampled_from([2.0, SG.beta, V2.beta, 3.5]))
def test_upsilon_matches_grid(R, t, beta):
    a, b = upsilon(R, t, beta), upsilon_grid(R, t, beta)
    assert math.isclose(a, b, rel_tol=1e-6, abs_tol=1e-12)


@given(st.floats(1e-2, 1e2), st.floats(1e-2, 1e2), st.floats(1.0, 2.0))
def test_upsilon_monotone(R, t, c):
    b = SG.beta
    assert upsilon(c * R, t, b) >= upsilon(R, t, b) - 1e-12
    assert upsilon(R, c * t, b) <= upsilon(R, t, b) + 1e-12


def test_upsilon_two_regimes_envelope():
    Rs = np.logspace(-1, 3, 40)
    ts = np.logspace(-1, 3, 40)
    R, t = np.meshgrid(Rs, ts)
    for L in (SG, V2):
        ratio = np.asarray(L.upsilon(R, t)) / np.asarray(L.upsilon_asymptotic(R, t))
        assert ratio.min() >= 1 / 8 and ratio.max() <= 8


def test_beta_monotonicity_of_tail_form():
    d = np.logspace(-2, 2, 30)
    t = np.logspace(-2, 2, 30)
    D, T = np.meshgrid(d, t)
    f = lambda b: (D / T ** (1 / b)) ** (b / (b - 1))
    lo, hi = f(2.2), f(2.6)
    assert np.all(hi[D > T] <= lo[D > T] * (1 + 1e-12))
    assert np.all(hi[D <= T] >= lo[D <= T] * (1 - 1e-12))


def test_gap_bound_closed_forms():
    assert math.isclose(gap_bound(1.3, 2.0), 1.3**2 / 4)
    assert gap_bound(1e-6, SG.beta) < 1e-10
    with pytest.raises(ValueError):
        gap_bound(0.0, 2.3)


@pytest.mark.parametrize("A", [0.5, 1.0, 2.0, 0.4])
def test_gap_bound_dominates_grid(A):
    x = np.logspace(-3, 3, 400)
    T, S = np.meshgrid(x, x)
    for L in (SG, V2):
        assert gap_function(T, S, A, L.beta).max() <= L.gap_bound(A) + 1e-12


def test_dyadic_sum_weight():
    # sum_{j <= 3} 2^j = 16 in the limit
    assert math.isclose(dyadic_sum_weight(8.0, lambda r: r), 16.0, rel_tol=1e-12)
    assert dyadic_sum_weight(8.0, lambda r: r, j_min=0) == 15.0
