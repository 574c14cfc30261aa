import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cablelab.fractal import build_sierpinski, build_vicsek
from cablelab.heat import (
    HeatScan,
    Semigroup,
    delta,
    evolve,
    gradient_decay_slope,
    grad_semigroup_norm,
    grad_semigroup_norm_l2,
    heat_kernel_column,
    heat_kernel_columns,
    lp_norm,
    make_battery,
    on_diagonal_slope,
    verify_davies,
    verify_ghk,
    verify_uhk,
)
from cablelab.mesh import refine, single_cable


@pytest.fixture(scope="module")
def small():
    return refine(build_sierpinski(3), 2)


@pytest.fixture(scope="module")
def sgroup(small):
    return Semigroup(small)


def test_constants_preserved(small):
    for m in ("expm", "dense", "cn", "krylov"):
        assert np.allclose(evolve(small, np.ones(small.n_nodes), 3.0, method=m), 1.0, atol=1e-9)


def test_cosine_mode_decays():
    k = 40
    mesh = single_cable(k)
    s = np.r_[0.0, 1.0, np.arange(1, k) / k]
    lam = 4 * k * k * math.sin(math.pi / (2 * k)) ** 2
    u = evolve(mesh, np.cos(math.pi * s), 0.05)
    assert np.allclose(u, math.exp(-0.05 * lam) * np.cos(math.pi * s), atol=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.floats(0.05, 20.0))
def test_expm_matches_dense(small, sgroup, seed, t):
    u0 = np.random.default_rng(seed).standard_normal(small.n_nodes)
    assert np.max(np.abs(sgroup.apply(u0, t) - sgroup.apply(u0, t, "dense"))) < 1e-8


def test_cn_and_krylov_close(small, sgroup):
    u0 = delta(small, 5)
    ref = sgroup.apply(u0, 2.0, "dense")
    assert np.max(np.abs(sgroup.apply(u0, 2.0, "krylov") - ref)) < 1e-8
    cn = sgroup.apply(u0, 2.0, "cn", steps=400)
    assert np.max(np.abs(cn - ref)) < 1e-4 * np.abs(ref).max()


def test_kernel_columns_match_dense(small, sgroup):
    times = [0.5, 1.0, 4.0, 16.0]
    for x in (0, 7, small.n_nodes - 1):
        cols = heat_kernel_columns(small, x, times, semigroup=sgroup)
        for s in cols:
            ref = sgroup.apply(delta(small, x), s.t, "dense")
            assert np.max(np.abs(s.values - ref)) < 1e-8
            assert abs(s.total_mass - 1.0) < 1e-10


def test_kernel_symmetric(small, sgroup):
    a = heat_kernel_column(small, 3, 1.5, semigroup=sgroup).values
    b = heat_kernel_column(small, 11, 1.5, semigroup=sgroup).values
    assert abs(a[11] - b[3]) < 1e-12


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.sampled_from([1.0, 2.0, math.inf]), st.floats(0.1, 10.0))
def test_contraction(small, sgroup, seed, p, t):
    u0 = np.random.default_rng(seed).standard_normal(small.n_nodes)
    assert lp_norm(small, sgroup.apply(u0, t), p) <= lp_norm(small, u0, p) * (1 + 1e-10)


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_chapman_kolmogorov(small, sgroup, seed, s, t):
    u0 = np.random.default_rng(seed).standard_normal(small.n_nodes)
    two = sgroup.apply(sgroup.apply(u0, s), t)
    assert np.max(np.abs(two - sgroup.apply(u0, s + t))) < 1e-8


def test_positivity(small, sgroup):
    assert np.all(sgroup.apply(delta(small, 0), 0.7) > -1e-14)


def test_negative_time_and_method(sgroup, small):
    with pytest.raises(ValueError):
        sgroup.apply(np.ones(small.n_nodes), -1.0)
    with pytest.raises(ValueError):
        sgroup.apply(np.ones(small.n_nodes), 1.0, "euler")


def test_refinement_stability():
    g = build_vicsek(2, 2)
    x, t = 0, 4.0
    p2 = heat_kernel_column(refine(g, 8), x, t).values[: g.n_vertices]
    p4 = heat_kernel_column(refine(g, 16), x, t).values[: g.n_vertices]
    assert np.max(np.abs(p2 - p4)) / p4.max() < 1e-2


def test_gradient_norm_l2_is_exact(small):
    t = 1.0
    exact = grad_semigroup_norm_l2(small, t)
    # sqrt(lam) exp(-lam t) is attained at the eigenvector
    w, V = Semigroup(small).spectrum
    i = int(np.argmax(w * np.exp(-2 * w * t)))
    f = V[:, i] / np.sqrt(small.mass)
    u = evolve(small, f, t)
    ratio = math.sqrt(small.h * (small.gradient(u) ** 2).sum()) / lp_norm(small, f, 2)
    assert abs(ratio - exact) < 1e-8
    assert grad_semigroup_norm(small, 2.0, t, n_samples=8) == pytest.approx(exact, rel=1e-12)


def test_battery_mean_zero(small):
    F = make_battery(small, 12, mean_zero=True)
    assert F.shape[1] == 12
    assert np.allclose(small.mass @ F, 0.0, atol=1e-12)


def test_scan_and_verifiers():
    mesh = refine(build_sierpinski(5), 2)
    x = int(mesh.base.vertex_id([8, 0]))
    scan = HeatScan.run(mesh, [x], [4, 8, 16])
    for fit in (verify_uhk(scan), verify_davies(scan), verify_ghk(scan)):
        assert fit.n_samples > 100 and np.isfinite(fit.fitted_constant)
        assert np.all(fit.normalized_ratios() <= 1 + 1e-12)
    assert verify_uhk(scan).notes["nle_c"] > 0
    assert set(verify_ghk(scan).notes["by_time"]) == {4.0, 8.0, 16.0}
    assert on_diagonal_slope(scan, x) < 0
    assert np.isfinite(gradient_decay_slope(scan, x))
