import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cablelab.fractal import build_sierpinski, build_vicsek
from cablelab.heat import Semigroup, grad_lp_norm, lp_norm, make_battery
from cablelab.mesh import refine
from cablelab.riesz import (
    QuadratureScheme,
    RieszOperators,
    TrendReport,
    empirical_norms,
    local_riesz_apply,
    lp_norm_scan,
    quasi_riesz_apply,
    spectral_gap,
    spectral_riesz,
    tail_cutoff,
)
from cablelab.scaling import ScalingLaws

EPS_SG = ScalingLaws.sierpinski().gradient_gap / 2


@pytest.fixture(scope="module", params=["sierpinski", "vicsek"])
def setup(request):
    g = build_sierpinski(3) if request.param == "sierpinski" else build_vicsek(2, 2)
    mesh = refine(g, 2)
    return mesh, RieszOperators(mesh)


def _mean_zero(mesh, f):
    return f - (mesh.mass @ f) / mesh.total_mass


@pytest.mark.parametrize("a", [0.5, 0.1, EPS_SG, 0.9])
def test_scalar_weights_reproduce_gamma(a):
    q = QuadratureScheme(a, damping=1.0, T=60.0)
    assert abs(q.integrate_scalar(lambda t: np.ones_like(np.asarray(t, float))) - math.gamma(a)) < 1e-8 * math.gamma(a)


def test_scalar_with_spectral_factor():
    # int t^(a-1) e^(-lam t) dt = Gamma(a) lam^-a
    for lam in (0.05, 1.0, 30.0):
        q = QuadratureScheme(0.3, T=tail_cutoff(0.3, lam, 1e-14) * 2)
        val = q.integrate_scalar(lambda t: np.exp(-lam * np.asarray(t, float)))
        assert abs(val - math.gamma(0.3) * lam**-0.3) < 1e-8 * lam**-0.3


def test_quadrature_rejects_bad_exponent():
    with pytest.raises(ValueError):
        QuadratureScheme(0.0)


def test_matches_functional_calculus(setup):
    mesh, ops = setup
    F = make_battery(mesh, 12, seed=2)
    ref = spectral_riesz(mesh, F, "local")
    assert np.max(np.abs(ops.local(F).gradient - ref)) < 1e-6
    Fz = make_battery(mesh, 12, seed=3, mean_zero=True)
    L = ScalingLaws.for_family(mesh.base.family, 2)
    eps = L.gradient_gap / 2
    ref = spectral_riesz(mesh, Fz, "infinity", eps)
    assert np.max(np.abs(ops.at_infinity(Fz, eps).gradient - ref)) < 1e-6


def test_eigenvector_action(setup):
    mesh, ops = setup
    sg = Semigroup(mesh)
    w, V = sg.spectrum
    eps = 0.1
    for i in (1, 5, len(w) // 2):
        phi = V[:, i] / sg.sqrt_m
        u = ops.local(phi).potential
        assert np.allclose(u, phi / math.sqrt(1 + w[i]), atol=1e-9 * np.abs(phi).max())
        u = ops.at_infinity(phi, eps).potential
        assert np.allclose(u, w[i] ** -eps * math.exp(-w[i]) * phi, atol=1e-9 * np.abs(phi).max())


def test_zero_and_constants(setup):
    mesh, ops = setup
    n = mesh.n_nodes
    assert not np.any(ops.local(np.zeros(n)).gradient)
    assert not np.any(ops.at_infinity(np.zeros(n), 0.1).gradient)
    assert np.max(np.abs(ops.local(np.ones(n)).gradient)) < 1e-10
    assert np.allclose(ops.local(np.ones(n)).potential, 1.0, atol=1e-9)


@settings(max_examples=10)
@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(setup, seed, a, b):
    mesh, ops = setup
    rng = np.random.default_rng(seed)
    f, g = (_mean_zero(mesh, rng.standard_normal(mesh.n_nodes)) for _ in range(2))
    lhs = ops.at_infinity(a * f + b * g, 0.2).gradient
    rhs = a * ops.at_infinity(f, 0.2).gradient + b * ops.at_infinity(g, 0.2).gradient
    assert np.allclose(lhs, rhs, atol=1e-9 * (abs(a) + abs(b) + 1))


@settings(max_examples=10)
@given(st.integers(0, 2**31))
def test_local_l2_contraction(setup, seed):
    mesh, ops = setup
    f = np.random.default_rng(seed).standard_normal(mesh.n_nodes)
    g = ops.local(f).gradient
    assert grad_lp_norm(mesh, g, 2) <= lp_norm(mesh, f, 2) * (1 + 1e-8)


def test_panel_refinement(setup):
    mesh, ops = setup
    fine = RieszOperators(mesh, panels_per_decade=4)
    f = _mean_zero(mesh, np.random.default_rng(0).standard_normal(mesh.n_nodes))
    assert np.max(np.abs(ops.local(f).gradient - fine.local(f).gradient)) < 1e-6
    assert np.max(np.abs(ops.at_infinity(f, 0.2).gradient - fine.at_infinity(f, 0.2).gradient)) < 1e-6


def test_far_time_branch(setup):
    # force every node onto the Krylov branch
    mesh, ops = setup
    alt = RieszOperators(mesh, t_split=1e-9)
    f = _mean_zero(mesh, np.random.default_rng(1).standard_normal(mesh.n_nodes))
    assert np.max(np.abs(alt.at_infinity(f, 0.2).gradient - ops.at_infinity(f, 0.2).gradient)) < 1e-6


def test_mean_zero_required(setup):
    mesh, ops = setup
    with pytest.raises(ValueError):
        ops.at_infinity(np.ones(mesh.n_nodes), 0.1)


def test_eps_range():
    mesh = refine(build_sierpinski(2), 1)
    f = _mean_zero(mesh, np.arange(mesh.n_nodes, dtype=float))
    with pytest.raises(ValueError):
        quasi_riesz_apply(mesh, f, 0.5)
    with pytest.raises(ValueError):
        quasi_riesz_apply(mesh, f, 0.0)
    out = quasi_riesz_apply(mesh, f, EPS_SG)
    ref = spectral_riesz(mesh, f, "infinity", EPS_SG)
    assert np.max(np.abs(out - ref)) < 1e-6
    assert np.max(np.abs(local_riesz_apply(mesh, f) - spectral_riesz(mesh, f, "local"))) < 1e-6


def test_gap_and_tail():
    mesh = refine(build_sierpinski(3), 2)
    gap = spectral_gap(mesh)
    assert 0 < gap == pytest.approx(Semigroup(mesh).spectrum[0][1])
    T = tail_cutoff(0.2, gap)
    assert T >= 1 / (2 * gap)
    assert tail_cutoff(0.2, gap, 1e-14) > T


def test_trend_report():
    r = TrendReport("local", "sierpinski", 2.0, None, [4, 5, 6], [1.0, 1.0, 1.0])
    assert r.slope == pytest.approx(0.0, abs=1e-12) and r.bounded
    r = TrendReport("local", "sierpinski", 2.0, None, [4, 5, 6], [1.0, 2.0, 4.0])
    assert not r.bounded and r.to_dict()["verdict"] == "growing"


def test_norm_scan_small():
    reps = lp_norm_scan("quasi", "vicsek", [2, 3], ps=(2.0, 4.0), n_samples=12)
    assert set(reps) == {2.0, 4.0}
    for rep in reps.values():
        assert len(rep.norms) == 2 and all(np.isfinite(rep.norms))
    loc = empirical_norms(refine(build_vicsek(2, 2), 1), "local", (2.0,), n_samples=12)
    assert loc[2.0] <= 1 + 1e-6
