"""Heat semigroup ``exp(-t Delta)`` on a cable mesh and heat-kernel bound scans.

Everything is done in the mass-symmetrised frame: with
``A = M^-1/2 S M^-1/2`` (symmetric, nonnegative) one has
``exp(-t Delta) u = M^-1/2 exp(-t A) M^1/2 u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .reports import InequalityFit, loglog_slope
from .scaling import ScalingLaws, upsilon

SUBMESH_FACTOR = 16.0
NOISE_FLOOR = 1e-10


class Semigroup:
    """Heat semigroup of a mesh with several interchangeable evaluation methods.

    Methods
    -------
    'expm'
        ``scipy.sparse.linalg.expm_multiply`` on the symmetrised generator;
        accurate to near machine precision, cost grows like ``t * ||A||``.
    'krylov'
        Shift-and-invert Lanczos on ``(I + gamma A)^-1``; cheap for large
        ``t`` and smooth data.
    'cn'
        Crank-Nicolson with geometric start-up substeps.
    'dense'
        Full eigendecomposition; small meshes only.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.sqrt_m = np.sqrt(mesh.mass)
        d = 1.0 / self.sqrt_m
        self.A = (sp.diags(d) @ mesh.stiffness @ sp.diags(d)).tocsr()

    @cached_property
    def spectrum(self):
        w, V = sl.eigh(self.A.toarray())
        return np.clip(w, 0.0, None), V

    # -- symmetric-frame kernels -------------------------------------------

    def _expm(self, v, t):
        return spla.expm_multiply(-t * self.A, v, traceA=-t * self.A.diagonal().sum())

    def _dense(self, v, t):
        w, V = self.spectrum
        e = np.exp(-t * w)
        return V @ ((e[:, None] if v.ndim == 2 else e) * (V.T @ v))

    def _cn(self, v, t, steps):
        mesh = self.mesh
        M = sp.diags(mesh.mass)
        S = mesh.stiffness
        u = v / self.sqrt_m[:, None] if v.ndim == 2 else v / self.sqrt_m
        steps = steps or 40
        dt_main = t / steps
        # geometric start-up: resolve the initial layer of rough data
        first = [dt_main * 2.0 ** (-j) for j in range(10, 0, -1)]
        schedule = first + [dt_main - sum(first)] + [dt_main] * (steps - 1)
        cache = {}
        for dt in schedule:
            if dt <= 0:
                continue
            key = round(dt, 15)
            if key not in cache:
                cache[key] = (spla.splu((M + 0.5 * dt * S).tocsc()), (M - 0.5 * dt * S).tocsr())
            lu, R = cache[key]
            u = lu.solve(R @ u)
        return u

    def _krylov(self, v, times, tol=1e-11, max_dim=200):
        """Shift-invert Lanczos for several times at once (single vector ``v``)."""
        times = np.atleast_1d(np.asarray(times, float))
        gamma = max(float(times.min()), 1e-8)
        mesh = self.mesh
        lu = spla.splu((sp.diags(mesh.mass) + gamma * mesh.stiffness).tocsc())
        sm = self.sqrt_m

        def op(x):
            return sm * lu.solve(sm * x)

        beta0 = np.linalg.norm(v)
        if beta0 == 0:
            return np.zeros((len(v), len(times)))
        Q = [v / beta0]
        alphas, betas = [], []
        prev = None
        for j in range(max_dim):
            w = op(Q[-1])
            a = Q[-1] @ w
            w = w - a * Q[-1] - (betas[-1] * Q[-2] if betas else 0.0)
            Qm = np.array(Q)
            w -= Qm.T @ (Qm @ w)
            w -= Qm.T @ (Qm @ w)
            alphas.append(a)
            b = np.linalg.norm(w)
            T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
            theta, Sv = np.linalg.eigh(T)
            theta = np.clip(theta, 1e-300, 1.0)
            mu = np.clip((1.0 / theta - 1.0) / gamma, 0.0, None)
            coef = Sv @ (np.exp(-np.outer(mu, times)) * Sv[0][:, None])
            if prev is not None and prev.shape[0] == coef.shape[0] - 1:
                diff = np.abs(coef[:-1] - prev).sum(axis=0) + np.abs(coef[-1])
                if np.all(diff < tol):
                    return beta0 * (Qm.T @ coef)
            prev = coef
            if b < 1e-14:
                return beta0 * (Qm.T @ coef)
            betas.append(b)
            Q.append(w / b)
        raise RuntimeError("shift-invert Lanczos did not converge")

    # -- public ----------------------------------------------------------------

    def apply(self, u0, t: float, method: str = "expm", steps: int | None = None) -> np.ndarray:
        """``exp(-t Delta) u0`` for nodal ``u0`` (vector or columns)."""
        u0 = np.asarray(u0, float)
        if t == 0:
            return u0.copy()
        if t < 0:
            raise ValueError("t must be nonnegative")
        sm = self.sqrt_m[:, None] if u0.ndim == 2 else self.sqrt_m
        v = u0 * sm
        if method == "expm":
            w = self._expm(v, t)
        elif method == "dense":
            w = self._dense(v, t)
        elif method == "cn":
            return self._cn(v, t, steps)
        elif method == "krylov":
            if v.ndim == 2:
                w = np.column_stack([self._krylov(c, [t])[:, 0] for c in v.T])
            else:
                w = self._krylov(v, [t])[:, 0]
        else:
            raise ValueError(f"unknown method {method!r}")
        return w / sm

    def apply_times(self, u0, times, method: str = "expm") -> np.ndarray:
        """Columns ``exp(-t_i Delta) u0`` for increasing ``times`` (``u0`` a vector)."""
        times = np.asarray(times, float)
        u0 = np.asarray(u0, float)
        if np.any(np.diff(times) < 0):
            raise ValueError("times must be increasing")
        if method == "krylov":
            return self._krylov(u0 * self.sqrt_m, times) / self.sqrt_m[:, None]
        out = np.empty((len(u0), len(times)))
        cur, tc = u0, 0.0
        for i, t in enumerate(times):
            cur = self.apply(cur, t - tc, method) if t > tc else cur
            out[:, i] = cur
            tc = t
        return out


def evolve(mesh: Mesh, u0, t: float, steps: int | None = None, method: str = "expm") -> np.ndarray:
    """``exp(-t Delta) u0``.

    The default uses a Krylov-type exponential (accurate to ~1e-13); pass
    ``method='cn'`` for Crank-Nicolson with ``steps`` uniform steps after a
    geometric start-up.
    """
    return Semigroup(mesh).apply(u0, t, method, steps)


@dataclass
class HeatKernelSlice:
    """One column ``y -> p_t(x, y)`` with its gradient and time derivative."""

    source: int
    t: float
    values: np.ndarray
    gradient: np.ndarray
    dpdt: np.ndarray
    submesh: bool

    @property
    def total_mass(self) -> float:
        return float(self._mass @ self.values)


def _slice(mesh, x, t, p):
    s = HeatKernelSlice(
        int(x),
        float(t),
        p,
        mesh.gradient(p),
        -(mesh.stiffness @ p) / mesh.mass,
        t < SUBMESH_FACTOR * mesh.h**2,
    )
    s._mass = mesh.mass
    return s


def delta(mesh: Mesh, x: int) -> np.ndarray:
    """Discrete point mass at ``x``: density ``1/m_x`` at ``x``."""
    e = np.zeros(mesh.n_nodes)
    e[x] = 1.0 / mesh.mass[x]
    return e


def heat_kernel_column(mesh: Mesh, x: int, t: float, method: str = "expm", semigroup: Semigroup | None = None) -> HeatKernelSlice:
    sg = semigroup or Semigroup(mesh)
    return _slice(mesh, x, t, sg.apply(delta(mesh, x), t, method))


def heat_kernel_columns(mesh: Mesh, x: int, times, method: str = "expm", semigroup: Semigroup | None = None):
    sg = semigroup or Semigroup(mesh)
    P = sg.apply_times(delta(mesh, x), times, method)
    return [_slice(mesh, x, t, P[:, i]) for i, t in enumerate(times)]


# ---------------------------------------------------------------------------
# bound scans


def _laws(mesh, laws):
    if laws is not None:
        return laws
    return ScalingLaws.for_family(mesh.base.family, mesh.base.N)


class _VolumeTable:
    """``V(x, r)`` for a fixed centre, from one distance sweep."""

    def __init__(self, mesh, x):
        self.mesh = mesh
        self.d = mesh.distances(x)
        order = np.argsort(self.d, kind="stable")
        self.ds = self.d[order]
        self.cm = np.cumsum(mesh.mass[order])

    def __call__(self, r):
        i = np.searchsorted(self.ds, r - 1e-12 * max(r, 1.0), side="left")
        return float(self.cm[i - 1]) if i > 0 else 0.0


@dataclass
class HeatScan:
    """Heat-kernel columns for several sources and times, with distances and volumes."""

    mesh: Mesh
    laws: ScalingLaws
    sources: list
    times: list
    slices: dict
    dist: dict
    volumes: dict

    @classmethod
    def run(cls, mesh, sources, times, laws=None, method="expm"):
        laws = _laws(mesh, laws)
        sg = Semigroup(mesh)
        slices, dist, vols = {}, {}, {}
        times = sorted(float(t) for t in times)
        for x in sources:
            for s in heat_kernel_columns(mesh, x, times, method, sg):
                slices[(x, s.t)] = s
            vols[x] = _VolumeTable(mesh, x)
            dist[x] = vols[x].d
        return cls(mesh, laws, list(sources), times, slices, dist, vols)

    def margin(self, x, t, factor=4.0):
        """Truncation distance minus ``factor * Psi^-1(t)``."""
        return float(self.mesh.truncation_distance[x] - factor * self.laws.psi_inv(t))


def _envelope(scan, x, t, d, C1, C2):
    L = scan.laws
    V = scan.volumes[x](L.psi_inv(C1 * t))
    return V, upsilon(C2 * d, t, L.beta)


def verify_uhk(scan: HeatScan, C1: float = 1.0, C2: float = 0.2, eps: float = 0.5, include_submesh: bool = False):
    """UHK: ``p_t(x,y) V(x, Psi^-1(C1 t)) exp(Upsilon(C2 d, t)) <= C``, plus NLE.

    Samples are all nodes ``y`` with ``p_t(x,y)`` above the noise floor.
    The near-diagonal lower constant ``c = min p_t(x,y) V(x, Psi^-1(t))``
    over ``d(x,y) <= eps Psi^-1(t)`` is stored in ``notes['nle_c']``.
    """
    L = scan.laws
    fit = InequalityFit("UHK(Psi)", {"alpha": L.alpha, "beta": L.beta, "C1": C1, "C2": C2})
    nle = np.inf
    for (x, t), s in scan.slices.items():
        if s.submesh and not include_submesh:
            fit.skipped += 1
            continue
        d = scan.dist[x]
        p = s.values
        keep = p > NOISE_FLOOR * p.max()
        V, _ = _envelope(scan, x, t, 0.0, C1, C2)
        ups = np.asarray(upsilon(C2 * d[keep], np.full(keep.sum(), t), L.beta))
        ratio = p[keep] * V * np.exp(ups)
        margin = scan.margin(x, t)
        for y, rt, dy in zip(np.flatnonzero(keep), ratio, d[keep]):
            fit.add(x, t, rt, 1.0, margin, y=int(y), t=t, d=float(dy))
        near = d <= eps * L.psi_inv(t)
        Vt = scan.volumes[x](L.psi_inv(t))
        nle = min(nle, float((p[near] * Vt).min()))
    fit.notes["nle_c"] = nle
    return fit


def verify_davies(scan: HeatScan, C1: float = 1.0, C2: float = 0.2, include_submesh: bool = False):
    """``|d/dt p_t(x,y)| t V(x, Psi^-1(C1 t)) exp(Upsilon(C2 d, t)) <= C``."""
    L = scan.laws
    fit = InequalityFit("Davies time derivative", {"beta": L.beta, "C1": C1, "C2": C2})
    for (x, t), s in scan.slices.items():
        if s.submesh and not include_submesh:
            fit.skipped += 1
            continue
        d = scan.dist[x]
        q = np.abs(s.dpdt)
        keep = q > NOISE_FLOOR * q.max()
        V, _ = _envelope(scan, x, t, 0.0, C1, C2)
        ups = np.asarray(upsilon(C2 * d[keep], np.full(keep.sum(), t), L.beta))
        ratio = q[keep] * t * V * np.exp(ups)
        margin = scan.margin(x, t)
        for y, rt, dy in zip(np.flatnonzero(keep), ratio, d[keep]):
            fit.add(x, t, rt, 1.0, margin, y=int(y), t=t, d=float(dy))
    return fit


def verify_ghk(scan: HeatScan, C1: float = 1.0, C2: float = 0.2, include_submesh: bool = False):
    """GHK: ``|grad_y p_t(x,y)| <= C Phi(Psi^-1 t) / (t V(x, Psi^-1(C1 t))) exp(-Upsilon(C2 d, t))``.

    The gradient is constant on each segment; ``d`` is the distance of the
    segment's nearer endpoint, which makes the envelope largest there.
    Per-time sup ratios for the two-regime display are stored in
    ``notes['by_time']``.
    """
    L = scan.laws
    mesh = scan.mesh
    fit = InequalityFit("GHK(Phi,Psi)", {"alpha": L.alpha, "beta": L.beta, "C1": C1, "C2": C2})
    by_time = {}
    for (x, t), s in scan.slices.items():
        if s.submesh and not include_submesh:
            fit.skipped += 1
            continue
        d = scan.dist[x]
        ds = np.minimum(d[mesh.segments[:, 0]], d[mesh.segments[:, 1]])
        g = np.abs(s.gradient)
        keep = g > NOISE_FLOOR * g.max()
        V, _ = _envelope(scan, x, t, 0.0, C1, C2)
        ups = np.asarray(upsilon(C2 * ds[keep], np.full(keep.sum(), t), L.beta))
        ratio = g[keep] * t * V * np.exp(ups) / L.phi(L.psi_inv(t))
        margin = scan.margin(x, t)
        for sg, rt, dy in zip(np.flatnonzero(keep), ratio, ds[keep]):
            fit.add(x, t, rt, 1.0, margin, segment=int(sg), t=t, d=float(dy))
        by_time[t] = max(by_time.get(t, 0.0), float(ratio.max()))
    fit.notes["by_time"] = by_time
    return fit


def on_diagonal_slope(scan: HeatScan, x: int) -> float:
    ts = np.array([t for t in scan.times])
    pv = [scan.slices[(x, t)].values[x] for t in ts]
    return loglog_slope(ts, pv)


def gradient_decay_slope(scan: HeatScan, x: int) -> float:
    """Slope of ``log (sup_y |grad_y p_t(x,y)| / p_t(x,x))`` against ``log t``.

    ``p_t(x,x)`` is comparable to ``1 / V(x, Psi^-1(t))`` and, unlike the
    lumped volume of a ball, carries no mesh-scale jitter.
    """
    ts = np.array(scan.times)
    vals = [np.abs(scan.slices[(x, t)].gradient).max() / scan.slices[(x, t)].values[x] for t in ts]
    return loglog_slope(ts, vals)


# ---------------------------------------------------------------------------
# semigroup gradient norms


def lp_norm(mesh: Mesh, f, p: float) -> float:
    """``(sum_x m_x |f_x|^p)^(1/p)`` for nodal ``f``."""
    f = np.abs(np.asarray(f, float))
    if math.isinf(p):
        return float(f.max())
    return float((mesh.mass @ f**p) ** (1.0 / p))


def grad_lp_norm(mesh: Mesh, g, p: float) -> np.ndarray:
    """``L^p`` norm of a per-segment gradient field (columns allowed)."""
    g = np.abs(np.asarray(g, float))
    if math.isinf(p):
        return g.max(axis=-1)
    return (mesh.h * (g**p).sum(axis=-1)) ** (1.0 / p)


def make_battery(mesh: Mesh, n: int = 50, seed: int = 0, mean_zero: bool = False) -> np.ndarray:
    """Mixed-sign test functions as columns: bumps, Haar-like pairs, random signs, smooth noise."""
    rng = np.random.default_rng(seed)
    cols = []
    kinds = ["bump", "haar", "sign", "smooth"]
    D = None
    for i in range(n):
        kind = kinds[i % 4]
        if kind in ("bump", "haar"):
            x = int(rng.integers(mesh.n_nodes))
            rho = mesh.h * rng.integers(1, 4 * mesh.k + 1)
            bump = np.clip(1.0 - mesh.distances(x) / rho, 0.0, None)
            if kind == "haar":
                y = int(rng.integers(mesh.n_nodes))
                bump = bump - np.clip(1.0 - mesh.distances(y) / rho, 0.0, None)
            f = bump
        elif kind == "sign":
            f = rng.choice([-1.0, 1.0], size=mesh.n_nodes)
        else:
            if D is None:
                D = Semigroup(mesh)
            f = D.apply(rng.standard_normal(mesh.n_nodes), 4.0 * rng.uniform(0.1, 1.0) * mesh.h)
        if mean_zero:
            f = f - (mesh.mass @ f) / mesh.total_mass
        if np.any(f):
            cols.append(f)
    return np.column_stack(cols)


def grad_semigroup_norm(mesh: Mesh, p: float, t: float, n_samples: int = 50, seed: int = 0, battery=None) -> float:
    """Lower estimate of ``|| |grad exp(-t Delta)| ||_{p->p}``.

    For ``p = 2`` the exact norm is returned as well via Lanczos on
    ``P_t S P_t`` (see :func:`grad_semigroup_norm_l2`), and the larger of
    the two estimates is reported.
    """
    F = make_battery(mesh, n_samples, seed) if battery is None else battery
    sg = Semigroup(mesh)
    U = sg.apply(F, t)
    num = grad_lp_norm(mesh, mesh.gradient(U.T), p)
    den = np.array([lp_norm(mesh, F[:, i], p) for i in range(F.shape[1])])
    est = float((num / den).max())
    if p == 2:
        est = max(est, grad_semigroup_norm_l2(mesh, t))
    return est


def grad_semigroup_norm_l2(mesh: Mesh, t: float) -> float:
    """``sqrt(max_lam lam exp(-2 lam t))`` over the generator's spectrum."""
    sg = Semigroup(mesh)
    n = mesh.n_nodes
    if n <= 2000:
        w, _ = sg.spectrum
        return float(math.sqrt((w * np.exp(-2 * w * t)).max()))
    target = 1.0 / (2 * t)
    w = spla.eigsh(sg.A, k=min(12, n - 2), sigma=target, which="LM", return_eigenvectors=False)
    w = np.clip(w, 0.0, None)
    return float(math.sqrt((w * np.exp(-2 * w * t)).max()))
