"""Dirichlet and Poisson problems on cable meshes, and sampled elliptic inequalities.

Sign convention: ``Delta = diag(m)^-1 S`` is nonnegative, so ``Delta u = f``
with ``f = 1`` and zero boundary data gives the (positive) mean exit time.
Nodal integrals use the lumped mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

from .mesh import Ball, Mesh
from .reports import InequalityFit, loglog_slope
from .scaling import ScalingLaws


class SolverError(RuntimeError):
    """Iterative solver did not reach its tolerance."""


class DisconnectedDomainError(ValueError):
    """Some component of the domain does not touch the Dirichlet boundary."""


class MarginError(ValueError):
    """A ball's double reaches the truncation boundary of the finite core."""


@dataclass
class DirichletProblem:
    """Data for ``Delta u = f`` in ``domain``, ``u = g`` on the outer boundary.

    ``boundary`` and ``f`` are full nodal arrays (entries outside the relevant
    node sets are ignored); ``None`` means zero.
    """

    mesh: Mesh
    domain: np.ndarray
    boundary: np.ndarray | None = None
    f: np.ndarray | None = None


def outer_boundary(mesh: Mesh, domain) -> np.ndarray:
    """Nodes outside ``domain`` that share a segment with it."""
    inside = np.zeros(mesh.n_nodes, bool)
    inside[domain] = True
    a, b = mesh.segments[:, 0], mesh.segments[:, 1]
    cut = inside[a] != inside[b]
    nodes = np.where(inside[a[cut]], b[cut], a[cut])
    return np.unique(nodes)


class DirichletSolver:
    """Reduced stiffness system on a node set, reused across right-hand sides.

    Parameters
    ----------
    mesh : Mesh
    domain : array of node ids
    method : {'cg', 'direct'}
        Jacobi-preconditioned conjugate gradients, or a sparse LU
        factorisation (cheaper when many right-hand sides share the domain).
    tol : float
        Relative residual tolerance for CG.
    """

    def __init__(self, mesh: Mesh, domain, method: str = "cg", tol: float = 1e-12, maxiter: int | None = None):
        self.mesh = mesh
        self.domain = np.unique(np.asarray(domain, dtype=np.int64))
        if len(self.domain) == 0:
            raise ValueError("empty domain")
        self.bnd = outer_boundary(mesh, self.domain)
        S = mesh.stiffness
        self.A = S[self.domain][:, self.domain].tocsr()
        self.B = S[self.domain][:, self.bnd].tocsr()
        self._check_connected()
        self.method = method
        self.tol = tol
        self.maxiter = maxiter or 20 * len(self.domain) + 100
        self._lu = spla.splu(self.A.tocsc()) if method == "direct" else None
        self._jacobi = sp.diags(1.0 / self.A.diagonal())

    def _check_connected(self):
        n, labels = csgraph.connected_components(self.A, directed=False)
        if n == 1 and len(self.bnd) > 0:
            return
        touched = np.zeros(n, bool)
        rows = np.unique(self.B.nonzero()[0])
        touched[labels[rows]] = True
        if not touched.all():
            raise DisconnectedDomainError("a component of the domain has no Dirichlet boundary")

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(rhs)
        if rhs.ndim == 2:
            return np.column_stack([self._solve(c) for c in rhs.T])
        if not np.any(rhs):
            return np.zeros_like(rhs)
        x, info = spla.cg(self.A, rhs, rtol=self.tol, atol=0.0, M=self._jacobi, maxiter=self.maxiter)
        res = np.linalg.norm(self.A @ x - rhs) / np.linalg.norm(rhs)
        if info != 0 and res > 10 * self.tol:
            raise SolverError(f"CG stopped after {self.maxiter} iterations, relative residual {res:.3e}")
        return x

    def solve(self, boundary_values=None, f=None) -> np.ndarray:
        """Solve and return full nodal array(s); nodes outside domain and boundary are 0.

        ``boundary_values`` is aligned with ``self.bnd`` (shape ``(nb,)`` or
        ``(nb, m)``); ``f`` is aligned with ``self.domain`` (same trailing shape).
        """
        nd = len(self.domain)
        m = None
        for arr in (boundary_values, f):
            if arr is not None and np.ndim(arr) == 2:
                m = np.shape(arr)[1]
        shape = (nd,) if m is None else (nd, m)
        rhs = np.zeros(shape)
        if boundary_values is not None:
            g = np.asarray(boundary_values, float)
            rhs -= self.B @ g if g.ndim == len(shape) else (self.B @ g)[:, None]
        if f is not None:
            fv = np.asarray(f, float)
            md = self.mesh.mass[self.domain]
            rhs += (md * fv.T).T if fv.ndim == len(shape) else (md * fv)[:, None]
        x = self._solve(rhs)
        out = np.zeros((self.mesh.n_nodes,) + shape[1:])
        out[self.domain] = x
        if boundary_values is not None:
            g = np.asarray(boundary_values, float)
            out[self.bnd] = g if g.ndim == len(shape) else g[:, None]
        return out


def solve_dirichlet(problem: DirichletProblem, method: str = "cg", tol: float = 1e-12) -> np.ndarray:
    """Harmonic function in ``problem.domain`` with the given boundary data."""
    s = DirichletSolver(problem.mesh, problem.domain, method, tol)
    g = np.zeros(len(s.bnd)) if problem.boundary is None else np.asarray(problem.boundary, float)[s.bnd]
    return s.solve(g)


def solve_poisson(problem: DirichletProblem, method: str = "cg", tol: float = 1e-12) -> np.ndarray:
    """Solution of ``Delta u = f`` in the domain with zero boundary data."""
    s = DirichletSolver(problem.mesh, problem.domain, method, tol)
    f = np.zeros(len(s.domain)) if problem.f is None else np.asarray(problem.f, float)[s.domain]
    return s.solve(None, f)


def mean_exit_time(mesh: Mesh, x: int, r: float, strict: bool = False) -> float:
    """Expected exit time from ``B(x, r)`` started at ``x``: ``u(x)`` for ``Delta u = 1``."""
    ball = mesh.ball(x, r)
    if strict and not ball.ok:
        raise MarginError(f"ball B({x}, {r}) has margin {ball.margin}")
    s = DirichletSolver(mesh, ball.nodes, "direct")
    return float(s.solve(None, np.ones(len(s.domain)))[x])


def dirichlet_eigenvalue(mesh: Mesh, domain, tol: float = 1e-8, block: int = 4, maxiter: int = 500) -> float:
    """Smallest eigenvalue of ``S v = lam M v`` on ``domain`` with zero outer data.

    Block inverse iteration with Rayleigh-Ritz; the block makes the
    contraction rate ``lam_1 / lam_{block+1}`` rather than ``lam_1 / lam_2``.
    """
    domain = np.unique(np.asarray(domain, dtype=np.int64))
    A = mesh.stiffness[domain][:, domain].tocsc()
    mvec = mesh.mass[domain]
    n = len(domain)
    if n <= block + 1:
        import scipy.linalg as sl

        return float(sl.eigh(A.toarray(), np.diag(mvec), eigvals_only=True)[0])
    lu = spla.splu(A)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, block))
    X[:, 0] = 1.0
    lam_old = np.inf
    for it in range(maxiter):
        Y = lu.solve(mvec[:, None] * X)
        # M-orthonormalise and project
        Ym = Y * np.sqrt(mvec)[:, None]
        Q, _ = np.linalg.qr(Ym)
        Z = Q / np.sqrt(mvec)[:, None]
        H = Z.T @ (A @ Z)
        w, V = np.linalg.eigh(0.5 * (H + H.T))
        X = Z @ V
        lam = w[0]
        v = X[:, 0]
        res = np.linalg.norm(A @ v - lam * mvec * v) / (abs(lam) * np.linalg.norm(mvec * v))
        if abs(lam - lam_old) <= tol * abs(lam) and res < math.sqrt(tol):
            return float(lam)
        lam_old = lam
    raise SolverError(f"inverse iteration did not converge; Rayleigh residual {res:.3e}")


def neumann_gap(mesh: Mesh, ball: Ball) -> float:
    """Second eigenvalue of the Neumann problem on the closed ball's cables."""
    inside = np.zeros(mesh.n_nodes, bool)
    inside[ball.nodes] = True
    inside[outer_boundary(mesh, ball.nodes)] = True
    seg = mesh.segments[inside[mesh.segments[:, 0]] & inside[mesh.segments[:, 1]]]
    nodes = np.unique(seg)
    idx = np.full(mesh.n_nodes, -1)
    idx[nodes] = np.arange(len(nodes))
    a, b = idx[seg[:, 0]], idx[seg[:, 1]]
    n, h = len(nodes), mesh.h
    S = sp.csr_matrix(
        (np.r_[np.ones(2 * len(a)), -np.ones(2 * len(a))] / h, (np.r_[a, b, a, b], np.r_[a, b, b, a])),
        shape=(n, n),
    )
    m = np.bincount(np.r_[a, b], minlength=n) * h / 2
    if n < 400:
        import scipy.linalg as sl

        return float(sl.eigh(S.toarray(), np.diag(m), eigvals_only=True)[1])
    shift = -1e-3 / max(ball.r, h) ** 2
    w = spla.eigsh(S.tocsc(), k=2, M=sp.diags(m).tocsc(), sigma=shift, which="LM", return_eigenvectors=False)
    return float(np.sort(w)[1])


# ---------------------------------------------------------------------------
# ball sampling


def node_positions(mesh: Mesh) -> np.ndarray:
    """Euclidean positions of all nodes (interior nodes interpolated on their cable)."""
    g = mesh.base
    P = g.positions()
    out = np.zeros((mesh.n_nodes, P.shape[1]))
    out[: g.n_vertices] = P
    if mesh.k > 1:
        s = np.arange(1, mesh.k) / mesh.k
        pa = P[g.edges[:, 0]][:, None, :]
        pb = P[g.edges[:, 1]][:, None, :]
        out[g.n_vertices :] = ((1 - s)[None, :, None] * pa + s[None, :, None] * pb).reshape(-1, P.shape[1])
    return out


def _cell_step(family: str, r: float) -> int:
    if family == "sierpinski":
        return 2 ** max(0, math.floor(math.log2(2 * r) + 1e-9))
    if family == "vicsek":
        return 3 ** max(0, math.floor(math.log(r, 3) + 1e-9)) if r >= 1 else 1
    return 1


# centre patterns in units of the cell step, reused at every scale
CENTRE_PATTERNS = {
    "sierpinski": ((1, 0), (2, 1), (1, 2), (3, 0)),
    "vicsek": ((1, 1), (2, 2), (3, 3), (5, 1)),
}


def sample_balls(
    mesh: Mesh, radii, per_radius: int = 3, seed: int = 0, aligned: bool = True, plan: str = "random"
) -> list[Ball]:
    """Balls centred at graph vertices with positive safety margin.

    With ``aligned=True`` centres are preferably vertices whose lattice
    coordinates are multiples of the cell size matching ``r`` (junctions of
    cells of size ``~2r`` for the gasket, cell corners and centres for
    Vicsek), which is where harmonic functions are most irregular.

    ``plan='pattern'`` instead places the centres at the fixed points of
    ``CENTRE_PATTERNS`` scaled by the cell step, so every radius sees the
    same local configurations; pattern points without margin are dropped.
    """
    g = mesh.base
    rng = np.random.default_rng(seed)
    tdist = mesh.truncation_distance[: g.n_vertices]
    out = []
    if plan == "pattern":
        if g.family not in CENTRE_PATTERNS:
            raise ValueError("pattern plan needs a fractal family")
        for r in radii:
            step = _cell_step(g.family, r)
            ids = g.find(step * np.array(CENTRE_PATTERNS[g.family][:per_radius]))
            for c in ids[ids >= 0]:
                if tdist[c] - 2 * r > 0:
                    out.append(mesh.ball(int(c), float(r)))
        return out
    if plan != "random":
        raise ValueError(f"unknown plan {plan!r}")
    for r in radii:
        ok = np.flatnonzero(tdist - 2 * r > 0)
        if aligned and g.family in ("sierpinski", "vicsek"):
            step = _cell_step(g.family, r)
            al = ok[np.all(g.coords[ok] % step == 0, axis=1)]
            if g.family == "sierpinski":
                al = al[np.any(g.coords[al] != 0, axis=1)] if len(al) > 1 else al
            cand = al if len(al) else ok
        else:
            cand = ok
        if len(cand) == 0:
            continue
        pick = rng.choice(cand, size=min(per_radius, len(cand)), replace=False)
        for c in np.sort(pick):
            out.append(mesh.ball(int(c), float(r)))
    return out


def _laws(mesh: Mesh, laws: ScalingLaws | None) -> ScalingLaws:
    if laws is not None:
        return laws
    g = mesh.base
    return ScalingLaws.for_family(g.family, g.N)


def _avg(mesh, nodes, v, p=1.0):
    m = mesh.mass[nodes]
    return (m @ np.abs(v[nodes]) ** p / m.sum()) ** (1.0 / p)


def _segments_touching(mesh, nodes):
    inside = np.zeros(mesh.n_nodes, bool)
    inside[nodes] = True
    return np.flatnonzero(inside[mesh.segments[:, 0]] | inside[mesh.segments[:, 1]])


def harmonic_samples(mesh: Mesh, domain, n_random: int = 100, n_split: int = 16, seed: int = 0, center=None):
    """Harmonic functions in ``domain`` for random boundary data.

    Boundary data are i.i.d. uniform on ``[-1, 1]`` for ``n_random`` samples
    and ``+-1`` half-space sign patterns through ``center`` for ``n_split``
    samples (the coordinate axes first, then random directions).
    """
    s = DirichletSolver(mesh, domain, "direct")
    rng = np.random.default_rng(seed)
    nb = len(s.bnd)
    G = [rng.uniform(-1.0, 1.0, size=(nb, n_random))]
    if n_split:
        pos = node_positions(mesh)
        c = pos[center] if center is not None else pos[s.domain].mean(axis=0)
        dim = pos.shape[1]
        dirs = [np.eye(dim)[i] for i in range(min(dim, n_split))]
        while len(dirs) < n_split:
            v = rng.standard_normal(dim)
            dirs.append(v / np.linalg.norm(v))
        rel = pos[s.bnd] - c
        G.append(np.column_stack([np.where(rel @ d > 1e-9, 1.0, -1.0) for d in dirs]))
    G = np.hstack(G)
    return s, s.solve(G)


# ---------------------------------------------------------------------------
# verifiers


def _usable(fit: InequalityFit, balls):
    for b in balls:
        if b.ok:
            yield b
        else:
            fit.skipped += 1


def verify_volume(mesh: Mesh, balls, laws: ScalingLaws | None = None) -> InequalityFit:
    """``V(x, r) / Phi(r)`` over the balls; the fit is the two-sided ``C_R``."""
    L = _laws(mesh, laws)
    fit = InequalityFit("V(Phi)", {"alpha": L.alpha}, two_sided=True)
    for b in _usable(fit, balls):
        fit.add(b.center, b.r, b.volume, L.phi(b.r), b.margin)
    return fit


def volume_exponent(mesh: Mesh, centers, radii) -> float:
    """Log-log slope of ``V(x, r)``; with several centres the volumes are averaged geometrically."""
    logs = []
    for x in np.atleast_1d(centers):
        d = mesh.distances(int(x))
        logs.append(np.log([mesh.ball(int(x), r, d).volume for r in radii]))
    return loglog_slope(radii, np.exp(np.mean(logs, axis=0)))


def walk_exponent(mesh: Mesh, centers, radii) -> float:
    """Log-log slope of the mean exit time from ``B(x, r)``, averaged as in :func:`volume_exponent`."""
    logs = [np.log([mean_exit_time(mesh, int(x), r) for r in radii]) for x in np.atleast_1d(centers)]
    return loglog_slope(radii, np.exp(np.mean(logs, axis=0)))


def verify_faber_krahn(mesh: Mesh, balls, qs=(4, 6, 8), laws: ScalingLaws | None = None, seed: int = 0):
    """Relative Faber-Krahn over nested sub-balls, for each ``nu = 1 - 2/q``.

    The sampled inequality is ``(m(B)/m(D))**nu / Psi(r) <= (1/C_F) * lam_1(D)``;
    the fitted constant is ``1/C_F``.  Returns a dict ``{nu: InequalityFit}``
    and records the best ``nu`` (largest ``C_F``) in each report.
    """
    L = _laws(mesh, laws)
    rng = np.random.default_rng(seed)
    fits = {1 - 2 / q: InequalityFit("FK(Psi)", {"nu": 1 - 2 / q, "q": q, "beta": L.beta}) for q in qs}
    for b in balls:
        if not b.ok:
            for f in fits.values():
                f.skipped += 1
            continue
        d0 = mesh.distances(b.center)
        trials = [(b.center, b.r)]
        for frac in (0.5, 0.25):
            trials.append((b.center, frac * b.r))
            inner = np.flatnonzero(d0 < (1 - frac) * b.r)
            if len(inner):
                y = int(rng.choice(inner))
                trials.append((y, min(frac * b.r, b.r - d0[y])))
        for y, rho in trials:
            if rho <= mesh.h:
                continue
            D = mesh.ball(y, rho).nodes
            if not np.all(d0[D] < b.r):
                continue
            lam = dirichlet_eigenvalue(mesh, D)
            mD = float(mesh.mass[D].sum())
            for nu, f in fits.items():
                f.add(b.center, b.r, (b.volume / mD) ** nu / L.psi(b.r), lam, b.margin, sub_center=y, rho=rho)
    for f in fits.values():
        f.notes["C_F"] = 1.0 / f.fitted_constant
    best = max(fits, key=lambda nu: fits[nu].notes["C_F"])
    for f in fits.values():
        f.notes["best_nu"] = best
    return fits


def _bump_family(mesh, b: Ball, rng, count):
    """Piecewise-linear test functions supported in the ball."""
    d0 = mesh.distances(b.center)
    out = [np.clip(1.0 - d0 / b.r, 0.0, None)]
    for _ in range(count):
        c = int(rng.choice(b.nodes))
        dc = mesh.distances(c)
        rho = rng.uniform(0.2, 1.0) * (b.r - d0[c])
        if rho <= mesh.h:
            continue
        out.append(np.clip(1.0 - dc / rho, 0.0, None))
    s = DirichletSolver(mesh, b.nodes, "direct")
    out.append(s.solve(None, np.ones(len(s.domain))))
    return out


def verify_sobolev(mesh: Mesh, balls, q: float = 4.0, laws: ScalingLaws | None = None, seed: int = 0, bumps: int = 8):
    """Local Sobolev inequality ``(avg_B |u|^q)^(1/q) <= C_L sqrt(Psi(r)) (E(u)/m(B))^(1/2)``."""
    if not q > 2:
        raise ValueError("q must exceed 2")
    L = _laws(mesh, laws)
    rng = np.random.default_rng(seed)
    fit = InequalityFit("LS(Psi,q)", {"q": q, "beta": L.beta})
    for b in _usable(fit, balls):
        for u in _bump_family(mesh, b, rng, bumps):
            lhs = _avg(mesh, b.nodes, u, q)
            rhs = math.sqrt(L.psi(b.r)) * math.sqrt(mesh.energy(u) / b.volume)
            fit.add(b.center, b.r, lhs, rhs, b.margin)
    return fit


def verify_poincare(mesh: Mesh, balls, laws: ScalingLaws | None = None) -> InequalityFit:
    """PI(Psi), same-ball variant: ``1 / (lam_2^N(B) Psi(r)) <= C_P``."""
    L = _laws(mesh, laws)
    fit = InequalityFit("PI(Psi), same-ball variant", {"beta": L.beta})
    for b in _usable(fit, balls):
        fit.add(b.center, b.r, 1.0 / neumann_gap(mesh, b), L.psi(b.r), b.margin)
    return fit


def verify_mean_value(mesh: Mesh, balls, n_samples: int = 100, seed: int = 0) -> InequalityFit:
    """``||u||_inf(B) <= C avg_2B |u|`` for harmonic ``u`` in ``2B``."""
    fit = InequalityFit("L1 mean value")
    for b in _usable(fit, balls):
        d0 = mesh.distances(b.center)
        D2 = np.flatnonzero(d0 < 2 * b.r)
        _, U = harmonic_samples(mesh, D2, n_samples, 16, seed, b.center)
        sup = np.abs(U[b.nodes]).max(axis=0)
        m = mesh.mass[D2]
        avg = m @ np.abs(U[D2]) / m.sum()
        for s, a in zip(sup, avg):
            fit.add(b.center, b.r, s, a, b.margin)
    return fit


def _grad_sup(mesh, nodes, U):
    segs = _segments_touching(mesh, nodes)
    G = mesh.gradient(U.T)[:, segs] if U.ndim == 2 else mesh.gradient(U)[segs]
    return np.abs(G).max(axis=-1)


def verify_grh(
    mesh: Mesh, balls, n_samples: int = 100, n_split: int = 16, laws: ScalingLaws | None = None, seed: int = 0, form: str = "grh"
) -> InequalityFit:
    """Reverse Hoelder inequalities for gradients of harmonic functions.

    ``form='grh'``: ``||grad u||_inf(B) * Psi(r) / Phi(r) <= C_H avg_2B |u|``;
    ``form='rh'``: the same with the factor ``r``.
    """
    L = _laws(mesh, laws)
    fit = InequalityFit("GRH(Phi,Psi)" if form == "grh" else "RH", {"alpha": L.alpha, "beta": L.beta})
    for b in _usable(fit, balls):
        d0 = mesh.distances(b.center)
        D2 = np.flatnonzero(d0 < 2 * b.r)
        _, U = harmonic_samples(mesh, D2, n_samples, n_split, seed, b.center)
        g = _grad_sup(mesh, b.nodes, U)
        m = mesh.mass[D2]
        avg = m @ np.abs(U[D2]) / m.sum()
        factor = b.r if form == "rh" else L.psi(b.r) / L.phi(b.r)
        kinds = ["random"] * n_samples + ["split"] * n_split
        for gi, a, kind in zip(g, avg, kinds):
            fit.add(b.center, b.r, gi * factor, a, b.margin, kind=kind)
    # i.i.d. data average out over the growing boundary of 2B, so scale
    # trends are read off the half-space patterns, which are scale-covariant
    fit.notes["trend_kind"] = "split"
    return fit


def verify_rh(mesh: Mesh, balls, **kw) -> InequalityFit:
    return verify_grh(mesh, balls, form="rh", **kw)


def _rhs_family(mesh, D2, rng, count, center_dist, r):
    """Bounded right-hand sides on ``2B``: random uniform, sub-ball indicators, constant."""
    n = len(D2)
    fs = [np.ones(n)]
    for _ in range(count):
        fs.append(rng.uniform(-1, 1, n))
        c = int(rng.choice(D2))
        rho = rng.uniform(0.1, 0.6) * r
        dc = mesh.distances(c)[D2]
        fs.append((dc < rho).astype(float))
    return np.column_stack(fs)


RHS_KINDS = ("constant", "random", "indicator")


def _rhs_kind(c: int) -> str:
    return RHS_KINDS[0] if c == 0 else RHS_KINDS[1 + (c - 1) % 2]


def _dyadic_sum(mesh, x_nodes, F, r, weight, p):
    """``sum_j weight(2**j) (avg_{B(x,2**j)} |f|^p)^(1/p)`` for ``x`` in ``x_nodes``.

    ``F`` holds full nodal right-hand sides as columns.  The sum runs over
    ``ceil(log2 h) <= j <= floor(log2 r)``.
    """
    j_lo = math.ceil(math.log2(mesh.h))
    j_hi = math.floor(math.log2(r) + 1e-12)
    Dx = np.atleast_2d(mesh.distances(x_nodes))
    out = np.zeros((len(x_nodes), F.shape[1]))
    Fp = np.abs(F) ** p
    for j in range(j_lo, j_hi + 1):
        rho = 2.0**j
        for i in range(len(x_nodes)):
            nodes = np.flatnonzero(Dx[i] < rho)
            m = mesh.mass[nodes]
            out[i] += weight(rho) * (m @ Fp[nodes] / m.sum()) ** (1.0 / p)
    return out


def verify_poisson_pointwise(
    mesh: Mesh, balls, p: float = 2.0, n_rhs: int = 6, n_points: int = 12, laws: ScalingLaws | None = None, seed: int = 0
) -> InequalityFit:
    """``|u(x)| <= C (avg_2B |u| + F_1(x))`` for ``Delta u = f`` in ``2B``."""
    L = _laws(mesh, laws)
    rng = np.random.default_rng(seed)
    fit = InequalityFit("Poisson pointwise", {"p": p, "beta": L.beta})
    for b in _usable(fit, balls):
        d0 = mesh.distances(b.center)
        D2 = np.flatnonzero(d0 < 2 * b.r)
        s = DirichletSolver(mesh, D2, "direct")
        Fd = _rhs_family(mesh, D2, rng, n_rhs, d0, b.r)
        G = rng.uniform(-1, 1, (len(s.bnd), Fd.shape[1]))
        G[:, 0] = 0.0
        U = s.solve(G, Fd)
        F = np.zeros((mesh.n_nodes, Fd.shape[1]))
        F[D2] = Fd
        xs = np.unique(np.r_[b.center, rng.choice(b.nodes, min(n_points, len(b.nodes)), replace=False)])
        F1 = _dyadic_sum(mesh, xs, F, b.r, L.psi, p)
        m = mesh.mass[D2]
        avg = m @ np.abs(U[D2]) / m.sum()
        for i, x in enumerate(xs):
            for c in range(U.shape[1]):
                fit.add(b.center, b.r, abs(U[x, c]), avg[c] + F1[i, c], b.margin, x=int(x), source=_rhs_kind(c))
    fit.notes["dyadic_floor"] = "sum over 2**j >= h; finer scales see a single node"
    return fit


def verify_poisson_gradient(
    mesh: Mesh, balls, p: float = 2.0, n_rhs: int = 6, n_points: int = 12, laws: ScalingLaws | None = None, seed: int = 0
) -> InequalityFit:
    """``|grad u(x)| <= C (Phi(r)/Psi(r) avg_2B |u| + F_2(x))`` at segment midpoints in ``B``."""
    L = _laws(mesh, laws)
    rng = np.random.default_rng(seed)
    fit = InequalityFit("Poisson gradient", {"p": p, "alpha": L.alpha, "beta": L.beta})
    for b in _usable(fit, balls):
        d0 = mesh.distances(b.center)
        D2 = np.flatnonzero(d0 < 2 * b.r)
        s = DirichletSolver(mesh, D2, "direct")
        Fd = _rhs_family(mesh, D2, rng, n_rhs, d0, b.r)
        G = rng.uniform(-1, 1, (len(s.bnd), Fd.shape[1]))
        G[:, 0] = 0.0
        U = s.solve(G, Fd)
        F = np.zeros((mesh.n_nodes, Fd.shape[1]))
        F[D2] = Fd
        inside = np.zeros(mesh.n_nodes, bool)
        inside[b.nodes] = True
        segs = np.flatnonzero(inside[mesh.segments[:, 0]] & inside[mesh.segments[:, 1]])
        if len(segs) == 0:
            continue
        pick = rng.choice(segs, min(n_points, len(segs)), replace=False)
        # gradient is constant on a segment; use its first node as the base point
        xs = mesh.segments[pick, 0]
        F2 = _dyadic_sum(mesh, xs, F, b.r, L.phi, p)
        grads = np.abs(mesh.gradient(U.T)[:, pick]).T
        m = mesh.mass[D2]
        avg = m @ np.abs(U[D2]) / m.sum()
        ratio = L.phi(b.r) / L.psi(b.r)
        for i, sg in enumerate(pick):
            for c in range(U.shape[1]):
                fit.add(b.center, b.r, grads[i, c], ratio * avg[c] + F2[i, c], b.margin, segment=int(sg), source=_rhs_kind(c))
    return fit


def verify_poisson_l1(mesh: Mesh, balls, p: float = 2.0, n_rhs: int = 6, laws: ScalingLaws | None = None, seed: int = 0):
    """``avg_B |u| <= C Psi(r) (avg_B |f|^p)^(1/p)`` for the zero-boundary solution in ``B``."""
    L = _laws(mesh, laws)
    rng = np.random.default_rng(seed)
    fit = InequalityFit("Poisson L1", {"p": p, "beta": L.beta})
    for b in _usable(fit, balls):
        s = DirichletSolver(mesh, b.nodes, "direct")
        d0 = mesh.distances(b.center)
        Fd = _rhs_family(mesh, s.domain, rng, n_rhs, d0, b.r)
        U = s.solve(None, Fd)
        m = mesh.mass[s.domain]
        lhs = m @ np.abs(U[s.domain]) / m.sum()
        rhs = L.psi(b.r) * (m @ np.abs(Fd) ** p / m.sum()) ** (1 / p)
        for a, c in zip(lhs, rhs):
            fit.add(b.center, b.r, a, c, b.margin)
    return fit


@dataclass
class ExponentFit:
    """A fitted log-log slope against its target value."""

    name: str
    slope: float
    target: float
    xs: list = field(default_factory=list)
    ys: list = field(default_factory=list)

    @property
    def rel_error(self) -> float:
        return abs(self.slope - self.target) / abs(self.target)
