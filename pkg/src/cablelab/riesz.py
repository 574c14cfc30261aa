"""Local and quasi-Riesz transforms by semigroup quadrature.

``(I + Delta)^(-1/2) = Gamma(1/2)^-1 int_0^inf t^(-1/2) e^(-t) exp(-t Delta) dt``
and
``exp(-Delta) Delta^(-eps) = Gamma(eps)^-1 int_0^inf t^(eps-1) exp(-(1+t) Delta) dt``.
Both integrals are discretised with Gauss-Legendre panels in ``log t`` and
an analytic head on ``[0, t_min]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.special as sc
import scipy.sparse.linalg as spla

from .heat import Semigroup, grad_lp_norm, lp_norm, make_battery
from .mesh import Mesh
from .reports import loglog_slope
from .scaling import ScalingLaws


@dataclass
class QuadratureScheme:
    """Gauss-Legendre panels in ``x = log t`` for ``int_0^T t^(a-1) e^(-c t) phi(t) dt``.

    Parameters
    ----------
    a : float
        Power of the weight ``t^(a-1)`` (``eps`` or ``1/2``).
    damping : float
        ``c`` in the scalar factor ``e^(-c t)`` folded into the weights.
    t_min, T : float
        Panel range; ``[0, t_min]`` is handled by a two-term Taylor head.
    panels_per_decade : int
    order : int
    """

    a: float
    damping: float = 0.0
    t_min: float = 1e-8
    T: float = 40.0
    panels_per_decade: int = 2
    order: int = 8
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("weight exponent must be positive")
        x, w = np.polynomial.legendre.leggauss(self.order)
        lo, hi = math.log(self.t_min), math.log(self.T)
        n_pan = max(1, math.ceil(self.panels_per_decade * (hi - lo) / math.log(10)))
        edges = np.linspace(lo, hi, n_pan + 1)
        xs, ws = [], []
        for l, r in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (r - l) * x + 0.5 * (r + l))
            ws.append(0.5 * (r - l) * w)
        xs = np.concatenate(xs)
        ws = np.concatenate(ws)
        t = np.exp(xs)
        self.nodes = t
        self.weights = ws * t**self.a * np.exp(-self.damping * t)

    @property
    def normalizer(self) -> float:
        return math.gamma(self.a)

    def head(self) -> tuple[float, float]:
        """Coefficients of ``phi(0)`` and ``phi'(0)`` for the integral over ``[0, t_min]``."""
        a, c, tm = self.a, self.damping, self.t_min
        # e^(-c t) phi(t) ~ phi(0) + (phi'(0) - c phi(0)) t
        c0 = tm**a / a - c * tm ** (a + 1) / (a + 1)
        c1 = tm ** (a + 1) / (a + 1)
        return c0, c1

    def integrate_scalar(self, phi) -> float:
        """Apply the rule to a scalar ``phi``, using a numerical ``phi'(0)``."""
        h = 1e-6 * max(self.t_min, 1e-12)
        c0, c1 = self.head()
        return float(self.weights @ phi(self.nodes) + c0 * phi(0.0) + c1 * (phi(h) - phi(0.0)) / h)

    def refined(self) -> "QuadratureScheme":
        return QuadratureScheme(self.a, self.damping, self.t_min, self.T, 2 * self.panels_per_decade, self.order)


def spectral_gap(mesh: Mesh, semigroup: Semigroup | None = None) -> float:
    """Smallest nonzero eigenvalue of the generator (connected mesh)."""
    sg = semigroup or Semigroup(mesh)
    if mesh.n_nodes <= 1500:
        return float(sg.spectrum[0][1])
    w = spla.eigsh(sg.A, k=2, sigma=-1e-6 * mesh.h, which="LM", return_eigenvectors=False)
    return float(np.sort(w)[1])


def tail_cutoff(eps: float, gap: float, tol: float = 1e-10) -> float:
    """``T`` with ``sqrt(gap) gap^-eps Gamma(eps, gap T) / Gamma(eps) < tol``.

    For mean-zero data ``|| grad exp(-(1+t) Delta) f ||_2 <= sqrt(gap) e^(-gap t) ||f||_2``
    once ``t >= 1/(2 gap)``, so this bounds the neglected part of the integral.
    """
    T = 1.0 / gap
    while True:
        rem = math.sqrt(gap) * gap ** (-eps) * sc.gammaincc(eps, gap * T)
        if T >= 1.0 / (2 * gap) and rem < tol:
            return T
        T *= 1.5


def _project_mean_zero(mesh, F):
    w = mesh.mass / mesh.total_mass
    return F - np.outer(np.ones(mesh.n_nodes), w @ F) if F.ndim == 2 else F - w @ F


@dataclass
class RieszResult:
    """Nodal potential ``u`` and its per-segment gradient."""

    potential: np.ndarray
    gradient: np.ndarray
    remainder_bound: float = 0.0


class RieszOperators:
    """Quadrature realisation of ``grad (I + Delta)^-1/2`` and ``grad exp(-Delta) Delta^-eps``."""

    def __init__(self, mesh: Mesh, panels_per_decade: int = 2, order: int = 8, t_split: float = 50.0):
        self.mesh = mesh
        self.sg = Semigroup(mesh)
        self.ppd = panels_per_decade
        self.order = order
        self.t_split = t_split
        self._gap = None

    @property
    def gap(self) -> float:
        if self._gap is None:
            self._gap = spectral_gap(self.mesh, self.sg)
        return self._gap

    def _march(self, F, times):
        """``exp(-t_i Delta) F`` for increasing ``times``; yields (index, state)."""
        cur, tc = F, 0.0
        for i, t in enumerate(times):
            if t > tc:
                cur = self.sg.apply(cur, t - tc)
                tc = t
            yield i, cur

    def local(self, f) -> RieszResult:
        F = np.asarray(f, float)
        q = QuadratureScheme(0.5, 1.0, 1e-8, 40.0, self.ppd, self.order)
        acc = np.zeros_like(F)
        for i, U in self._march(F, q.nodes):
            acc += q.weights[i] * U
        c0, c1 = q.head()
        dF = -(self.mesh.stiffness @ F) / (self.mesh.mass[:, None] if F.ndim == 2 else self.mesh.mass)
        acc += c0 * F + c1 * dF
        u = acc / q.normalizer
        return RieszResult(u, self.mesh.gradient(u.T).T if u.ndim == 2 else self.mesh.gradient(u), 0.0)

    def at_infinity(self, f, eps: float, tol: float = 1e-10, check_mean: bool = True) -> RieszResult:
        F = np.asarray(f, float)
        if check_mean:
            mean = (self.mesh.mass @ F) / self.mesh.total_mass
            scale = np.abs(F).max(axis=0) if F.ndim == 2 else abs(F).max()
            if np.any(np.abs(mean) > 1e-10 * np.maximum(scale, 1e-300)):
                raise ValueError("input must have mass-weighted mean zero")
        gap = self.gap
        T = tail_cutoff(eps, gap, tol)
        q = QuadratureScheme(eps, 0.0, 1e-8, T, self.ppd, self.order)
        G0 = self.sg.apply(F, 1.0)
        acc = np.zeros_like(F)
        near = q.nodes <= self.t_split
        state = G0
        for i, U in self._march(G0, q.nodes[near]):
            acc += q.weights[near][i] * U
            state = U
        far = q.nodes[~near]
        if len(far):
            t0 = q.nodes[near][-1] if near.any() else 0.0
            w_far = q.weights[~near]
            cols = state if state.ndim == 2 else state[:, None]
            sm = self.sg.sqrt_m
            for j in range(cols.shape[1]):
                V = self.sg._krylov(cols[:, j] * sm, far - t0) / sm[:, None]
                if F.ndim == 2:
                    acc[:, j] += V @ w_far
                else:
                    acc += V @ w_far
        c0, c1 = q.head()
        dG0 = -(self.mesh.stiffness @ G0) / (self.mesh.mass[:, None] if F.ndim == 2 else self.mesh.mass)
        acc += c0 * G0 + c1 * dG0
        u = acc / q.normalizer
        rem = math.sqrt(gap) * gap ** (-eps) * sc.gammaincc(eps, gap * T)
        return RieszResult(u, self.mesh.gradient(u.T).T if u.ndim == 2 else self.mesh.gradient(u), rem)


def _check_eps(mesh, eps, laws):
    L = laws
    if L is None and mesh.base.family != "custom":
        L = ScalingLaws.for_family(mesh.base.family, mesh.base.N)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if L is not None and not eps < L.gradient_gap:
        raise ValueError(f"eps must lie in (0, 1 - alpha/beta) = (0, {L.gradient_gap:.4f})")


def quasi_riesz_apply(mesh: Mesh, f, eps: float, laws: ScalingLaws | None = None, ops: RieszOperators | None = None):
    """``grad exp(-Delta) Delta^-eps f`` as a per-segment field, for mean-zero ``f``."""
    _check_eps(mesh, eps, laws)
    ops = ops or RieszOperators(mesh)
    return ops.at_infinity(f, eps).gradient


def local_riesz_apply(mesh: Mesh, f, ops: RieszOperators | None = None):
    """``grad (I + Delta)^-1/2 f`` as a per-segment field."""
    ops = ops or RieszOperators(mesh)
    return ops.local(f).gradient


def spectral_riesz(mesh: Mesh, f, kind: str, eps: float = 0.0) -> np.ndarray:
    """Dense functional-calculus reference for small meshes."""
    sg = Semigroup(mesh)
    w, V = sg.spectrum
    if kind == "local":
        mult = 1.0 / np.sqrt(1.0 + w)
    else:
        mult = np.zeros_like(w)
        pos = w > 1e-10 * max(w.max(), 1.0)
        mult[pos] = w[pos] ** (-eps) * np.exp(-w[pos])
    F = np.asarray(f, float)
    sm = sg.sqrt_m[:, None] if F.ndim == 2 else sg.sqrt_m
    c = V.T @ (F * sm)
    u = V @ ((mult[:, None] if F.ndim == 2 else mult) * c) / sm
    return mesh.gradient(u.T).T if u.ndim == 2 else mesh.gradient(u)


@dataclass
class TrendReport:
    """Empirical operator norms across sizes and the fitted log-slope."""

    operator: str
    family: str
    p: float
    eps: float | None
    sizes: list
    norms: list
    threshold: float = 0.05

    @property
    def slope(self) -> float:
        """Least-squares slope of ``log norm`` against the size index (generation)."""
        x = np.asarray(self.sizes, float)
        y = np.log(np.asarray(self.norms, float))
        if len(x) < 2:
            return 0.0
        return float(np.polyfit(x, y, 1)[0])

    @property
    def bounded(self) -> bool:
        return self.slope <= self.threshold

    def rows(self):
        return [
            {"generation": s, "p": self.p, "epsilon": self.eps, "empirical_norm": n}
            for s, n in zip(self.sizes, self.norms)
        ]

    def to_dict(self):
        return {
            "operator": self.operator,
            "family": self.family,
            "p": self.p,
            "epsilon": self.eps,
            "rows": self.rows(),
            "slope": self.slope,
            "verdict": "bounded" if self.bounded else "growing",
        }


def empirical_norms(mesh: Mesh, operator: str, ps, eps: float | None = None, n_samples: int = 200, seed: int = 0):
    """``max_f ||T f||_p / ||f||_p`` over the test battery, for each ``p`` in ``ps``.

    ``operator`` is ``'local'``, ``'infinity'`` or ``'quasi'`` (their sum).
    The battery is projected to mean zero unless ``operator == 'local'``.
    """
    ops = RieszOperators(mesh)
    F = make_battery(mesh, n_samples, seed, mean_zero=operator != "local")
    G = np.zeros((F.shape[1], mesh.n_segments))
    if operator in ("local", "quasi"):
        G += ops.local(F).gradient.T
    if operator in ("infinity", "quasi"):
        G += ops.at_infinity(F, eps).gradient.T
    out = {}
    for p in ps:
        num = grad_lp_norm(mesh, G, p)
        den = np.array([lp_norm(mesh, F[:, i], p) for i in range(F.shape[1])])
        out[p] = float((num / den).max())
    return out


def lp_norm_scan(operator: str, family: str, generations, ps=(2.0,), eps: float | None = None, N: int = 2,
                 k: int = 1, n_samples: int = 200, seed: int = 0) -> dict:
    """Empirical norms across generations; returns ``{p: TrendReport}``."""
    from .fractal import build
    from .mesh import refine

    L = ScalingLaws.for_family(family, N)
    if operator != "local":
        eps = L.gradient_gap / 2 if eps is None else eps
        if not 0 < eps < L.gradient_gap:
            raise ValueError("eps out of range")
    res = {p: [] for p in ps}
    for n in generations:
        mesh = refine(build(family, n, N), k)
        norms = empirical_norms(mesh, operator, ps, eps, n_samples, seed)
        for p in ps:
            res[p].append(norms[p])
    return {p: TrendReport(operator, family, p, eps, list(generations), res[p]) for p in ps}
