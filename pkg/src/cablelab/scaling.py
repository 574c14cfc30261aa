"""Space-time scaling functions for fractal-like cable systems.

The volume function ``phi`` and the walk function ``psi`` are two-branch
power laws joined at ``r = 1``: the cable (1-D) regime below, the fractal
regime above.  ``upsilon`` is the rate function appearing in the exponent of
heat-kernel bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScalingLaws:
    """Volume exponent ``alpha`` and walk exponent ``beta`` of a cable system.

    Parameters
    ----------
    alpha : float
        Volume growth exponent, ``V(x, r) ~ r**alpha`` for ``r >= 1``.
    beta : float
        Walk dimension, must satisfy ``2 <= beta <= alpha + 1``.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (2.0 - 1e-12 <= self.beta <= self.alpha + 1.0 + 1e-12):
            raise ValueError(
                f"need 2 <= beta <= alpha + 1, got alpha={self.alpha}, beta={self.beta}"
            )

    @classmethod
    def vicsek(cls, N: int = 2) -> "ScalingLaws":
        if N < 2:
            raise ValueError("Vicsek dimension N must be >= 2")
        alpha = math.log(2**N + 1) / math.log(3)
        return cls(alpha, math.log(3 * (2**N + 1)) / math.log(3))

    @classmethod
    def sierpinski(cls) -> "ScalingLaws":
        return cls(math.log(3) / math.log(2), math.log(5) / math.log(2))

    @classmethod
    def for_family(cls, family: str, N: int = 2) -> "ScalingLaws":
        if family == "vicsek":
            return cls.vicsek(N)
        if family == "sierpinski":
            return cls.sierpinski()
        raise ValueError(f"unknown family {family!r}")

    # derived exponents
    @property
    def spectral_ratio(self) -> float:
        """``alpha / beta``, the on-diagonal heat-kernel decay exponent."""
        return self.alpha / self.beta

    @property
    def gradient_gap(self) -> float:
        """``1 - alpha / beta``, the upper end of the admissible quasi-Riesz range."""
        return 1.0 - self.alpha / self.beta

    @property
    def tail_exponent(self) -> float:
        """``beta / (beta - 1)``, the exponent of the sub-Gaussian tail."""
        return self.beta / (self.beta - 1.0)

    def phi(self, r):
        return phi(r, self.alpha)

    def psi(self, r):
        return psi(r, self.beta)

    def psi_inv(self, t):
        return psi_inv(t, self.beta)

    def upsilon(self, R, t):
        return upsilon(R, t, self.beta)

    def upsilon_asymptotic(self, R, t):
        return upsilon_asymptotic(R, t, self.beta)

    def gap_bound(self, A: float) -> float:
        return gap_bound(A, self.beta)


def _positive(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError(f"{name} must be positive")
    return x


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def phi(r, alpha: float):
    """``r`` below 1, ``r**alpha`` above."""
    r = _positive(r, "r")
    return _scalar_or_array(np.where(r < 1.0, r, r**alpha))


def psi(r, beta: float):
    """``r**2`` below 1, ``r**beta`` above."""
    r = _positive(r, "r")
    return _scalar_or_array(np.where(r < 1.0, r**2, r**beta))


def psi_inv(t, beta: float):
    t = _positive(t, "t")
    return _scalar_or_array(np.where(t < 1.0, np.sqrt(t), t ** (1.0 / beta)))


def _upsilon_scalar(R: float, t: float, beta: float) -> float:
    if R < 0 or not t > 0:
        raise ValueError("upsilon needs R >= 0 and t > 0")
    if R == 0:
        return 0.0
    # g(s) = R/s - t/psi(s); candidates: interior critical points of each
    # branch and the junction s = 1.  As s -> 0 or s -> inf, g -> -inf or 0.
    best = 0.0
    s_quad = 2.0 * t / R
    if s_quad < 1.0:
        best = max(best, R * R / (4.0 * t))
    s_pow = (beta * t / R) ** (1.0 / (beta - 1.0))
    if s_pow >= 1.0:
        val = (1.0 - 1.0 / beta) * R ** (beta / (beta - 1.0)) / (beta * t) ** (1.0 / (beta - 1.0))
        best = max(best, val)
    best = max(best, R - t)
    return best


def upsilon(R, t, beta: float):
    """Rate function ``sup_s (R/s - t/psi(s))`` evaluated in closed form.

    Each branch of ``psi`` is a pure power, so the supremum is attained at a
    stationary point of one branch, at the junction ``s = 1``, or in the limit
    ``s -> inf`` (value 0).
    """
    R_arr, t_arr = np.broadcast_arrays(np.asarray(R, float), np.asarray(t, float))
    out = np.empty(R_arr.shape)
    for idx in np.ndindex(R_arr.shape):
        out[idx] = _upsilon_scalar(float(R_arr[idx]), float(t_arr[idx]), beta)
    return _scalar_or_array(out)


def upsilon_grid(R: float, t: float, beta: float, num: int = 10_000) -> float:
    """Brute-force log-grid maximisation of ``R/s - t/psi(s)``; a test oracle.

    The grid is centred on the scale where the two terms balance and refined
    once around the best grid point by golden-section search.
    """
    if R == 0:
        return 0.0
    centre = max(t / R, 1e-300)
    lo, hi = math.log(centre) - 25.0, math.log(centre) + 25.0
    xs = np.linspace(lo, hi, num)
    s = np.exp(xs)
    g = R / s - t / np.where(s < 1.0, s**2, s**beta)
    i = int(np.argmax(g))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, num - 1)]

    def f(x):
        sv = math.exp(x)
        return R / sv - t / (sv**2 if sv < 1.0 else sv**beta)

    gr = (math.sqrt(5) - 1) / 2
    c, d = b - gr * (b - a), a + gr * (b - a)
    for _ in range(200):
        if f(c) > f(d):
            b = d
        else:
            a = c
        c, d = b - gr * (b - a), a + gr * (b - a)
    return max(float(g.max()), f(0.5 * (a + b)), 0.0)


def upsilon_asymptotic(R, t, beta: float):
    """Two-regime comparison form: ``R**2/t`` if ``t < R``, else sub-Gaussian."""
    R = np.asarray(R, float)
    t = np.asarray(t, float)
    out = np.where(t < R, R**2 / t, (R / t ** (1.0 / beta)) ** (beta / (beta - 1.0)))
    return _scalar_or_array(out)


def gap_bound(A: float, beta: float) -> float:
    """``sup_{x>0} (A * max(x**(1/2), x**(1/beta)) - x)``.

    The maximum of two concave-minus-linear branches; each has the closed-form
    maximum ``(1 - a) * (a*A)**(1/(1-a)) / a`` at exponent ``a``, attained at
    ``x = (a*A)**(1/(1-a))``.  The larger of the two branch maxima is the
    supremum because ``max(f, g) - x = max(f - x, g - x)``.
    """
    if not A > 0:
        raise ValueError("A must be positive")

    def branch(a):
        x_star = (a * A) ** (1.0 / (1.0 - a))
        return A * x_star**a - x_star

    return max(branch(0.5), branch(1.0 / beta))


def gap_function(t, s, A: float, beta: float):
    """``A * psi_inv(t)/psi_inv(s) - t/s``."""
    return A * psi_inv(t, beta) / psi_inv(s, beta) - np.asarray(t) / np.asarray(s)


def dyadic_sum_weight(r: float, func, j_min: int | None = None) -> float:
    """``sum_{j <= floor(log2 r)} func(2**j)`` truncated below at ``j_min``."""
    j_max = math.floor(math.log2(r))
    if j_min is None:
        j_min = j_max - 60
    return float(sum(func(2.0**j) for j in range(j_min, j_max + 1)))
