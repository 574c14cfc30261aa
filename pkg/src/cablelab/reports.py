"""Fitted-constant reports for sampled inequalities."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.log(np.asarray(x, float))
    y = np.log(np.asarray(y, float))
    if len(x) < 2:
        return float("nan")
    A = np.column_stack([x, np.ones_like(x)])
    return float(np.linalg.lstsq(A, y, rcond=None)[0][0])


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


@dataclass
class InequalityFit:
    """Samples of an inequality ``lhs <= C * rhs`` and the smallest valid ``C``.

    With ``two_sided=True`` the inequality is ``1/C <= lhs/rhs <= C``.
    """

    name: str
    exponents: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)
    margin_min: float = float("inf")
    skipped: int = 0
    two_sided: bool = False
    notes: dict = field(default_factory=dict)

    def add(self, center, r, lhs, rhs, margin=None, **extra):
        ratio = float(lhs) / float(rhs) if rhs > 0 else (0.0 if lhs == 0 else float("inf"))
        s = {"center": int(center), "r": float(r), "lhs": float(lhs), "rhs": float(rhs), "ratio": ratio}
        s.update(extra)
        self.samples.append(s)
        if margin is not None:
            self.margin_min = min(self.margin_min, float(margin))

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def ratios(self) -> np.ndarray:
        return np.array([s["ratio"] for s in self.samples], dtype=float)

    @property
    def fitted_constant(self) -> float:
        r = self.ratios
        if len(r) == 0:
            return float("nan")
        if self.two_sided:
            pos = r[r > 0]
            return float(max(pos.max(), 1.0 / pos.min()))
        return float(r.max())

    def normalized_ratios(self) -> np.ndarray:
        """Ratios divided by the fitted constant; all are ``<= 1`` by construction."""
        return self.ratios / self.fitted_constant

    def sup_by(self, key: str = "r", kind: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-value supremum of the ratio, grouped by a sample field.

        ``kind`` restricts to samples tagged with that ``kind`` field.
        """
        groups: dict = {}
        for s in self.samples:
            if kind is not None and s.get("kind") != kind:
                continue
            groups[s[key]] = max(groups.get(s[key], -np.inf), s["ratio"])
        xs = np.array(sorted(groups))
        return xs, np.array([groups[x] for x in xs])

    def trend_slope(self, key: str = "r", kind: str | None = None) -> float:
        """Log-log slope of the per-``key`` supremum of the ratio.

        Defaults to the sample kind named in ``notes['trend_kind']``, if any.
        """
        xs, ys = self.sup_by(key, kind or self.notes.get("trend_kind"))
        keep = (xs > 0) & (ys > 0)
        return loglog_slope(xs[keep], ys[keep])

    def to_dict(self) -> dict:
        return _clean(
            {
                "name": self.name,
                "exponents": self.exponents,
                "samples": self.samples,
                "fitted_constant": self.fitted_constant,
                "margin_min": self.margin_min,
                "skipped": self.skipped,
                "notes": self.notes,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        keys = ["center", "r", "lhs", "rhs", "ratio"]
        extra = sorted({k for s in self.samples for k in s} - set(keys))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys + extra)
        for s in self.samples:
            w.writerow([repr(s.get(k, "")) if isinstance(s.get(k), float) else s.get(k, "") for k in keys + extra])
        return buf.getvalue()
