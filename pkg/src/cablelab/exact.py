"""Exact harmonic extension on gasket and Vicsek cells.

All values are :class:`fractions.Fraction`.  Harmonic functions on a cable
system are linear on every cable, so their values at vertices determine them
completely and the whole computation is rational.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import lcm

import numpy as np

from .fractal import CableGraph, Skeleton, build_sierpinski, build_vicsek, enumerate_skeletons

Rational = Fraction


def as_rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError("pass exact values (int, Fraction or 'num/den' string), not float")
    return Fraction(x)


def rational_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True, eq=False)
class SkeletonHarmonic:
    """Harmonic function on a cell, stored at every vertex of the cell graph.

    ``graph`` is the cell itself (anchored at the origin); ``boundary_ids``
    are its corners in canonical order.
    """

    graph: CableGraph
    boundary_ids: tuple
    boundary_values: tuple
    values: tuple

    def __getitem__(self, i) -> Fraction:
        return self.values[i]

    def at(self, coord) -> Fraction:
        return self.values[self.graph.vertex_id(coord)]

    def as_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])

    @cached_property
    def interior_ids(self) -> np.ndarray:
        mask = np.ones(self.graph.n_vertices, bool)
        mask[list(self.boundary_ids)] = False
        return np.flatnonzero(mask)

    def kirchhoff_residual(self) -> dict:
        """Sum of outgoing slopes at each interior vertex (exactly 0 when harmonic)."""
        adj = self.graph.adjacency
        u = self.values
        return {int(i): sum((u[j] - u[i] for j in adj[i]), Fraction(0)) for i in self.interior_ids}

    def cells(self, level: int) -> list[Skeleton]:
        return enumerate_skeletons(self.graph, level)


def oscillation(hf: SkeletonHarmonic, cell) -> Fraction:
    """``max - min`` of ``hf`` over the vertices of ``cell`` (a Skeleton or ids)."""
    ids = cell.vertices if isinstance(cell, Skeleton) else cell
    vals = [hf.values[int(i)] for i in ids]
    return max(vals) - min(vals)


def _sg_scaled(a, depth):
    """Integer values ``u * 5**depth * den`` on the gasket cell of the given depth."""
    den = lcm(*(x.denominator for x in a))
    scale = den * 5**depth
    g = build_sierpinski(depth)
    vals = np.empty(g.n_vertices, dtype=object)
    size = 2**depth
    offs = np.zeros((1, 2), dtype=np.int64)
    corner = np.array([[x.numerator * (scale // x.denominator) for x in a]], dtype=object)
    ids = g.find(np.array([[0, 0], [size, 0], [0, size]]))
    vals[ids] = corner[0]
    e1 = np.array([1, 0])
    e2 = np.array([0, 1])
    while size > 1:
        half = size // 2
        a1, a2, a3 = corner[:, 0], corner[:, 1], corner[:, 2]
        q4 = (2 * a1 + 2 * a2 + a3) // 5
        q5 = (a1 + 2 * a2 + 2 * a3) // 5
        q6 = (2 * a1 + a2 + 2 * a3) // 5
        for pts, v in ((offs + half * e1, q4), (offs + half * (e1 + e2), q5), (offs + half * e2, q6)):
            vals[g.find(pts)] = v
        offs = np.concatenate([offs, offs + half * e1, offs + half * e2])
        corner = np.concatenate(
            [
                np.column_stack([a1, q4, q6]),
                np.column_stack([q4, a2, q5]),
                np.column_stack([q6, q5, a3]),
            ]
        )
        size = half
    return g, vals, scale


def sg_extend(a1, a2, a3, depth: int) -> SkeletonHarmonic:
    """Harmonic extension of corner data on the depth-``depth`` gasket cell.

    Each triangle with corner values ``a1, a2, a3`` (at ``q1 = (0,0)``,
    ``q2 = (s,0)``, ``q3 = (0,s)``) receives edge midpoint values
    ``u(q4) = 2/5 a1 + 2/5 a2 + 1/5 a3`` and cyclically, and is then split
    into its three corner triangles.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    a = tuple(as_rational(x) for x in (a1, a2, a3))
    g, vals, scale = _sg_scaled(a, depth)
    values = tuple(Fraction(int(v), scale) for v in vals)
    return SkeletonHarmonic(g, tuple(int(i) for i in g.corner_ids), a, values)


def vicsek_extend(boundary, skeleton=None, N: int = 2) -> SkeletonHarmonic:
    """Harmonic extension of corner data on a Vicsek cell.

    Parameters
    ----------
    boundary : sequence of 2**N exact values
        Corner values in ``itertools.product((0, 1), repeat=N)`` order.
    skeleton : Skeleton or int, optional
        Cell (or its level); defaults to level 1.
    N : int
        Ambient dimension.

    Notes
    -----
    The centre gets the mean of the corners, each corner-to-centre path is
    linear, and every side branch hanging off a path is constant, equal to
    the value where it attaches.
    """
    level = skeleton.level if isinstance(skeleton, Skeleton) else (1 if skeleton is None else int(skeleton))
    a = tuple(as_rational(x) for x in boundary)
    if len(a) != 2**N:
        raise ValueError(f"need {2**N} corner values")
    g = build_vicsek(N, level)
    adj = g.adjacency
    corners = [int(c) for c in g.corner_ids]
    centre = g.vertex_id(np.full(N, g.side // 2))
    c_val = sum(a, Fraction(0)) / len(a)
    length = 3**level
    vals: list = [None] * g.n_vertices
    vals[centre] = c_val
    for q, aq in zip(corners, a):
        # the tree path from the corner to the centre, via BFS parents
        parent = {q: -1}
        dq = deque([q])
        while dq:
            x = dq.popleft()
            if x == centre:
                break
            for y in adj[x]:
                y = int(y)
                if y not in parent:
                    parent[y] = x
                    dq.append(y)
        path = []
        x = centre
        while x != -1:
            path.append(x)
            x = parent[x]
        path.reverse()
        if len(path) - 1 != length:
            raise AssertionError("unexpected diagonal length")
        for step, x in enumerate(path):
            vals[x] = aq + (c_val - aq) * Fraction(step, length)
    dq = deque(i for i, v in enumerate(vals) if v is not None)
    while dq:
        x = dq.popleft()
        for y in adj[x]:
            if vals[y] is None:
                vals[y] = vals[x]
                dq.append(int(y))
    return SkeletonHarmonic(g, tuple(corners), a, tuple(vals))


def solve_exact(g: CableGraph, boundary_ids, boundary_values) -> tuple:
    """Exact discrete Dirichlet solve by rational Gaussian elimination.

    Intended as an independent oracle on small graphs (a few hundred vertices).
    """
    bvals = dict(zip((int(i) for i in boundary_ids), (as_rational(v) for v in boundary_values)))
    free = [i for i in range(g.n_vertices) if i not in bvals]
    pos = {v: j for j, v in enumerate(free)}
    n = len(free)
    A = [[Fraction(0)] * (n + 1) for _ in range(n)]
    for r, i in enumerate(free):
        nb = g.adjacency[i]
        A[r][r] = Fraction(len(nb))
        for j in nb:
            j = int(j)
            if j in pos:
                A[r][pos[j]] -= 1
            else:
                A[r][n] += bvals[j]
    for c in range(n):
        p = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[p] = A[p], A[c]
        piv = A[c][c]
        row_c = A[c]
        for r in range(n):
            if r != c and A[r][c] != 0:
                f = A[r][c] / piv
                row = A[r]
                for j in range(c, n + 1):
                    if row_c[j]:
                        row[j] -= f * row_c[j]
    out = [None] * g.n_vertices
    for i, v in bvals.items():
        out[i] = v
    for r, i in enumerate(free):
        out[i] = A[r][n] / A[r][r]
    return tuple(out)


@dataclass(frozen=True)
class RHCounterexample:
    """Harmonic function on the doubled ball around the junction of two gasket cells.

    The centre ``c = (S, 0)`` with ``S = 2**(n+1)`` joins cell ``A`` (corners
    ``(0,0), (S,0), (0,S)``) and its right neighbour ``B``.  The data are
    ``-1`` on the two far corners of ``A`` and ``+1`` on those of ``B``; by
    symmetry ``u(c) = 0`` and ``u`` on ``B`` mirrors ``-u`` on ``A``.
    """

    n: int

    @property
    def radius(self) -> int:
        return 2**self.n

    @property
    def gradient(self) -> Fraction:
        """Slope on the cables leaving ``c`` into ``B``: ``(3/5)**(n+1)``."""
        # along the corner of B at c the data are (0, 1, 1); each refinement
        # multiplies the values next to the zero corner by 3/5
        v = Fraction(1)
        for _ in range(self.n + 1):
            v = (2 * v + v) / 5
        return v

    @cached_property
    def _cell(self):
        return sg_extend(-1, 0, -1, self.n + 1)

    def cell_values(self) -> SkeletonHarmonic:
        """``u`` on cell ``A``; ``B`` is its mirror image with opposite sign."""
        return self._cell

    @cached_property
    def _integral_and_measure(self):
        hf = self._cell
        g = hf.graph
        S = 2 ** (self.n + 1)
        c = g.vertex_id([S, 0])
        dist = _bfs_hops(g, c)
        a, b = g.edges[:, 0], g.edges[:, 1]
        keep = np.minimum(dist[a], dist[b]) < S
        total = Fraction(0)
        for i, j in g.edges[keep].tolist():
            total += _abs_linear_integral(hf.values[i], hf.values[j])
        return 2 * total, 2 * int(keep.sum())

    @property
    def average_abs(self) -> Fraction:
        """Exact mean of ``|u|`` over the open ball ``2B = B(c, 2**(n+1))``."""
        integral, measure = self._integral_and_measure
        return integral / measure

    @property
    def ball_measure(self) -> int:
        return self._integral_and_measure[1]

    @property
    def rh_ratio(self) -> Fraction:
        """``|grad u| * r / avg_{2B} |u|`` with ``r = 2**n``."""
        return self.gradient * self.radius / self.average_abs


def rh_counterexample(n: int) -> RHCounterexample:
    if n < 0:
        raise ValueError("n must be >= 0")
    return RHCounterexample(n)


def _bfs_hops(g: CableGraph, src: int) -> np.ndarray:
    from scipy.sparse import csgraph

    d = csgraph.shortest_path(g.csgraph(), unweighted=True, indices=src)
    return d.astype(np.int64)


def _abs_linear_integral(x: Fraction, y: Fraction) -> Fraction:
    """``int_0^1 |(1-s) x + s y| ds`` exactly."""
    if (x >= 0) == (y >= 0) or x == 0 or y == 0:
        return (abs(x) + abs(y)) / 2
    return (x * x + y * y) / (2 * (abs(x) + abs(y)))
