"""Piecewise-linear finite elements on a cable system.

Each unit cable is cut into ``k`` segments of length ``h = 1/k``.  Nodes are
numbered with the graph vertices first (same ids as in the graph) followed
by the interior points of each cable, ordered by ``(edge id, index)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .fractal import CableGraph, CapacityError

DEFAULT_NODE_BUDGET = 5_000_000


@dataclass(frozen=True, eq=False)
class Mesh:
    """Refined cable system with stiffness ``S`` and lumped mass ``m``.

    The generator is ``Delta = diag(m)^-1 S`` (nonnegative convention, so the
    heat semigroup is ``exp(-t Delta)``).
    """

    base: CableGraph
    k: int
    segments: np.ndarray
    segment_edge: np.ndarray
    stiffness: sp.csr_matrix
    mass: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.k

    @property
    def n_nodes(self) -> int:
        return self.mass.shape[0]

    @property
    def n_segments(self) -> int:
        return self.segments.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def interior_node(self, edge: int, j: int) -> int:
        """Node id of point ``j`` (``0..k``) on ``edge``, counted from its lower endpoint."""
        a, b = self.base.edges[edge]
        if j == 0:
            return int(a)
        if j == self.k:
            return int(b)
        return self.base.n_vertices + edge * (self.k - 1) + (j - 1)

    @cached_property
    def generator(self) -> sp.csr_matrix:
        return sp.diags(1.0 / self.mass) @ self.stiffness

    @cached_property
    def hop_graph(self) -> sp.csr_matrix:
        a, b = self.segments[:, 0], self.segments[:, 1]
        n = self.n_nodes
        w = np.ones(2 * self.n_segments)
        return sp.csr_matrix((w, (np.r_[a, b], np.r_[b, a])), shape=(n, n))

    def gradient(self, u) -> np.ndarray:
        """Per-segment slopes ``(u[end] - u[start]) / h`` along the cable orientation."""
        u = np.asarray(u)
        return (u[..., self.segments[:, 1]] - u[..., self.segments[:, 0]]) / self.h

    def energy(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ (self.stiffness @ u))

    def distances(self, x) -> np.ndarray:
        """Geodesic distance from node(s) ``x`` to every node.

        Segment lengths are all ``h``, so breadth-first hop counts scaled by
        ``h`` are exact.
        """
        d = csgraph.shortest_path(self.hop_graph, method="D", unweighted=True, indices=x)
        return d * self.h

    def geodesic_distance(self, x: int, y: int) -> float:
        return float(self.distances(x)[y])

    @cached_property
    def truncation_nodes(self) -> np.ndarray:
        return self.base.truncation_ids

    @cached_property
    def truncation_distance(self) -> np.ndarray:
        """Distance from each node to the truncation set (``inf`` if none)."""
        t = self.truncation_nodes
        if len(t) == 0:
            return np.full(self.n_nodes, np.inf)
        return np.min(np.atleast_2d(self.distances(t)), axis=0)

    def ball(self, center: int, r: float, dist: np.ndarray | None = None) -> "Ball":
        """Open geodesic ball ``{x : d(center, x) < r}``."""
        if not r > 0:
            raise ValueError("radius must be positive")
        if dist is None:
            dist = self.distances(center)
        nodes = np.flatnonzero(dist < r - 1e-12 * max(r, 1.0))
        volume = float(self.mass[nodes].sum())
        margin = float(self.truncation_distance[center] - 2.0 * r)
        return Ball(int(center), float(r), nodes, volume, margin)

    def segment_measure_in(self, dist: np.ndarray, r: float) -> float:
        """Exact cable measure of the open ball ``d < r`` given nodal distances."""
        d0 = dist[self.segments[:, 0]]
        d1 = dist[self.segments[:, 1]]
        lo = np.minimum(d0, d1)
        flat = np.isclose(d0, d1)
        h = self.h
        part = np.where(flat, 2.0 * np.clip(r - lo, 0.0, h / 2), np.clip(r - lo, 0.0, h))
        return float(part.sum())

    def to_coo_text(self) -> str:
        c = self.stiffness.tocoo()
        order = np.lexsort((c.col, c.row))
        return "".join(
            f"{i} {j} {v:.17g}\n" for i, j, v in zip(c.row[order], c.col[order], c.data[order])
        )


@dataclass(frozen=True)
class Ball:
    """Open ball with lumped volume and distance-to-truncation margin.

    ``margin`` is ``d(center, truncation) - 2r``; a ball with ``margin <= 0``
    has its double touching the artificial boundary of the finite core and
    must be skipped by verifiers.
    """

    center: int
    r: float
    nodes: np.ndarray
    volume: float
    margin: float

    @property
    def ok(self) -> bool:
        return self.margin > 0


def balls_to_csv(balls) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["center", "r", "V", "margin"])
    for b in balls:
        w.writerow([b.center, repr(b.r), repr(b.volume), repr(b.margin)])
    return buf.getvalue()


def refine(g: CableGraph, k: int, budget: int | None = None) -> Mesh:
    """Cut every cable of ``g`` into ``k`` segments and assemble the operators."""
    if k < 1:
        raise ValueError("k must be >= 1")
    nv, ne = g.n_vertices, g.n_edges
    n = nv + (k - 1) * ne
    budget = DEFAULT_NODE_BUDGET if budget is None else budget
    if n > budget:
        raise CapacityError(f"mesh needs {n} nodes, budget is {budget}", n, budget)

    # node chain along each edge: lower vertex, k-1 interior nodes, upper vertex
    chain = np.empty((ne, k + 1), dtype=np.int64)
    chain[:, 0] = g.edges[:, 0]
    chain[:, k] = g.edges[:, 1]
    if k > 1:
        chain[:, 1:k] = nv + np.arange(ne * (k - 1)).reshape(ne, k - 1)
    segs = np.stack([chain[:, :-1].ravel(), chain[:, 1:].ravel()], axis=1)
    seg_edge = np.repeat(np.arange(ne), k)

    h = 1.0 / k
    a, b = segs[:, 0], segs[:, 1]
    rows = np.r_[a, b, a, b]
    cols = np.r_[a, b, b, a]
    vals = np.r_[np.ones(2 * len(a)), -np.ones(2 * len(a))] / h
    S = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    S.sum_duplicates()
    mass = np.bincount(segs.ravel(), minlength=n) * (h / 2.0)
    return Mesh(g, k, segs, seg_edge, S, mass)


def single_cable(k: int) -> Mesh:
    """A lone unit cable between two vertices, useful for 1-D checks."""
    g = CableGraph("custom", 0, np.array([[0], [1]]), np.array([[0, 1]]), N=1)
    return refine(g, k)


def path_graph(n_edges: int) -> CableGraph:
    coords = np.arange(n_edges + 1)[:, None]
    edges = np.column_stack([np.arange(n_edges), np.arange(1, n_edges + 1)])
    return CableGraph("custom", 0, coords, edges, N=1)
