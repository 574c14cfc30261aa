"""Vicsek and Sierpinski cable systems on an exact integer lattice.

Coordinates are integers.  For the ``N``-dimensional Vicsek family one
lattice unit is ``1/sqrt(N)`` along each axis, so a cable joins two points
whose coordinates differ by ``+-1`` in every entry.  For the Sierpinski
family a point ``(a, b)`` stands for ``a*(1, 0) + b*(1/2, sqrt(3)/2)``.

The generation-``n`` core is built by iterated translation of the
generation-0 cell and is the finite piece ``V^(n)`` sitting at the origin
corner of the unbounded system.  Edges are produced together with the
vertices, copy by copy; the unit-distance rule alone would add cables
across the holes of the gasket.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_VERTEX_BUDGET = 2_000_000


class CapacityError(RuntimeError):
    """Raised when a requested construction exceeds the configured budget."""

    def __init__(self, message: str, size: int, budget: int):
        super().__init__(message)
        self.size = size
        self.budget = budget


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CableGraph:
    """Vertex/edge model of a generation-``n`` core of a cable system.

    Every edge is a cable of unit length and unit measure.  Vertices are
    sorted lexicographically by integer coordinates, and edges are stored as
    ``(i, j)`` with ``i < j``, which also fixes the cable orientation (from
    the lexicographically smaller endpoint to the larger one).
    """

    family: str
    generation: int
    coords: np.ndarray
    edges: np.ndarray
    N: int = 2

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen(self.coords))
        object.__setattr__(self, "edges", _frozen(self.edges))

    @property
    def n_vertices(self) -> int:
        return self.coords.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def side(self) -> int:
        """Lattice extent of the core along the first axis."""
        return int(self.coords[:, 0].max())

    @cached_property
    def _key_base(self) -> int:
        return int(self.coords.max()) + 1

    def keys(self, coords) -> np.ndarray:
        """Scalar keys that sort in the same order as lexicographic coords."""
        coords = np.asarray(coords, dtype=np.int64)
        base = self._key_base
        key = np.zeros(coords.shape[:-1], dtype=np.int64)
        for i in range(coords.shape[-1]):
            key = key * base + coords[..., i]
        return key

    @cached_property
    def _sorted_keys(self) -> np.ndarray:
        return self.keys(self.coords)

    def find(self, coords) -> np.ndarray:
        """Vertex ids of the given coordinates; ``-1`` where absent."""
        coords = np.asarray(coords, dtype=np.int64)
        inside = np.all((coords >= 0) & (coords < self._key_base), axis=-1)
        keys = self.keys(np.where(inside[..., None], coords, 0))
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, self.n_vertices - 1)
        hit = inside & (self._sorted_keys[pos] == keys)
        return np.where(hit, pos, -1)

    def vertex_id(self, coord) -> int:
        i = int(self.find(np.asarray(coord)[None, :])[0])
        if i < 0:
            raise KeyError(f"{tuple(coord)} is not a vertex of this graph")
        return i

    @cached_property
    def degrees(self) -> np.ndarray:
        return _frozen(np.bincount(self.edges.ravel(), minlength=self.n_vertices))

    @cached_property
    def adjacency(self) -> list[np.ndarray]:
        """Per-vertex sorted neighbour ids."""
        nbrs = [[] for _ in range(self.n_vertices)]
        for i, j in self.edges.tolist():
            nbrs[i].append(j)
            nbrs[j].append(i)
        return [np.array(sorted(n), dtype=np.int64) for n in nbrs]

    def csgraph(self):
        import scipy.sparse as sp

        i, j = self.edges[:, 0], self.edges[:, 1]
        n = self.n_vertices
        data = np.ones(2 * self.n_edges)
        return sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    def positions(self) -> np.ndarray:
        """Euclidean embedding, for output only."""
        c = self.coords.astype(float)
        if self.family != "sierpinski":
            return c / math.sqrt(self.N)
        return np.column_stack([c[:, 0] + 0.5 * c[:, 1], (math.sqrt(3) / 2) * c[:, 1]])

    @cached_property
    def corner_ids(self) -> np.ndarray:
        """Extreme corners of the core."""
        s = self.side
        if self.family not in ("vicsek", "sierpinski"):
            return _frozen(np.zeros(0, dtype=np.int64))
        if self.family == "vicsek":
            pts = [np.array(b) * s for b in itertools.product((0, 1), repeat=self.N)]
        else:
            pts = [np.array([0, 0]), np.array([s, 0]), np.array([0, s])]
        return _frozen(self.find(np.array(pts)))

    @cached_property
    def truncation_ids(self) -> np.ndarray:
        """Corners through which the core attaches to the rest of the unbounded system.

        The core is the origin copy inside the next generation; the Vicsek
        core touches the central copy at its far corner, the gasket core
        touches its two neighbouring copies at ``(s, 0)`` and ``(0, s)``.
        """
        s = self.side
        if self.family not in ("vicsek", "sierpinski"):
            return _frozen(np.zeros(0, dtype=np.int64))
        if self.family == "vicsek":
            pts = [np.full(self.N, s)]
        else:
            pts = [np.array([s, 0]), np.array([0, s])]
        return _frozen(self.find(np.array(pts)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "family": self.family,
                "N": self.N if self.family == "vicsek" else None,
                "generation": self.generation,
                "vertices": self.coords.tolist(),
                "edges": self.edges.tolist(),
            },
            separators=(",", ":"),
        )

    def to_edge_list(self) -> str:
        return "".join(f"{i} {j}\n" for i, j in self.edges.tolist())

    @classmethod
    def from_json(cls, text: str) -> "CableGraph":
        d = json.loads(text)
        return cls(
            family=d["family"],
            generation=int(d["generation"]),
            coords=np.array(d["vertices"], dtype=np.int64),
            edges=np.array(d["edges"], dtype=np.int64).reshape(-1, 2),
            N=int(d["N"]) if d.get("N") else 2,
        )


def _assemble(family, n, N, coords_list, edge_pairs):
    """Deduplicate translated copies and index edges by sorted vertex order."""
    coords = np.unique(np.concatenate(coords_list), axis=0)
    g = CableGraph(family, n, coords, np.zeros((0, 2), dtype=np.int64), N)
    a = g.find(edge_pairs[:, 0, :])
    b = g.find(edge_pairs[:, 1, :])
    e = np.sort(np.column_stack([a, b]), axis=1)
    e = np.unique(e, axis=0)
    return CableGraph(family, n, coords, e, N)


def _check_budget(n_vertices_est: int, budget: int | None):
    budget = DEFAULT_VERTEX_BUDGET if budget is None else budget
    if n_vertices_est > budget:
        raise CapacityError(
            f"construction needs about {n_vertices_est} vertices, budget is {budget}",
            n_vertices_est,
            budget,
        )


def _iterate(base_coords, base_edges, shifts_for_level, n):
    coords = base_coords
    pairs = base_edges
    for k in range(n):
        shifts = shifts_for_level(k)
        coords = np.concatenate([coords + s for s in shifts])
        pairs = np.concatenate([pairs + s for s in shifts])
        coords = np.unique(coords, axis=0)
    return coords, pairs


def build_vicsek(N: int, n: int, budget: int | None = None) -> CableGraph:
    """Generation-``n`` core of the ``N``-dimensional Vicsek cable system.

    Built from ``V^(k+1) = union_i (V^(k) + 2 * 3**k * p_i)`` with ``p_i`` the
    cube corners ``{0, 2}**N`` and the centre ``(1, ..., 1)`` in lattice units.

    Raises
    ------
    CapacityError
        If ``2**N * (2**N + 1)**n + 1`` vertices exceed the budget.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if n < 0:
        raise ValueError("generation must be >= 0")
    _check_budget(2**N * (2**N + 1) ** n + 1, budget)
    corners = np.array(list(itertools.product((0, 2), repeat=N)), dtype=np.int64)
    centre = np.ones(N, dtype=np.int64)
    base = np.vstack([corners, centre])
    pairs = np.stack([np.broadcast_to(centre, corners.shape), corners], axis=1)
    anchors = np.vstack([corners, centre])

    def shifts(k):
        return [2 * (3**k) * a for a in anchors]

    coords, pairs = _iterate(base, pairs, shifts, n)
    return _assemble("vicsek", n, N, [coords], pairs)


def build_sierpinski(n: int, budget: int | None = None) -> CableGraph:
    """Generation-``n`` core of the Sierpinski cable system.

    Built from ``V^(k+1) = union_i (V^(k) + 2**k * p_i)`` with
    ``p_i in {(0,0), (1,0), (0,1)}`` in lattice units.
    """
    if n < 0:
        raise ValueError("generation must be >= 0")
    _check_budget((3 ** (n + 1) + 3) // 2, budget)
    p = np.array([[0, 0], [1, 0], [0, 1]], dtype=np.int64)
    pairs = np.array([[p[0], p[1]], [p[1], p[2]], [p[2], p[0]]])

    def shifts(k):
        return [(2**k) * q for q in p]

    coords, pairs = _iterate(p, pairs, shifts, n)
    return _assemble("sierpinski", n, 2, [coords], pairs)


def build(family: str, generation: int, N: int = 2, budget: int | None = None) -> CableGraph:
    if family == "vicsek":
        return build_vicsek(N, generation, budget)
    if family == "sierpinski":
        return build_sierpinski(generation, budget)
    raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True, eq=False)
class Skeleton:
    """A translated copy of the level-``k`` cell inside a graph.

    ``boundary`` lists corner ids in the canonical order (``q_1, q_2, ...``);
    for the gasket ``q_1, q_2, q_3`` are the images of ``(0,0), (2**k,0),
    (0,2**k)`` and ``midpoints`` holds ``q_4, q_5, q_6`` (midpoints of
    ``[q1,q2], [q2,q3], [q3,q1]``).  For Vicsek skeletons the corners follow
    ``itertools.product((0, 1), repeat=N)`` order and ``center`` is set.
    """

    level: int
    offset: tuple
    vertices: np.ndarray
    edges: np.ndarray
    boundary: np.ndarray
    center: int | None = None
    midpoints: np.ndarray | None = field(default=None)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def cell_template(family: str, k: int, N: int = 2) -> CableGraph:
    """The level-``k`` cell anchored at the origin."""
    return build(family, k, N)


def _in_hull(points2x, family, offset, size, N):
    """Closed hull membership for points given in doubled coordinates."""
    rel = points2x - 2 * np.asarray(offset)
    if family == "vicsek":
        return np.all((rel >= 0) & (rel <= 2 * size), axis=-1)
    return (rel[..., 0] >= 0) & (rel[..., 1] >= 0) & (rel.sum(axis=-1) <= 2 * size)


def enumerate_skeletons(g: CableGraph, k: int) -> list[Skeleton]:
    """All level-``k`` skeletons contained in ``g``, found by translation search.

    A translate qualifies when its vertices and cables are present in ``g``
    and no other cable of ``g`` meets its closed convex hull in more than a
    point.
    """
    if k < 0 or k > g.generation:
        return []
    cell = cell_template(g.family, k, g.N)
    size = cell.side
    corner_offsets = cell.coords[cell.corner_ids]
    mid2x = g.coords[g.edges[:, 0]] + g.coords[g.edges[:, 1]]
    edge_keys = g.edges[:, 0].astype(np.int64) * g.n_vertices + g.edges[:, 1]
    edge_sorted = np.sort(edge_keys)
    out = []
    for v in g.coords:
        corners = g.find(corner_offsets + v)
        if np.any(corners < 0):
            continue
        ids = g.find(cell.coords + v)
        if np.any(ids < 0):
            continue
        e = np.sort(ids[cell.edges], axis=1)
        ek = e[:, 0] * g.n_vertices + e[:, 1]
        pos = np.searchsorted(edge_sorted, ek)
        if np.any(pos >= len(edge_sorted)) or np.any(edge_sorted[pos] != ek):
            continue
        inside = _in_hull(mid2x, g.family, v, size, g.N)
        if int(inside.sum()) != cell.n_edges:
            continue
        edge_ids = np.searchsorted(edge_keys, ek) if np.all(np.diff(edge_keys) > 0) else None
        center = None
        mids = None
        if g.family == "vicsek":
            center = int(g.find((np.full(g.N, size // 2) + v)[None, :])[0])
        elif k >= 1:
            h = size // 2
            mids = g.find(np.array([[h, 0], [h, h], [0, h]]) + v)
        out.append(
            Skeleton(
                level=k,
                offset=tuple(int(c) for c in v),
                vertices=np.sort(ids),
                edges=np.sort(edge_ids) if edge_ids is not None else e,
                boundary=corners,
                center=center,
                midpoints=mids,
            )
        )
    return out
