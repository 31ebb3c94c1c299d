"""Cubic lattices, oriented edges and plaquettes.

Two geometries are supported:

* ``torus``: the periodic lattice of half-width ``L``.  After identifying
  opposite faces of ``{-L, ..., L}^d`` it has ``(2L)^d`` vertices, stored
  with coordinates ``{0, ..., 2L-1}^d``.
* ``free``: the box ``{-M, ..., M}^d`` with free boundary, ``(2M+1)^d``
  vertices, coordinates stored shifted by ``M``.

Edges are positively oriented and enumerated lexicographically by tail
vertex, then by direction.  A plaquette with smallest corner ``a`` spanned
by directions ``i < j`` stores

    e1 = (a, a+e_i)      sign +
    e2 = (a+e_i, a+e_i+e_j)  sign +
    e3 = (a+e_j, a+e_j+e_i)  sign -
    e4 = (a, a+e_j)      sign -

so that the signed edge sum is ``x(e1) + x(e2) - x(e3) - x(e4)``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Literal

import numpy as np

from .errors import InvalidParameterError

Mode = Literal["torus", "free"]

PLAQUETTE_SIGNS = np.array([1.0, 1.0, -1.0, -1.0])

# 3-point Gauss-Legendre rule on [-1/2, 1/2]
_GL3_NODES = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)]) / 2.0
_GL3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


@dataclass(frozen=True, eq=False)
class Lattice:
    """Immutable lattice geometry.  Build with :func:`build_lattice`."""

    d: int
    half_width: int
    mode: str
    side: int
    vertex_coords: np.ndarray = field(repr=False)   # (V, d) int
    edge_tail: np.ndarray = field(repr=False)       # (E,) vertex index
    edge_head: np.ndarray = field(repr=False)       # (E,) vertex index
    edge_dir: np.ndarray = field(repr=False)        # (E,) direction 0..d-1
    edge_lookup: np.ndarray = field(repr=False)     # (V, d) edge id or -1
    plaquettes: np.ndarray = field(repr=False)      # (P, 4) edge ids
    plaquette_dirs: np.ndarray = field(repr=False)  # (P, 2) (i, j), i < j
    plaquette_corner: np.ndarray = field(repr=False)  # (P,) vertex index
    boundary: np.ndarray = field(repr=False)        # (E,) bool
    edge_plaq_ptr: np.ndarray = field(repr=False)   # CSR pointer, (E+1,)
    edge_plaq_idx: np.ndarray = field(repr=False)   # plaquette ids
    edge_plaq_slot: np.ndarray = field(repr=False)  # slot 0..3 in plaquette

    @property
    def n_vertices(self) -> int:
        return self.vertex_coords.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_tail.shape[0]

    @property
    def n_plaquettes(self) -> int:
        return self.plaquettes.shape[0]

    @property
    def offset(self) -> int:
        """Shift between stored coordinates and lattice positions."""
        return self.half_width

    def descriptor(self) -> dict:
        return {"d": self.d, "half_width": self.half_width, "mode": self.mode}

    def vertex_index(self, coords) -> int:
        c = np.asarray(coords, dtype=int)
        if self.mode == "torus":
            c = np.mod(c, self.side)
        if c.shape != (self.d,) or np.any(c < 0) or np.any(c >= self.side):
            raise InvalidParameterError(f"vertex {coords} not in lattice")
        return int(np.ravel_multi_index(tuple(c), (self.side,) * self.d))

    def edge_index(self, tail_coords, direction: int) -> int:
        """Id of the positively oriented edge leaving ``tail_coords`` along ``direction``."""
        if not 0 <= direction < self.d:
            raise InvalidParameterError(f"direction {direction} out of range")
        e = int(self.edge_lookup[self.vertex_index(tail_coords), direction])
        if e < 0:
            raise InvalidParameterError(f"no edge from {tail_coords} along {direction}")
        return e

    def edge_positions(self) -> np.ndarray:
        """Lattice positions of edge tails (box: ``{-M..M}``; torus: ``{-L..L-1}``)."""
        return (self.vertex_coords[self.edge_tail] - self.offset).astype(float)

    def plaquettes_of(self, e: int) -> list[tuple[int, int]]:
        """``(plaquette id, slot)`` pairs for every plaquette containing edge ``e``."""
        self._check_edge(e)
        lo, hi = self.edge_plaq_ptr[e], self.edge_plaq_ptr[e + 1]
        return list(zip(self.edge_plaq_idx[lo:hi].tolist(), self.edge_plaq_slot[lo:hi].tolist()))

    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    def _check_edge(self, e: int) -> None:
        if not 0 <= int(e) < self.n_edges:
            raise InvalidParameterError(f"edge id {e} out of range")

    def _check_plaquette(self, p: int) -> None:
        if not 0 <= int(p) < self.n_plaquettes:
            raise InvalidParameterError(f"plaquette id {p} out of range")


def build_lattice(d: int, half_width: int, mode: Mode = "torus") -> Lattice:
    """Construct a torus (half-width ``L``) or free box (half-width ``M``)."""
    if int(d) != d or d < 2:
        raise InvalidParameterError(f"dimension must be an integer >= 2, got {d}")
    if int(half_width) != half_width or half_width < 1:
        raise InvalidParameterError(f"half-width must be an integer >= 1, got {half_width}")
    if mode not in ("torus", "free"):
        raise InvalidParameterError(f"unknown boundary mode {mode!r}")
    d, half_width = int(d), int(half_width)
    torus = mode == "torus"
    side = 2 * half_width if torus else 2 * half_width + 1
    shape = (side,) * d
    nv = side**d
    coords = np.array(np.unravel_index(np.arange(nv), shape)).T.astype(np.int64)

    def shifted(c, i):
        c = c.copy()
        c[..., i] += 1
        if torus:
            c[..., i] %= side
        return c

    lookup = -np.ones((nv, d), dtype=np.int64)
    tails, heads, dirs = [], [], []
    for v in range(nv):
        c = coords[v]
        for i in range(d):
            if not torus and c[i] == side - 1:
                continue
            lookup[v, i] = len(tails)
            tails.append(v)
            heads.append(np.ravel_multi_index(tuple(shifted(c, i)), shape))
            dirs.append(i)
    tails = np.array(tails, dtype=np.int64)
    heads = np.array(heads, dtype=np.int64)
    dirs = np.array(dirs, dtype=np.int64)

    plaqs, pdirs, corners = [], [], []
    for v in range(nv):
        c = coords[v]
        for i in range(d):
            for j in range(i + 1, d):
                if not torus and (c[i] == side - 1 or c[j] == side - 1):
                    continue
                ci = np.ravel_multi_index(tuple(shifted(c, i)), shape)
                cj = np.ravel_multi_index(tuple(shifted(c, j)), shape)
                plaqs.append((lookup[v, i], lookup[ci, j], lookup[cj, i], lookup[v, j]))
                pdirs.append((i, j))
                corners.append(v)
    plaqs = np.array(plaqs, dtype=np.int64).reshape(-1, 4)
    pdirs = np.array(pdirs, dtype=np.int64).reshape(-1, 2)
    corners = np.array(corners, dtype=np.int64)

    if torus:
        boundary = np.zeros(len(tails), dtype=bool)
    else:
        tc = coords[tails]
        on_face = (tc == 0) | (tc == side - 1)
        on_face[np.arange(len(tails)), dirs] = False
        boundary = on_face.any(axis=1)

    ne = len(tails)
    flat_e = plaqs.ravel()
    flat_p = np.repeat(np.arange(len(plaqs)), 4)
    flat_s = np.tile(np.arange(4), len(plaqs))
    order = np.lexsort((flat_s, flat_p, flat_e))
    counts = np.bincount(flat_e, minlength=ne)
    ptr = np.concatenate([[0], np.cumsum(counts)])

    return Lattice(
        d=d, half_width=half_width, mode=mode, side=side,
        vertex_coords=coords, edge_tail=tails, edge_head=heads, edge_dir=dirs,
        edge_lookup=lookup, plaquettes=plaqs, plaquette_dirs=pdirs,
        plaquette_corner=corners, boundary=boundary,
        edge_plaq_ptr=ptr, edge_plaq_idx=flat_p[order], edge_plaq_slot=flat_s[order],
    )


@dataclass
class EdgeField:
    """Real (``(E,)``) or 3-component (``(E, 3)``) values on the edges of a lattice."""

    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.lattice.n_edges or self.values.ndim not in (1, 2):
            raise InvalidParameterError(
                f"field of shape {self.values.shape} does not match {self.lattice.n_edges} edges")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameterError("edge field has non-finite entries")

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]


def plaquette_edges(lat: Lattice, p: int) -> list[tuple[int, int]]:
    """The four ``(edge id, sign)`` pairs of plaquette ``p`` in canonical order."""
    lat._check_plaquette(p)
    return [(int(e), int(s)) for e, s in zip(lat.plaquettes[p], PLAQUETTE_SIGNS)]


def plaquette_sums(lat: Lattice, values: np.ndarray) -> np.ndarray:
    """Signed edge sums for every plaquette; works for 1- or 3-component values."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != lat.n_edges:
        raise InvalidParameterError("field does not live on this lattice")
    e = lat.plaquettes
    return values[e[:, 0]] + values[e[:, 1]] - values[e[:, 2]] - values[e[:, 3]]


def plaquette_sum(field: EdgeField, p: int):
    lat = field.lattice
    lat._check_plaquette(p)
    e = lat.plaquettes[p]
    v = field.values
    out = v[e[0]] + v[e[1]] - v[e[2]] - v[e[3]]
    return float(out) if np.ndim(out) == 0 else out


def incidence_matrix(lat: Lattice):
    """Sparse ``P x E`` matrix whose row ``p`` holds the plaquette signs."""
    from scipy import sparse

    rows = np.repeat(np.arange(lat.n_plaquettes), 4)
    cols = lat.plaquettes.ravel()
    data = np.tile(PLAQUETTE_SIGNS, lat.n_plaquettes)
    return sparse.csr_matrix((data, (rows, cols)), shape=(lat.n_plaquettes, lat.n_edges))


@lru_cache(maxsize=32)
def edge_adjacency(lat: Lattice):
    """Boolean sparse adjacency of the shared-plaquette graph on edges."""
    from scipy import sparse

    b = incidence_matrix(lat)
    a = (abs(b).T @ abs(b)).tocsr()
    a.setdiag(0)
    a.eliminate_zeros()
    a.data[:] = 1.0
    return a


@lru_cache(maxsize=32)
def _neighbor_lists(lat: Lattice) -> list[np.ndarray]:
    a = edge_adjacency(lat)
    return [a.indices[a.indptr[i]:a.indptr[i + 1]] for i in range(lat.n_edges)]


def edge_graph_distance(lat: Lattice, e: int, e2: int) -> int:
    """Breadth-first distance between two edges in the shared-plaquette graph."""
    lat._check_edge(e)
    lat._check_edge(e2)
    if e == e2:
        return 0
    nbrs = _neighbor_lists(lat)
    seen = np.full(lat.n_edges, -1)
    seen[e] = 0
    queue = deque([e])
    while queue:
        cur = queue.popleft()
        for nxt in nbrs[cur]:
            if seen[nxt] < 0:
                seen[nxt] = seen[cur] + 1
                if nxt == e2:
                    return int(seen[nxt])
                queue.append(nxt)
    raise InvalidParameterError("edges are not connected")


def edge_distance_matrix(lat: Lattice) -> np.ndarray:
    """All-pairs shared-plaquette graph distances (integer matrix)."""
    from scipy.sparse.csgraph import shortest_path

    dist = shortest_path(edge_adjacency(lat), unweighted=True, directed=False)
    if not np.all(np.isfinite(dist)):
        raise InvalidParameterError("edge graph is disconnected")
    return dist.astype(np.int64)


def neighbor_classification(lat: Lattice, e: int, e2: int) -> str:
    """``same``, ``positive``, ``negative`` or ``none`` for a pair of edges.

    Positive neighbors are the first two or the last two edges of a shared
    plaquette.  When two edges share several plaquettes (only on the smallest
    tori) the lowest plaquette id decides.
    """
    lat._check_edge(e)
    lat._check_edge(e2)
    if e == e2:
        return "same"
    slots = dict(lat.plaquettes_of(e2))
    for p, s in lat.plaquettes_of(e):
        if p in slots:
            return "positive" if PLAQUETTE_SIGNS[s] * PLAQUETTE_SIGNS[slots[p]] > 0 else "negative"
    return "none"


def voronoi_weights(f, eps: float, lat: Lattice) -> np.ndarray:
    """Integrals of ``f_i`` over the Voronoi cell ``eps*D + eps*a`` of each edge tail.

    ``f`` is anything with ``.d`` and ``.value(points) -> (N, d)``.  The cell
    integral uses a tensor 3-point Gauss-Legendre rule, exact for
    polynomials of degree 5 in each coordinate.
    """
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    if f.d != lat.d:
        raise InvalidParameterError(f"form has {f.d} components, lattice has d={lat.d}")
    d = lat.d
    nodes = np.array(list(product(_GL3_NODES, repeat=d)))
    weights = np.prod(np.array(list(product(_GL3_WEIGHTS, repeat=d))), axis=1)
    centers = eps * lat.edge_positions()
    pts = centers[:, None, :] + eps * nodes[None, :, :]
    vals = f.value(pts.reshape(-1, d)).reshape(lat.n_edges, len(weights), d)
    comp = vals[np.arange(lat.n_edges), :, lat.edge_dir]
    return eps**d * comp @ weights
