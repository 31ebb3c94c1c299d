from collections import deque
from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from higgsproca.errors import InvalidParameterError
from higgsproca.lattice import (EdgeField, build_lattice, edge_adjacency, edge_graph_distance,
                                neighbor_classification, plaquette_edges, plaquette_sum,
                                plaquette_sums, voronoi_weights)
from higgsproca.proca_continuum import TestForm, tensor_rule


@pytest.mark.parametrize("d,hw,mode,counts", [
    (2, 1, "torus", (4, 8, 4)),
    (2, 1, "free", (9, 12, 4)),
    (3, 1, "torus", (8, 24, 24)),
])
def test_counts_examples(d, hw, mode, counts):
    lat = build_lattice(d, hw, mode)
    assert (lat.n_vertices, lat.n_edges, lat.n_plaquettes) == counts


@given(st.integers(2, 3), st.integers(1, 3))
def test_torus_count_formulas(d, L):
    lat = build_lattice(d, L, "torus")
    n = (2 * L) ** d
    assert lat.n_vertices == n
    assert lat.n_edges == d * n
    assert lat.n_plaquettes == comb(d, 2) * n


@pytest.mark.parametrize("d,hw,mode", [(1, 1, "torus"), (2, 0, "free"), (2, 1, "box")])
def test_invalid_lattice(d, hw, mode):
    with pytest.raises(InvalidParameterError):
        build_lattice(d, hw, mode)


def test_boundary_tags_free_box():
    lat = build_lattice(2, 2, "free")
    b = set(lat.boundary_edges().tolist())
    i = set(lat.interior_edges().tolist())
    assert b.isdisjoint(i) and len(b) + len(i) == lat.n_edges
    # an edge is on the boundary iff both endpoints lie on the same face of the box
    side = lat.side
    for e in range(lat.n_edges):
        t = lat.vertex_coords[lat.edge_tail[e]]
        h = lat.vertex_coords[lat.edge_head[e]]
        on_face = any(t[k] == h[k] and t[k] in (0, side - 1) for k in range(2))
        assert (e in b) == on_face


def test_canonical_plaquette_d2():
    lat = build_lattice(2, 2, "free")
    p = int(np.nonzero([lat.vertex_coords[lat.plaquette_corner[q]].tolist() == [0, 0]
                        for q in range(lat.n_plaquettes)])[0][0])
    got = plaquette_edges(lat, p)
    want = [(lat.edge_index((0, 0), 0), 1), (lat.edge_index((1, 0), 1), 1),
            (lat.edge_index((0, 1), 0), -1), (lat.edge_index((0, 0), 1), -1)]
    assert got == want


def test_canonical_plaquette_d3_plane_13():
    lat = build_lattice(3, 1, "free")
    for p in range(lat.n_plaquettes):
        c = lat.vertex_coords[lat.plaquette_corner[p]]
        if c.tolist() == [0, 0, 0] and tuple(lat.plaquette_dirs[p]) == (0, 2):
            e1, e4 = plaquette_edges(lat, p)[0][0], plaquette_edges(lat, p)[3][0]
            assert lat.edge_dir[e1] == 0 and lat.edge_dir[e4] == 2
            return
    pytest.fail("plaquette not found")


def test_edges_positively_oriented():
    lat = build_lattice(3, 1, "free")
    for e in range(lat.n_edges):
        t = lat.vertex_coords[lat.edge_tail[e]]
        h = lat.vertex_coords[lat.edge_head[e]]
        assert tuple(t) < tuple(h)


def test_plaquette_sum_examples():
    lat = build_lattice(2, 1, "free")
    edges = [e for e, _ in plaquette_edges(lat, 0)]
    v = np.zeros(lat.n_edges)
    v[edges] = [1, 2, 3, 4]
    assert plaquette_sum(EdgeField(lat, v), 0) == -4
    assert plaquette_sum(EdgeField(lat, np.zeros(lat.n_edges)), 0) == 0


@given(st.integers(0, 2**32 - 1))
def test_gradient_fields_are_flat(seed):
    lat = build_lattice(3, 1, "torus")
    h = np.random.default_rng(seed).normal(size=lat.n_vertices)
    x = h[lat.edge_head] - h[lat.edge_tail]
    assert np.allclose(plaquette_sums(lat, x), 0, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_plaquette_sum_linear(seed):
    lat = build_lattice(2, 2, "free")
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(2, lat.n_edges))
    s, t = r.normal(size=2)
    assert np.allclose(plaquette_sums(lat, s * a + t * b),
                       s * plaquette_sums(lat, a) + t * plaquette_sums(lat, b))


def test_plaquette_sum_antisymmetric_under_direction_swap():
    # traversing the square with the two directions swapped reverses the orientation
    lat = build_lattice(2, 1, "free")
    x = np.random.default_rng(1).normal(size=lat.n_edges)
    e1, e2, e3, e4 = [e for e, _ in plaquette_edges(lat, 0)]
    swapped = x[e4] + x[e3] - x[e2] - x[e1]
    assert np.isclose(swapped, -plaquette_sums(lat, x)[0])


def _bfs(lat, e, e2):
    adj = edge_adjacency(lat)
    seen = {e: 0}
    q = deque([e])
    while q:
        a = q.popleft()
        for b in adj[a].indices:
            if b not in seen:
                seen[b] = seen[a] + 1
                q.append(b)
    return seen[e2]


def test_distance_examples():
    lat = build_lattice(2, 2, "free")
    e = lat.edge_index((0, 0), 0)
    assert edge_graph_distance(lat, e, e) == 0
    edges = [x for x, _ in plaquette_edges(lat, 0)]
    assert edge_graph_distance(lat, edges[0], edges[2]) == 1
    e2 = lat.edge_index((0, 2), 0)
    assert edge_graph_distance(lat, e, e2) == 2 == _bfs(lat, e, e2)


@given(st.integers(0, 2**32 - 1))
def test_distance_is_metric(seed):
    lat = build_lattice(2, 2, "free")
    a, b, c = np.random.default_rng(seed).integers(0, lat.n_edges, 3)
    dab = edge_graph_distance(lat, a, b)
    assert dab == edge_graph_distance(lat, b, a) == _bfs(lat, a, b)
    assert dab <= edge_graph_distance(lat, a, c) + edge_graph_distance(lat, c, b)


def test_neighbor_classes_match_expansion():
    lat = build_lattice(2, 2, "torus")
    for p in range(lat.n_plaquettes):
        es = plaquette_edges(lat, p)
        pos = neg = 0
        for (a, sa), (b, sb) in combinations(es, 2):
            cls = neighbor_classification(lat, a, b)
            # the cross term of x(p)^2 is 2 sa sb x(a) x(b)
            assert cls == ("positive" if sa * sb > 0 else "negative")
            pos += cls == "positive"
            neg += cls == "negative"
        assert (pos, neg) == (2, 4)
    e = lat.edge_index((0, 0), 0)
    assert neighbor_classification(lat, e, e) == "same"
    assert neighbor_classification(lat, e, lat.edge_index((2, 2), 0)) == "none"


@pytest.mark.parametrize("d", [2, 3])
def test_interior_edges_in_2d_minus_2_plaquettes(d):
    lat = build_lattice(d, 2, "torus")
    counts = np.diff(lat.edge_plaq_ptr)
    assert np.all(counts == 2 * (d - 1))


class _Affine:
    d = 2

    def value(self, x):
        return np.stack([1 + 2 * x[:, 0] - x[:, 1], np.full(len(x), 3.0)], axis=1)


def test_voronoi_constant_and_affine():
    lat = build_lattice(2, 2, "free")
    eps = 0.3
    u = voronoi_weights(_Affine(), eps, lat)
    c = eps * lat.edge_positions()
    want = np.where(lat.edge_dir == 0, 1 + 2 * c[:, 0] - c[:, 1], 3.0) * eps**2
    assert np.allclose(u, want, rtol=1e-13)


def test_voronoi_gaussian_vs_refined_rule():
    lat = build_lattice(2, 3, "free")
    eps = 0.25
    f = TestForm(2, "gaussian", scale=0.5, coeffs=[1.0, 0.4])
    u = voronoi_weights(f, eps, lat)
    c = eps * lat.edge_positions()
    ref = np.empty(lat.n_edges)
    for e in range(lat.n_edges):
        pts, w = tensor_rule(c[e], eps / 2, 2, 10, 8)
        ref[e] = w @ f.value(pts)[:, lat.edge_dir[e]]
    big = np.abs(ref) > 1e-3 * np.abs(ref).max()
    assert np.max(np.abs(u[big] / ref[big] - 1)) <= 1e-6
