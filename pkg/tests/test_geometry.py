import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from proxyvid import geometry
from proxyvid.exceptions import DegeneratePointSetError, ZeroAreaTriangleError
from proxyvid.geometry import (barycentric, delaunay, extend_many, interpolation_weights, locate, locate_many,
                               nearest_triangle_extension)


def circumcircle_violations(tri, rel_tol=1e-7):
    """Brute force: every (triangle, vertex) pair, exact-ish incircle test."""
    pts = tri.vertices
    scale = float(np.abs(pts).max()) or 1.0
    bad = 0
    for t, (a, b, c) in enumerate(tri.triangles):
        ax, ay = pts[a]
        bx, by = pts[b]
        cx, cy = pts[c]
        d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        ux = ((ax ** 2 + ay ** 2) * (by - cy) + (bx ** 2 + by ** 2) * (cy - ay) + (cx ** 2 + cy ** 2) * (ay - by)) / d
        uy = ((ax ** 2 + ay ** 2) * (cx - bx) + (bx ** 2 + by ** 2) * (ax - cx) + (cx ** 2 + cy ** 2) * (bx - ax)) / d
        r = np.hypot(ax - ux, ay - uy)
        for v in range(len(pts)):
            if v in (a, b, c):
                continue
            if np.hypot(pts[v, 0] - ux, pts[v, 1] - uy) < r - rel_tol * max(r, scale):
                bad += 1
    return bad


def hull_area(pts):
    from scipy.spatial import ConvexHull
    return ConvexHull(pts).volume


def exhaustive_locate(p, tri):
    for t in range(len(tri)):
        bc = barycentric(p, t, tri)
        if min(bc.lambda1, bc.lambda2, bc.lambda3) >= -1e-9:
            return t
    return None


def test_three_points_one_triangle():
    tri = delaunay([(0, 0), (1, 0), (0, 1)])
    assert len(tri) == 1
    assert sorted(tri.triangles[0]) == [0, 1, 2]


def test_unit_square_tie_rule():
    tri = delaunay([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert len(tri) == 2
    # cocircular: the kept diagonal touches the lowest index (0-2)
    assert sorted(map(sorted, tri.triangles.tolist())) == [[0, 1, 2], [0, 2, 3]]
    assert circumcircle_violations(tri) == 0


def test_random_50_points_delaunay():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 100, size=(50, 2))
    tri = delaunay(pts)
    assert circumcircle_violations(tri) == 0
    assert np.isclose(np.abs(tri.signed_areas()).sum(), hull_area(pts))


@pytest.mark.parametrize("seed", range(10))
def test_triangulation_invariants(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 100, size=(rng.integers(3, 120), 2))
    tri = delaunay(pts)
    for t in tri.triangles:
        assert len(set(t)) == 3
        assert t.min() >= 0 and t.max() < len(pts)
    assert np.all(np.abs(tri.signed_areas()) > geometry.DEGENERACY_TOL)
    assert np.isclose(np.abs(tri.signed_areas()).sum(), hull_area(pts))
    assert circumcircle_violations(tri) == 0
    # each interior edge is shared by exactly two triangles, no edge by more
    edges = {}
    for t in tri.triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edges[frozenset((a, b))] = edges.get(frozenset((a, b)), 0) + 1
    assert max(edges.values()) <= 2


def test_grid_points():
    xs, ys = np.meshgrid(np.arange(20.0), np.arange(20.0))
    tri = delaunay(np.stack([xs.ravel(), ys.ravel()], axis=1))
    assert len(tri) == 2 * 19 * 19
    assert circumcircle_violations(tri) == 0


def test_deterministic():
    pts = np.random.default_rng(3).uniform(0, 50, size=(80, 2))
    a, b = delaunay(pts), delaunay(pts.copy())
    assert np.array_equal(a.triangles, b.triangles)


def test_degenerate_inputs():
    with pytest.raises(DegeneratePointSetError, match="degenerate point set"):
        delaunay([(0, 0), (1, 1)])
    with pytest.raises(DegeneratePointSetError):
        delaunay([(0, 0), (1, 1), (2, 2), (3, 3)])
    with pytest.raises(DegeneratePointSetError):
        delaunay([(0, 0), (1, 0), (0, 1), (0, 1 + 1e-12)])
    with pytest.raises(ValueError):
        delaunay([(0, 0), (1, np.nan), (0, 1)])


def test_barycentric_examples():
    tri = delaunay([(0, 0), (4, 0), (0, 4)])
    t = 0
    v = tri.vertices[tri.triangles[t]]
    bc = barycentric(v[0], t, tri)
    assert np.allclose(bc.weights, [1, 0, 0])
    bc = barycentric(v.mean(axis=0), t, tri)
    assert np.allclose(bc.weights, [1 / 3] * 3, atol=1e-12)
    # by hand: p = l1*A + l2*B + l3*C with A=(0,0),B=(4,0),C=(0,4): l2=1/4, l3=1/4
    order = [tuple(p) for p in v]
    bc = barycentric((1, 1), t, tri)
    w = dict(zip(order, bc.weights))
    assert np.isclose(w[(0.0, 0.0)], 0.5) and np.isclose(w[(4.0, 0.0)], 0.25) and np.isclose(w[(0.0, 4.0)], 0.25)
    assert np.allclose(bc.weights @ v, (1, 1), atol=1e-6)


def test_zero_area_triangle():
    tri = geometry.Triangulation(np.array([(0.0, 0.0), (4.0, 0.0), (8.0, 0.0)]), np.array([[0, 1, 2]]))
    with pytest.raises(ZeroAreaTriangleError, match="zero-area triangle"):
        barycentric((1, 0), 0, tri)


def test_locate_inside_outside():
    tri = delaunay([(0, 0), (10, 0), (0, 10), (10, 10), (5, 4)])
    bc = locate((5, 1), tri)
    assert bc is not None
    assert all(0 < w < 1 for w in bc.weights)
    assert locate((20, 20), tri) is None
    assert locate((-0.1, 5), tri) is None


def test_locate_matches_exhaustive_scan():
    rng = np.random.default_rng(7)
    tri = delaunay(rng.uniform(0, 100, size=(60, 2)))
    q = rng.uniform(-10, 110, size=(1000, 2))
    t_many, _ = locate_many(q, tri)
    for p, tm in zip(q, t_many):
        ref = exhaustive_locate(p, tri)
        bc = locate(p, tri)
        if ref is not None:
            w = barycentric(p, ref, tri).weights
            if w.min() < 1e-7:  # boundary point: lowest-index rule checked elsewhere
                continue
        assert (bc.triangle_index if bc else None) == ref
        assert (tm if tm >= 0 else None) == ref


def test_boundary_goes_to_lowest_triangle():
    tri = delaunay([(0, 0), (1, 0), (1, 1), (0, 1)])
    bc = locate((0.5, 0.5), tri)  # on the shared diagonal
    assert bc.triangle_index == 0
    t, _ = locate_many([(0.5, 0.5)], tri)
    assert t[0] == 0


def test_extension_inside_equals_locate():
    rng = np.random.default_rng(1)
    tri = delaunay(rng.uniform(0, 10, size=(15, 2)))
    for p in rng.uniform(2, 8, size=(30, 2)):
        a, b = locate(p, tri), nearest_triangle_extension(p, tri)
        if a is not None:
            assert a == b


def test_extension_edge_projection():
    tri = delaunay([(0, 0), (4, 0), (2, 3)])
    bc = nearest_triangle_extension((2, -100), tri)  # far along the outward normal of edge (0,0)-(4,0)
    v = tri.vertices[tri.triangles[bc.triangle_index]]
    w = dict(zip(map(tuple, v), bc.weights))
    assert np.isclose(w[(0.0, 0.0)], 0.5) and np.isclose(w[(4.0, 0.0)], 0.5) and np.isclose(w[(2.0, 3.0)], 0.0)
    bc = nearest_triangle_extension((1, -1), tri)
    assert min(bc.weights) == 0.0 and np.isclose(sum(bc.weights), 1.0)


def test_extend_many_matches_scalar():
    rng = np.random.default_rng(2)
    tri = delaunay(rng.uniform(0, 20, size=(25, 2)))
    q = rng.uniform(-10, 30, size=(200, 2))
    t, w = extend_many(q, tri)
    for p, ti, wi in zip(q, t, w):
        bc = nearest_triangle_extension(p, tri)
        p_ref = bc.weights @ tri.vertices[tri.triangles[bc.triangle_index]]
        p_got = wi @ tri.vertices[tri.triangles[ti]]
        assert np.allclose(p_ref, p_got, atol=1e-9)


def test_grid_locator_cells():
    rng = np.random.default_rng(4)
    tri = delaunay(rng.uniform(0, 100, size=(100, 2)))
    # every triangle is reachable from the cell of its centroid
    for t, c in enumerate(tri.corners.mean(axis=1)):
        assert t in tri.candidates(*c)


points_strategy = st.lists(
    st.tuples(st.floats(0, 100, allow_nan=False), st.floats(0, 100, allow_nan=False)),
    min_size=3, max_size=40, unique=True)


@settings(max_examples=40, deadline=None)
@given(points_strategy, st.floats(-3, 3), st.floats(-3, 3), st.floats(-50, 50))
def test_partition_of_unity_and_affine_reproduction(points, a, b, c):
    pts = np.array(points)
    try:
        tri = delaunay(pts)
    except DegeneratePointSetError:
        return
    g = a * pts[:, 0] + b * pts[:, 1] + c
    rng = np.random.default_rng(0)
    for t in range(len(tri)):
        if abs(tri.signed_areas()[t]) < 1e-3:
            continue  # near-slivers: conditioning, not correctness
        w = rng.dirichlet([1, 1, 1])
        p = w @ tri.corners[t]
        bc = barycentric(p, t, tri)
        assert abs(sum(bc.weights) - 1) < 1e-6
        assert abs(bc.weights @ g[tri.triangles[t]] - (a * p[0] + b * p[1] + c)) < 1e-5


def test_interpolation_weights_rows():
    tri = delaunay([(0, 0), (4, 0), (0, 4), (4, 4)])
    ids, w = interpolation_weights([(1, 1), (10, 10)], tri, extend=True)
    assert ids.shape == (2, 3) and np.all(ids >= 0)
    assert np.allclose(w.sum(axis=1), 1)
    ids, w = interpolation_weights([(10, 10)], tri, extend=False)
    assert np.all(ids == -1)


def test_violation_oracles_detect_bad_mesh():
    from oracles import circumcircle_violations_fast
    # a kite split along its long diagonal: each short-axis vertex is inside the other circumcircle
    verts = np.array([(0.0, 0.0), (4.0, -1.0), (8.0, 0.0), (4.0, 1.0)])
    bad = geometry.Triangulation(verts, np.array([[0, 1, 2], [0, 2, 3]]))
    assert circumcircle_violations(bad) == circumcircle_violations_fast(bad.vertices, bad.triangles) == 2
    good = delaunay(verts)
    assert circumcircle_violations_fast(good.vertices, good.triangles) == 0
