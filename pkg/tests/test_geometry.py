"""Hull, predicate and polyline tests with brute-force oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cosketch.errors import DegenerateInput
from cosketch.geometry import (
    Containment,
    Point,
    Polygon,
    Polyline,
    concave_hull,
    convex_hull,
    point_in_polygon,
    polygon_area,
    simplify_polyline,
)


# --- test-side oracles, independent of the library internals ---------------

def oracle_shoelace(verts):
    s = 0.0
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return abs(s) / 2.0


def oracle_segments_cross(p1, p2, p3, p4):
    """Proper (interior) intersection of two segments."""
    d1 = (p2[0] - p1[0], p2[1] - p1[1])
    d2 = (p4[0] - p3[0], p4[1] - p3[1])
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if den == 0:
        return False
    d3 = (p1[0] - p3[0], p1[1] - p3[1])
    t1 = (d2[0] * d3[1] - d2[1] * d3[0]) / den
    t2 = (d1[0] * d3[1] - d1[1] * d3[0]) / den
    return 0 < t1 < 1 and 0 < t2 < 1


def oracle_is_simple(poly: Polygon) -> bool:
    v = [(p.x, p.y) for p in poly.vertices]
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if oracle_segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


def oracle_point_to_chain_dist(p, chain):
    """Min distance from p to a polyline given as a list of points."""
    best = math.inf
    for a, b in zip(chain[:-1], chain[1:]):
        ax, ay = a
        bx, by = b
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        if L2 == 0:
            t = 0.0
        else:
            t = max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2))
        best = min(best, math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy)))
    return best


# --- convex hull ------------------------------------------------------------

def test_convex_hull_triangle():
    h = convex_hull([(0, 0), (4, 0), (0, 4)])
    assert sorted((p.x, p.y) for p in h.vertices) == [(0, 0), (0, 4), (4, 0)]


def test_convex_hull_excludes_interior_point():
    h = convex_hull([(0, 0), (4, 0), (4, 4), (0, 4), (2, 2)])
    got = sorted((p.x, p.y) for p in h.vertices)
    assert got == [(0, 0), (0, 4), (4, 0), (4, 4)]


def test_convex_hull_200_random_containment():
    rng = np.random.default_rng(7)
    pts = [tuple(p) for p in rng.uniform(0, 100, (200, 2))]
    h = convex_hull(pts)
    for p in pts:
        assert point_in_polygon(p, h) != Containment.OUTSIDE


@pytest.mark.parametrize("pts", [
    [(0, 0), (1, 1)],
    [(0, 0), (1, 1), (2, 2), (3, 3)],
    [(0, 0), (0, 0), (0, 0)],
])
def test_convex_hull_degenerate(pts):
    with pytest.raises(DegenerateInput):
        convex_hull(pts)


# --- concave hull -----------------------------------------------------------

C_SHAPE = [(0, 0), (4, 0), (4, 1), (1, 1), (1, 3), (4, 3), (4, 4), (0, 4)]


def test_concave_hull_of_triangle_is_triangle():
    h = concave_hull([(0, 0), (4, 0), (0, 4)], k=3)
    assert sorted((p.x, p.y) for p in h.vertices) == [(0, 0), (0, 4), (4, 0)]


def test_concave_hull_c_shape_carves_notch():
    h = concave_hull(C_SHAPE, k=3)
    cv = convex_hull(C_SHAPE)
    assert oracle_shoelace([(p.x, p.y) for p in h.vertices]) < \
        oracle_shoelace([(p.x, p.y) for p in cv.vertices])
    for p in C_SHAPE:
        assert point_in_polygon(p, h) != Containment.OUTSIDE
    assert oracle_is_simple(h)


def test_concave_hull_500_random_properties():
    rng = np.random.default_rng(11)
    pts = [tuple(p) for p in rng.uniform(0, 100, (500, 2))]
    h = concave_hull(pts, k=3)
    cv = convex_hull(pts)
    for p in pts:
        assert point_in_polygon(p, h) != Containment.OUTSIDE
    assert oracle_is_simple(h)
    assert polygon_area(h) <= polygon_area(cv) + 1e-9


def test_concave_hull_vertices_subset_of_inputs():
    rng = np.random.default_rng(3)
    pts = [tuple(p) for p in rng.uniform(0, 50, (60, 2))]
    h = concave_hull(pts, k=3)
    pool = set(pts)
    for p in h.vertices:
        assert (p.x, p.y) in pool


def test_concave_hull_deterministic():
    rng = np.random.default_rng(5)
    pts = [tuple(p) for p in rng.uniform(0, 100, (150, 2))]
    assert concave_hull(pts, 3) == concave_hull(pts, 3)


def test_concave_hull_degenerate_collinear():
    with pytest.raises(DegenerateInput):
        concave_hull([(0, 0), (1, 0), (2, 0), (3, 0)], 3)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)),
                min_size=4, max_size=60))
def test_concave_hull_containment_property(pts):
    arr = np.array(pts)
    base = arr - arr[0]
    cross = base[:, 0, None] * base[None, :, 1] - base[:, 1, None] * base[None, :, 0]
    if np.abs(cross).max() < 1e-6:  # collinear inputs are a contract error
        return
    try:
        h = concave_hull(pts, 3)
    except DegenerateInput:
        return
    for p in pts:
        assert point_in_polygon(p, h) != Containment.OUTSIDE
    assert polygon_area(h) <= polygon_area(convex_hull(pts)) + 1e-9


# --- point_in_polygon -------------------------------------------------------

def test_point_in_polygon_cases():
    sq = Polygon([(0, 0), (4, 0), (4, 4), (0, 4)])
    assert point_in_polygon((2, 2), sq) == Containment.INSIDE
    assert point_in_polygon((0, 2), sq) == Containment.BOUNDARY
    assert point_in_polygon((5, 5), sq) == Containment.OUTSIDE
    assert point_in_polygon((4, 4), sq) == Containment.BOUNDARY


# --- polygon_area -----------------------------------------------------------

def test_polygon_area_values():
    assert polygon_area(Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])) == 1.0
    assert polygon_area(Polygon([(0, 0), (4, 0), (4, 4), (0, 4)])) == 16.0
    assert polygon_area(Polygon([(0, 0), (3, 0), (0, 4)])) == 6.0


def test_polygon_orientation_normalized():
    cw = Polygon([(0, 0), (0, 4), (4, 4), (4, 0)])   # clockwise input
    assert polygon_area(cw) == 16.0


def test_polygon_rejects_self_intersection():
    with pytest.raises(DegenerateInput):
        Polygon([(0, 0), (4, 4), (4, 0), (0, 4)])  # bowtie


# --- simplify_polyline ------------------------------------------------------

def test_simplify_tolerance_zero_is_identity():
    line = Polyline([(0, 0), (1, 0), (2, 0)], contact_id=1)
    assert simplify_polyline(line, 0) == line


def test_simplify_collinear():
    line = Polyline([(0, 0), (1, 0), (2, 0)])
    out = simplify_polyline(line, 0.1)
    assert [(p.x, p.y) for p in out.points] == [(0, 0), (2, 0)]


def test_simplify_noisy_sine_deviation_bound():
    rng = np.random.default_rng(9)
    xs = np.linspace(0, 50, 1000)
    ys = np.sin(xs) * 5 + rng.normal(0, 0.1, 1000)
    line = Polyline(list(zip(xs, ys)))
    tol = 0.5
    out = simplify_polyline(line, tol)
    assert len(out) < len(line)
    assert out.points[0] == line.points[0] and out.points[-1] == line.points[-1]
    kept = [(p.x, p.y) for p in out.points]
    kept_set = set(kept)
    for p in line.points:
        if (p.x, p.y) not in kept_set:
            assert oracle_point_to_chain_dist((p.x, p.y), kept) <= tol + 1e-9


def test_polyline_collapses_consecutive_duplicates():
    line = Polyline([(0, 0), (0, 0), (1, 1), (1, 1), (2, 0)])
    assert len(line) == 3


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point(float("nan"), 0.0)
