"""Planar geometry kernels: hulls, polygon predicates, polyline utilities.

All functions are pure and operate on immutable value types, so they are
safe to call concurrently. Coordinates are canvas pixels (floats).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

from .errors import DegenerateInput

DEDUP_EPS = 1e-6       # duplicate-point collapse before hull computation
BOUNDARY_EPS = 1e-9    # point-on-edge tolerance for containment queries


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinate ({self.x}, {self.y})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Polyline:
    """Ordered stroke samples with a persistent touch contact id.

    Consecutive duplicate points are collapsed at construction.
    """

    points: tuple[Point, ...]
    contact_id: int = 0

    def __init__(self, points: Iterable[Point | tuple[float, float]], contact_id: int = 0):
        collapsed: list[Point] = []
        for p in points:
            pt = p if isinstance(p, Point) else Point(float(p[0]), float(p[1]))
            if not collapsed or collapsed[-1] != pt:
                collapsed.append(pt)
        if not collapsed:
            raise ValueError("polyline needs at least one point")
        object.__setattr__(self, "points", tuple(collapsed))
        object.__setattr__(self, "contact_id", int(contact_id))

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.points], dtype=np.float64)

    def length(self) -> float:
        a = self.as_array()
        if len(a) < 2:
            return 0.0
        return float(np.sum(np.hypot(*(a[1:] - a[:-1]).T)))

    def bbox(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of the sample points."""
        a = self.as_array()
        return (float(a[:, 0].min()), float(a[:, 1].min()),
                float(a[:, 0].max()), float(a[:, 1].max()))


class Containment(Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class Polygon:
    """Simple polygon, implicitly closed, counter-clockwise orientation.

    Construction reverses clockwise input, rejects degenerate (zero-area)
    and self-intersecting vertex sequences.
    """

    vertices: tuple[Point, ...] = field(default=())

    def __init__(self, vertices: Sequence[Point | tuple[float, float]]):
        verts = [v if isinstance(v, Point) else Point(float(v[0]), float(v[1]))
                 for v in vertices]
        if len(verts) < 3:
            raise DegenerateInput(f"polygon needs >= 3 vertices, got {len(verts)}")
        signed = _signed_area(verts)
        if abs(signed) <= 0.0:
            raise DegenerateInput("zero-area polygon")
        if signed < 0:
            verts.reverse()
        if _has_self_intersection(verts):
            raise DegenerateInput("self-intersecting polygon")
        object.__setattr__(self, "vertices", tuple(verts))

    def __len__(self) -> int:
        return len(self.vertices)

    def as_array(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.vertices], dtype=np.float64)

    def edges(self) -> list[tuple[Point, Point]]:
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]


def _signed_area(verts: Sequence[Point]) -> float:
    a = 0.0
    n = len(verts)
    for i in range(n):
        p, q = verts[i], verts[(i + 1) % n]
        a += p.x * q.y - q.x * p.y
    return a / 2.0


def _has_self_intersection(verts: Sequence[Point]) -> bool:
    """Vectorized O(n^2) proper-intersection scan over non-adjacent edges."""
    n = len(verts)
    if n < 4:
        return False
    pts = np.array([(p.x, p.y) for p in verts])
    a = pts
    b = np.roll(pts, -1, axis=0)
    idx_i, idx_j = np.triu_indices(n, k=2)
    # edge 0 and edge n-1 are adjacent through the closing vertex
    keep = ~((idx_i == 0) & (idx_j == n - 1))
    idx_i, idx_j = idx_i[keep], idx_j[keep]
    return bool(np.any(_segments_properly_intersect(
        a[idx_i], b[idx_i], a[idx_j], b[idx_j])))


def _segments_properly_intersect(p1, p2, p3, p4) -> np.ndarray:
    """True where open segments (p1,p2) and (p3,p4) cross (endpoints excluded)."""
    d1 = p2 - p1
    d2 = p4 - p3
    denom = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    d3 = p1 - p3
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (d2[..., 0] * d3[..., 1] - d2[..., 1] * d3[..., 0]) / denom
        t2 = (d1[..., 0] * d3[..., 1] - d1[..., 1] * d3[..., 0]) / denom
    ok = denom != 0
    return ok & (t1 > 0) & (t1 < 1) & (t2 > 0) & (t2 < 1)


def _dedupe(points: Iterable[Point | tuple[float, float]]) -> np.ndarray:
    """Drop duplicate points (DEDUP_EPS grid), preserving first occurrences."""
    raw = [(float(p.x), float(p.y)) if isinstance(p, Point) else (float(p[0]), float(p[1]))
           for p in points]
    if not raw:
        return np.empty((0, 2))
    arr = np.array(raw, dtype=np.float64)
    keys = np.round(arr / DEDUP_EPS).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return arr[np.sort(first)]


def _all_collinear(pts: np.ndarray) -> bool:
    if len(pts) < 3:
        return True
    base = pts[0]
    d = pts[1:] - base
    cross = d[:, 0, None] * d[None, :, 1] - d[:, 1, None] * d[None, :, 0]
    span = max(1.0, float(np.abs(d).max()))
    return bool(np.all(np.abs(cross) <= 1e-9 * span * span))


def convex_hull(points: Iterable[Point | tuple[float, float]]) -> Polygon:
    """Andrew's monotone chain; strict turns, so collinear boundary points
    are not emitted as vertices."""
    pts = _dedupe(points)
    if len(pts) < 3 or _all_collinear(pts):
        raise DegenerateInput("convex hull needs >= 3 non-collinear points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    sorted_pts = pts[order]

    def build(seq: np.ndarray) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = build(sorted_pts)
    upper = build(sorted_pts[::-1])
    ring = lower[:-1] + upper[:-1]
    return Polygon([Point(float(p[0]), float(p[1])) for p in ring])


def _points_in_polygon_bulk(pts: np.ndarray, verts: np.ndarray,
                            eps: float = BOUNDARY_EPS) -> np.ndarray:
    """Vectorized 'is not outside' test for many points against one polygon."""
    a = verts
    b = np.roll(verts, -1, axis=0)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    # point-to-edge distance for the boundary band
    d = b - a
    seg_len2 = np.maximum((d ** 2).sum(axis=1), 1e-300)
    t = ((px - a[:, 0]) * d[:, 0] + (py - a[:, 1]) * d[:, 1]) / seg_len2
    t = np.clip(t, 0.0, 1.0)
    cx = a[:, 0] + t * d[:, 0]
    cy = a[:, 1] + t * d[:, 1]
    dist2 = (px - cx) ** 2 + (py - cy) ** 2
    on_boundary = (dist2 <= eps * eps).any(axis=1)
    # half-open ray crossing
    cond = (a[:, 1] > py) != (b[:, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (py - a[:, 1]) * d[:, 0] / np.where(d[:, 1] == 0, 1, d[:, 1])
    crossings = (cond & (px < xint)).sum(axis=1)
    inside = (crossings % 2) == 1
    return on_boundary | inside


def point_in_polygon(p: Point | tuple[float, float], poly: Polygon) -> Containment:
    """Ray-crossing classification with an explicit boundary band of
    BOUNDARY_EPS canvas px."""
    pt = p if isinstance(p, Point) else Point(float(p[0]), float(p[1]))
    verts = poly.as_array()
    a = verts
    b = np.roll(verts, -1, axis=0)
    d = b - a
    seg_len2 = np.maximum((d ** 2).sum(axis=1), 1e-300)
    t = np.clip(((pt.x - a[:, 0]) * d[:, 0] + (pt.y - a[:, 1]) * d[:, 1]) / seg_len2, 0.0, 1.0)
    cx = a[:, 0] + t * d[:, 0]
    cy = a[:, 1] + t * d[:, 1]
    dist2 = (pt.x - cx) ** 2 + (pt.y - cy) ** 2
    if bool((dist2 <= BOUNDARY_EPS * BOUNDARY_EPS).any()):
        return Containment.BOUNDARY
    cond = (a[:, 1] > pt.y) != (b[:, 1] > pt.y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (pt.y - a[:, 1]) * d[:, 0] / np.where(d[:, 1] == 0, 1, d[:, 1])
    crossings = int((cond & (pt.x < xint)).sum())
    return Containment.INSIDE if crossings % 2 == 1 else Containment.OUTSIDE


def polygon_area(poly: Polygon) -> float:
    """Shoelace area; positive because polygons are CCW by construction."""
    return _signed_area(list(poly.vertices))


def concave_hull(points: Iterable[Point | tuple[float, float]], k: int = 3) -> Polygon:
    """k-nearest-neighbour inward gift wrap.

    Starts at the lowest-y point and repeatedly takes, among the k nearest
    unused candidates, the tightest clockwise turn whose edge does not
    properly intersect the partial hull. Retries with k+1 whenever the walk
    gets stuck, the polygon self-intersects, or some input point ends up
    outside; falls back to the convex hull when k exceeds the point count.
    Ties break deterministically by (turn angle, distance, input index).
    """
    pts = _dedupe(points)
    n = len(pts)
    if n < 3 or _all_collinear(pts):
        raise DegenerateInput("concave hull needs >= 3 non-collinear points")
    k = max(3, int(k))
    if n == 3:
        return Polygon([Point(*p) for p in pts])
    while True:
        kk = min(k, n - 1)
        ring = _concave_hull_attempt(pts, kk)
        # the walk never produces proper self-crossings (edge feasibility is
        # checked at every step), so only containment can reject an attempt
        if ring is not None and _ring_contains_all(pts, ring):
            try:
                poly = Polygon(_dig_concavities(ring, pts))
            except DegenerateInput:
                poly = None
            if poly is not None and bool(np.all(
                    _points_in_polygon_bulk(pts, poly.as_array()))):
                return poly
        if kk >= n - 1:
            return convex_hull([Point(*p) for p in pts])
        k += 1


def _concave_hull_attempt(pts: np.ndarray, k: int) -> np.ndarray | None:
    hull, m = _walk(np.ascontiguousarray(pts), int(k))
    if m < 3:
        return None
    return hull[:m].copy()


@njit(cache=True)
def _ring_contains_all(pts, ring):  # pragma: no cover - driven via concave_hull
    """Every point inside / within BOUNDARY_EPS of the ring boundary?"""
    n = pts.shape[0]
    m = ring.shape[0]
    eps2 = BOUNDARY_EPS * BOUNDARY_EPS
    for i in range(n):
        px = pts[i, 0]
        py = pts[i, 1]
        on_edge = False
        crossings = 0
        for e in range(m):
            ax = ring[e, 0]
            ay = ring[e, 1]
            bx = ring[(e + 1) % m, 0]
            by = ring[(e + 1) % m, 1]
            dx = bx - ax
            dy = by - ay
            L2 = dx * dx + dy * dy
            if L2 > 0.0:
                t = ((px - ax) * dx + (py - ay) * dy) / L2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            else:
                t = 0.0
            ex = px - (ax + t * dx)
            ey = py - (ay + t * dy)
            if ex * ex + ey * ey <= eps2:
                on_edge = True
                break
            if (ay > py) != (by > py):
                xint = ax + (py - ay) * dx / dy
                if px < xint:
                    crossings += 1
        if not on_edge and crossings % 2 == 0:
            return False
    return True


@njit(cache=True)
def _walk(pts: np.ndarray, k: int):  # pragma: no cover - driven via concave_hull
    """Single gift-wrap attempt; returns (ring buffer, vertex count or 0)."""
    n = pts.shape[0]
    si = 0
    for i in range(1, n):
        if pts[i, 1] < pts[si, 1] or (pts[i, 1] == pts[si, 1] and pts[i, 0] < pts[si, 0]):
            si = i
    used = np.zeros(n, np.bool_)
    used[si] = True
    hull = np.empty((n + 1, 2), np.float64)
    hull[0, 0] = pts[si, 0]
    hull[0, 1] = pts[si, 1]
    m = 1
    cx = pts[si, 0]
    cy = pts[si, 1]
    # reverse of the fictional incoming travel (+x), so the first hop sweeps
    # toward the rightmost screen turn from "entering along the x axis"
    prev_angle = math.pi
    two_pi = 2.0 * math.pi

    cand = np.empty(k, np.int64)
    cdist = np.empty(k, np.float64)
    cturn = np.empty(k, np.float64)
    taken = np.empty(k, np.bool_)

    for _step in range(2 * n + 4):
        # k nearest available points; distance ties keep the earliest index
        cnt = 0
        for i in range(n):
            if used[i] and not (m >= 3 and i == si):
                continue
            d = math.hypot(pts[i, 0] - cx, pts[i, 1] - cy)
            if cnt < k:
                j = cnt
                cnt += 1
            elif d < cdist[cnt - 1]:
                j = cnt - 1
            else:
                continue
            while j > 0 and cdist[j - 1] > d:
                cdist[j] = cdist[j - 1]
                cand[j] = cand[j - 1]
                j -= 1
            cdist[j] = d
            cand[j] = i
        if cnt == 0:
            return hull, 0

        for j in range(cnt):
            i = cand[j]
            ang = math.atan2(pts[i, 1] - cy, pts[i, 0] - cx)
            t = (ang - prev_angle) % two_pi
            if t <= 1e-12:
                t = two_pi  # never walk straight back
            cturn[j] = t
            taken[j] = False

        chosen = -1
        for _t in range(cnt):
            # next candidate by (turn, dist, index)
            bj = -1
            for j in range(cnt):
                if taken[j]:
                    continue
                if bj < 0 or cturn[j] < cturn[bj] or \
                   (cturn[j] == cturn[bj] and (cdist[j] < cdist[bj] or
                    (cdist[j] == cdist[bj] and cand[j] < cand[bj]))):
                    bj = j
            if bj < 0:
                break
            taken[bj] = True
            ci = cand[bj]
            if _edge_feasible(hull, m, cx, cy, pts[ci, 0], pts[ci, 1], ci == si):
                chosen = ci
                break
        if chosen < 0:
            return hull, 0
        if chosen == si:
            return hull, m
        hull[m, 0] = pts[chosen, 0]
        hull[m, 1] = pts[chosen, 1]
        m += 1
        used[chosen] = True
        px = cx
        py = cy
        cx = pts[chosen, 0]
        cy = pts[chosen, 1]
        prev_angle = math.atan2(py - cy, px - cx)
    return hull, 0


@njit(cache=True)
def _edge_feasible(hull, m, ax, ay, bx, by, closing):  # pragma: no cover
    """True unless segment a->b properly crosses a non-adjacent hull edge."""
    if m < 2:
        return True
    lo = 1 if closing else 0  # closing edge shares the start vertex with edge 0
    hi = m - 2                # the last edge ends at `a`
    d1x = bx - ax
    d1y = by - ay
    for e in range(lo, hi):
        d2x = hull[e + 1, 0] - hull[e, 0]
        d2y = hull[e + 1, 1] - hull[e, 1]
        denom = d1x * d2y - d1y * d2x
        if denom == 0.0:
            continue
        d3x = ax - hull[e, 0]
        d3y = ay - hull[e, 1]
        t1 = (d2x * d3y - d2y * d3x) / denom
        t2 = (d1x * d3y - d1y * d3x) / denom
        if 0.0 < t1 < 1.0 and 0.0 < t2 < 1.0:
            return False
    return True


DIG_SCALE = 1 / 64  # smallest excisable pocket, as a fraction of hull area


def _dig_concavities(ring: np.ndarray, pts: np.ndarray) -> list[Point]:
    """Macroscopic concavity pass over a valid hull walk.

    The greedy walk can skip a pocket entirely when the k-NN candidate
    ranking prefers following a wall, leaving an interior point p next to an
    edge (a, b) although replacing the edge with a->p->b would still be a
    simple polygon containing every input point. Excising such a triangle
    strictly decreases area and keeps vertices on the input set.

    Two gates keep the pass sane: the pocket must be macroscopic (at least
    DIG_SCALE of the hull area, so dense clouds are left to the walk) and
    local (pocket depth at most twice the mouth edge, so chords never cut
    across hollow figure interiors such as a drawn ring). Deterministic:
    cyclic edge scan; per edge, deepest pocket first, then input index.
    """
    n = len(pts)
    buf = np.empty((n, 2), dtype=np.float64)
    m = len(ring)
    buf[:m] = ring
    keys = {tuple(q): i for i, q in
            enumerate(np.round(pts / DEDUP_EPS).astype(np.int64).tolist())}
    used = np.zeros(n, dtype=np.bool_)
    for v in ring:
        i = keys.get(tuple(np.round(v / DEDUP_EPS).astype(np.int64).tolist()))
        if i is not None:
            used[i] = True
    m = _dig_jit(buf, m, np.ascontiguousarray(pts), used)
    return [Point(float(p[0]), float(p[1])) for p in buf[:m]]


@njit(cache=True)
def _dig_jit(hull, m, pts, used):  # pragma: no cover - driven via concave_hull
    n = pts.shape[0]
    cand_i = np.empty(n, np.int64)
    cand_a2 = np.empty(n, np.float64)
    while True:
        inserted = False
        e = 0
        while e < m:
            free_left = False
            for i in range(n):
                if not used[i]:
                    free_left = True
                    break
            if not free_left:
                return m
            # ring area for the macroscopic gate
            area2_hull = 0.0
            for q in range(m):
                r = (q + 1) % m
                area2_hull += hull[q, 0] * hull[r, 1] - hull[r, 0] * hull[q, 1]
            min_area2 = DIG_SCALE * abs(area2_hull)
            if min_area2 < 1e-12:
                min_area2 = 1e-12

            ax = hull[e, 0]
            ay = hull[e, 1]
            bx = hull[(e + 1) % m, 0]
            by = hull[(e + 1) % m, 1]
            abx = bx - ax
            aby = by - ay
            ab_len = math.hypot(abx, aby)
            j = -1
            if ab_len > DEDUP_EPS:
                L2 = abx * abx + aby * aby
                cnt = 0
                for i in range(n):
                    if used[i]:
                        continue
                    px = pts[i, 0]
                    py = pts[i, 1]
                    a2 = abs(abx * (py - ay) - aby * (px - ax))
                    if a2 < min_area2:
                        continue
                    t = ((px - ax) * abx + (py - ay) * aby) / L2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                    dx = px - (ax + t * abx)
                    dy = py - (ay + t * aby)
                    if math.hypot(dx, dy) > 2.0 * ab_len:
                        continue
                    cand_i[cnt] = i
                    cand_a2[cnt] = a2
                    cnt += 1
                # deepest pocket first, ties by input index (scan order)
                for s in range(1, cnt):
                    ii = cand_i[s]
                    aa = cand_a2[s]
                    q = s
                    while q > 0 and cand_a2[q - 1] < aa:
                        cand_i[q] = cand_i[q - 1]
                        cand_a2[q] = cand_a2[q - 1]
                        q -= 1
                    cand_i[q] = ii
                    cand_a2[q] = aa
                for s in range(cnt):
                    i = cand_i[s]
                    if _triangle_clear(pts, used, i, ax, ay, bx, by) and \
                            _insert_feasible(hull, m, e, ax, ay, bx, by,
                                             pts[i, 0], pts[i, 1]):
                        j = i
                        break
            if j >= 0:
                for q in range(m, e + 1, -1):
                    hull[q, 0] = hull[q - 1, 0]
                    hull[q, 1] = hull[q - 1, 1]
                hull[e + 1, 0] = pts[j, 0]
                hull[e + 1, 1] = pts[j, 1]
                m += 1
                used[j] = True
                inserted = True
                e += 2
            else:
                e += 1
        if not inserted:
            return m
    return m


@njit(cache=True)
def _triangle_clear(pts, used, pi, ax, ay, bx, by):  # pragma: no cover
    """No other input point inside (or on the rim of) triangle (a, p, b).

    Rim hits block the dig conservatively: a point on the chord a-b would
    fall outside the ring once the triangle is excised.
    """
    px = pts[pi, 0]
    py = pts[pi, 1]
    eps = 1e-12
    for q in range(pts.shape[0]):
        if q == pi:
            continue
        qx = pts[q, 0]
        qy = pts[q, 1]
        # triangle corners do not count
        if abs(qx - ax) <= DEDUP_EPS and abs(qy - ay) <= DEDUP_EPS:
            continue
        if abs(qx - bx) <= DEDUP_EPS and abs(qy - by) <= DEDUP_EPS:
            continue
        s1 = (px - ax) * (qy - ay) - (py - ay) * (qx - ax)
        s2 = (bx - px) * (qy - py) - (by - py) * (qx - px)
        s3 = (ax - bx) * (qy - by) - (ay - by) * (qx - bx)
        if (s1 >= -eps and s2 >= -eps and s3 >= -eps) or \
                (s1 <= eps and s2 <= eps and s3 <= eps):
            return False
    return True


@njit(cache=True)
def _insert_feasible(hull, m, e, ax, ay, bx, by, px, py):  # pragma: no cover
    """New edges a->p and p->b must not properly cross non-adjacent ring edges."""
    for half in range(2):
        if half == 0:
            q1x, q1y, q2x, q2y = ax, ay, px, py
            skip1 = (e - 1) % m
            skip2 = e
        else:
            q1x, q1y, q2x, q2y = px, py, bx, by
            skip1 = e
            skip2 = (e + 1) % m
        d1x = q2x - q1x
        d1y = q2y - q1y
        for r in range(m):
            if r == skip1 or r == skip2:
                continue
            r2 = (r + 1) % m
            d2x = hull[r2, 0] - hull[r, 0]
            d2y = hull[r2, 1] - hull[r, 1]
            denom = d1x * d2y - d1y * d2x
            if denom == 0.0:
                continue
            d3x = q1x - hull[r, 0]
            d3y = q1y - hull[r, 1]
            t1 = (d2x * d3y - d2y * d3x) / denom
            t2 = (d1x * d3y - d1y * d3x) / denom
            if 0.0 < t1 < 1.0 and 0.0 < t2 < 1.0:
                return False
    return True


def simplify_polyline(line: Polyline, tolerance: float) -> Polyline:
    """Douglas-Peucker decimation.

    tolerance 0 is an exact identity; for tolerance > 0, every removed point
    lies within `tolerance` of the segment that replaced its span.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    if tolerance == 0 or len(line) <= 2:
        return line
    pts = line.as_array()
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i0, i1 = stack.pop()
        if i1 - i0 < 2:
            continue
        seg = pts[i1] - pts[i0]
        seg_len = math.hypot(seg[0], seg[1])
        mid = pts[i0 + 1: i1]
        rel = mid - pts[i0]
        if seg_len == 0:
            dev = np.hypot(rel[:, 0], rel[:, 1])
        else:
            dev = np.abs(seg[0] * rel[:, 1] - seg[1] * rel[:, 0]) / seg_len
        j = int(np.argmax(dev))
        if dev[j] > tolerance:
            split = i0 + 1 + j
            keep[split] = True
            stack.append((i0, split))
            stack.append((split, i1))
    kept = [line.points[i] for i in range(n) if keep[i]]
    return Polyline(kept, contact_id=line.contact_id)
