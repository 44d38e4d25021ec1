"""Acceptance criteria, one test per criterion, at the stated tolerances.

Every oracle here is test-local (shoelace, ray casting, segment
intersection, union-find, scalar blend recomputation) so the checks stay
independent of the library's own code paths. Run with `pytest -s
tests/test_acceptance.py` to see one PASS line per criterion.
"""

import hashlib
import json
import math
import time

import numpy as np
import pytest

from cosketch.clock import VirtualClock
from cosketch.config import ServiceConfig
from cosketch.geometry import Polyline, concave_hull, convex_hull
from cosketch.intent import StyleProfile
from cosketch.loadgen import LoadScript, run_virtual_load
from cosketch.pipeline import CanvasView, MockBackend, patch_digest, run_pipeline
from cosketch.protocol import (
    Hello,
    ResultPatchMsg,
    StrokeMsg,
    decode_patch_pixels,
    encode_client_message,
    parse_server_message,
)
from cosketch.raster import (
    MaskBundle,
    Raster,
    canny,
    composite,
    pad_to_aspect,
    remove_padding,
)
from cosketch.scheduler import Priority, SimJob, simulate
from cosketch.session import Blob, BlobState, CanvasState, Stroke, StrokeEvent, ingest_stroke_event


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {name}: {status}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------- oracles ---

def oracle_contains(pts: np.ndarray, verts: np.ndarray, eps=1e-9) -> bool:
    """Vectorized ray-crossing + boundary-band containment, test-local."""
    a = verts
    b = np.roll(verts, -1, axis=0)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    d = b - a
    L2 = np.maximum((d ** 2).sum(1), 1e-300)
    t = np.clip(((px - a[:, 0]) * d[:, 0] + (py - a[:, 1]) * d[:, 1]) / L2, 0, 1)
    dist2 = (px - (a[:, 0] + t * d[:, 0])) ** 2 + (py - (a[:, 1] + t * d[:, 1])) ** 2
    on_b = (dist2 <= eps * eps).any(1)
    cond = (a[:, 1] > py) != (b[:, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (py - a[:, 1]) * d[:, 0] / np.where(d[:, 1] == 0, 1, d[:, 1])
    inside = ((cond & (px < xint)).sum(1) % 2) == 1
    return bool(np.all(on_b | inside))


def oracle_simple(verts: np.ndarray) -> bool:
    """O(n^2) proper segment-intersection scan over non-adjacent edges."""
    n = len(verts)
    if n < 4:
        return True
    a = verts
    b = np.roll(verts, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    p1, p2, p3, p4 = a[i], b[i], a[j], b[j]
    d1 = p2 - p1
    d2 = p4 - p3
    den = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    d3 = p1 - p3
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (d2[:, 0] * d3[:, 1] - d2[:, 1] * d3[:, 0]) / den
        t2 = (d1[:, 0] * d3[:, 1] - d1[:, 1] * d3[:, 0]) / den
    hit = (den != 0) & (t1 > 0) & (t1 < 1) & (t2 > 0) & (t2 < 1)
    return not bool(hit.any())


def oracle_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))) / 2


# ------------------------------------------------------------- criteria ---

def test_acceptance_concave_hull_suite():
    """1,000 random sets, n in [3,500]: containment, simplicity, area bound,
    determinism; zero failures; under 30 s."""
    concave_hull([(0, 0), (4, 0), (0, 4), (3, 3)], 3)  # JIT warm-up, uncounted
    rng = np.random.default_rng(2024)
    t0 = time.monotonic()
    failures = 0
    for trial in range(1000):
        n = int(rng.integers(3, 501))
        pts = rng.uniform(0, 1000, size=(n, 2))
        as_tuples = [tuple(p) for p in pts]
        try:
            h1 = concave_hull(as_tuples, 3)
            h2 = concave_hull(as_tuples, 3)
        except Exception:
            failures += 1
            continue
        verts = h1.as_array()
        if not oracle_contains(pts, verts):
            failures += 1
        elif not oracle_simple(verts):
            failures += 1
        elif oracle_area(verts) > oracle_area(convex_hull(as_tuples).as_array()) + 1e-6:
            failures += 1
        elif h1 != h2:
            failures += 1
    elapsed = time.monotonic() - t0
    report("concave-hull-suite", failures == 0 and elapsed < 30.0,
           f"failures={failures} runtime={elapsed:.1f}s")


def _analytic_boundary_checks(img: np.ndarray, dist_fn) -> tuple[float, float]:
    """(recall, worst precision distance) against an analytic boundary."""
    e = canny(Raster(img), 1.4, 50, 150).array
    ys, xs = np.nonzero(e)
    assert len(ys) > 0, "empty edge map"
    worst = max(dist_fn(x, y) for x, y in zip(xs, ys))
    h, w = img.shape
    boundary = [(x, y) for x in range(w) for y in range(h) if dist_fn(x, y) <= 0.5]
    hit = 0
    eys, exs = ys, xs
    for bx, by in boundary:
        d2 = (exs - bx) ** 2 + (eys - by) ** 2
        if d2.min() <= 1.0:
            hit += 1
    return hit / len(boundary), worst


def test_acceptance_canny_fidelity():
    checks = []

    sq = np.zeros((48, 48), np.uint8)
    sq[12:36, 12:36] = 255

    def sq_dist(x, y, lo=11.5, hi=35.5):
        dx = max(lo - x, 0.0, x - hi)
        dy = max(lo - y, 0.0, y - hi)
        if dx > 0 or dy > 0:
            return math.hypot(dx, dy)
        return min(x - lo, hi - x, y - lo, hi - y)

    checks.append(("square",) + _analytic_boundary_checks(sq, sq_dist))

    # circle and triangle are sampled with analytic coverage (clamped signed
    # distance), so the image really has the ideal curve as its boundary;
    # hard thresholding would make the true boundary the jagged pixel polygon
    yy, xx = np.mgrid[0:64, 0:64]
    r = np.hypot(xx - 32, yy - 32)
    ci = (np.clip(20.0 - r + 0.5, 0.0, 1.0) * 255).astype(np.uint8)

    def ci_dist(x, y):
        return abs(math.hypot(x - 32, y - 32) - 20.0)

    checks.append(("circle",) + _analytic_boundary_checks(ci, ci_dist))

    verts = [(10.0, 50.0), (54.0, 50.0), (32.0, 10.0)]

    def seg_dist(x, y, a, b):
        ax, ay = a
        bx, by = b
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        t = max(0.0, min(1.0, ((x - ax) * dx + (y - ay) * dy) / L2))
        return math.hypot(x - (ax + t * dx), y - (ay + t * dy))

    def tr_signed(x, y):
        s = []
        for (x1, y1), (x2, y2) in zip(verts, verts[1:] + verts[:1]):
            s.append((x2 - x1) * (y - y1) - (y2 - y1) * (x - x1))
        inside = all(v >= 0 for v in s) or all(v <= 0 for v in s)
        d = min(seg_dist(x, y, a, b)
                for a, b in zip(verts, verts[1:] + verts[:1]))
        return d if inside else -d

    tr = np.zeros((64, 64), np.uint8)
    for y in range(64):
        for x in range(64):
            tr[y, x] = int(np.clip(tr_signed(x, y) + 0.5, 0.0, 1.0) * 255)

    def tr_dist(x, y):
        return abs(tr_signed(x, y))

    checks.append(("triangle",) + _analytic_boundary_checks(tr, tr_dist))

    const_empty = canny(Raster(np.full((32, 32), 99, np.uint8))).array.sum() == 0

    ok = const_empty and all(rec >= 0.9 and worst <= 1.0
                             for _, rec, worst in checks)
    detail = ", ".join(f"{n} recall={rec:.2f} worst={worst:.2f}"
                       for n, rec, worst in checks)
    report("canny-fidelity", ok, detail + f", const_empty={const_empty}")


def test_acceptance_compositing_exactness():
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(200):
        h, w = int(rng.integers(4, 40)), int(rng.integers(4, 40))
        bg = rng.integers(0, 256, (h, w, 4), dtype=np.uint8)
        gen = rng.integers(0, 256, (h, w, 4), dtype=np.uint8)
        mask = (rng.random((h, w)) < 0.3).astype(np.uint8) * 255
        feather = rng.integers(0, 256, (h, w), dtype=np.uint8)
        feather[mask == 255] = 255  # bundle invariant
        zeros = rng.random((h, w)) < 0.2
        feather[zeros & (mask == 0)] = 0
        bundle = MaskBundle(None, Raster(mask), Raster(feather),
                            Raster(np.zeros((h, w), np.uint8)), 4, (0, 0, w, h))
        out = composite(Raster(bg), Raster(gen), bundle).array
        if not np.array_equal(out[feather == 0], bg[feather == 0]):
            bad += 1
            continue
        if not np.array_equal(out[mask == 255], gen[mask == 255]):
            bad += 1
            continue
        a = feather.astype(np.float64)[..., None] / 255.0
        oracle = np.floor(a * gen + (1 - a) * bg + 0.5)
        if np.abs(out.astype(int) - oracle.astype(int)).max() > 1:
            bad += 1
    report("compositing-exactness", bad == 0, f"bad_triples={bad}/200")


def test_acceptance_padding_roundtrip():
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(500):
        h, w = int(rng.integers(1, 80)), int(rng.integers(1, 80))
        aspect = float(rng.uniform(0.2, 5.0))
        channels = 4 if rng.random() < 0.5 else 1
        shape = (h, w, 4) if channels == 4 else (h, w)
        img = Raster(rng.integers(0, 256, shape, dtype=np.uint8))
        padded, rec = pad_to_aspect(img, aspect)
        if remove_padding(padded, rec) != img:
            bad += 1
    report("padding-roundtrip", bad == 0, f"bad_pairs={bad}/500")


def _uf_components(boxes):
    n = len(boxes)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            a, b = boxes[i], boxes[j]
            if not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1]):
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def test_acceptance_blob_merging_equivalence():
    margin = 24.0
    size = (800, 800)
    rng = np.random.default_rng(99)
    bad = 0
    for trial in range(300):
        strokes = []
        for _ in range(int(rng.integers(2, 12))):
            x, y = rng.uniform(0, 700, 2)
            pts = [(x + rng.uniform(0, 60), y + rng.uniform(0, 60))
                   for _ in range(int(rng.integers(2, 6)))]
            strokes.append(pts)

        def ebox(pts):
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            return (max(0.0, min(xs) - margin), max(0.0, min(ys) - margin),
                    min(size[0] - 1.0, max(xs) + margin),
                    min(size[1] - 1.0, max(ys) + margin))

        oracle = _uf_components([ebox(p) for p in strokes])

        for order_seed in range(3):
            order = np.random.default_rng(order_seed).permutation(len(strokes))
            state = CanvasState(*size)
            stroke_of_contact = {}
            for contact, idx in enumerate(order):
                pts = strokes[idx]
                stroke_of_contact[contact] = int(idx)
                ingest_stroke_event(state, StrokeEvent(
                    "begin", "u", contact, *pts[0], 0.0), 0.0, margin)
                for p in pts[1:]:
                    ingest_stroke_event(state, StrokeEvent(
                        "point", "u", contact, *p, 1.0), 0.0, margin)
                ingest_stroke_event(state, StrokeEvent(
                    "end", "u", contact, *pts[-1], 2.0), 0.0, margin)
            got = {frozenset(stroke_of_contact[s.contact_id] for s in b.strokes)
                   for b in state.blobs.values()}
            if got != oracle:
                bad += 1
    report("blob-merging-equivalence", bad == 0, f"mismatches={bad}/900 runs")


def test_acceptance_scheduler_safety_priority():
    rng = np.random.default_rng(4242)
    jobs = []
    for _ in range(200):
        tiles = frozenset((int(rng.integers(0, 4)), int(rng.integers(0, 4)))
                          for _ in range(int(rng.integers(1, 4))))
        jobs.append(SimJob(submit_at=float(rng.integers(0, 8000)),
                           duration_ms=float(rng.integers(50, 900)),
                           priority=Priority(int(rng.integers(0, 2))),
                           tiles=tiles))
    rep = simulate(jobs, workers=4)
    ok = (rep.tile_violations == 0 and rep.priority_inversions == 0 and
          sorted(rep.finished + rep.failed) == list(range(200)))
    report("scheduler-safety-priority", ok,
           f"tile_violations={rep.tile_violations} "
           f"priority_inversions={rep.priority_inversions} "
           f"settled={len(rep.finished) + len(rep.failed)}/200")


def test_acceptance_latency_envelope():
    config = ServiceConfig().with_overrides(
        canvas_w=1280, canvas_h=800, tile_size=256, gen_size=64,
        workers=4, idle_ms=800, seed=1)
    rep = run_virtual_load(config, LoadScript(users=8, strokes_per_user=1),
                           backend_stage_ms=400.0)
    p50 = rep["end_to_end"]["p50"]
    p95 = rep["end_to_end"]["p95"]
    ok = rep["end_to_end"]["count"] == 8 and p50 < 2000.0 and p95 < 3000.0
    report("latency-envelope", ok, f"p50={p50}ms p95={p95}ms (jobs={rep['jobs_done']})")


STYLE = StyleProfile("acc", "acceptance",
                     ((200, 40, 40), (40, 200, 40), (40, 40, 200), (220, 220, 40)))


def _pipeline_fixture(denoise=None):
    pts = [(12, 12), (52, 12), (52, 52), (12, 52), (12, 12)]
    blob = Blob(blob_id=1,
                strokes=[Stroke(0, "u", Polyline(pts), 0.0, 1.0)],
                bbox=(4, 4, 60, 60), state=BlobState.GENERATING)
    view = CanvasView(region=(0, 0, 64, 64),
                      background=Raster.new(64, 64, 4, (255, 255, 255, 255)))
    overrides = dict(gen_size=64, thickness=2, feather_width=4, seed=7)
    if denoise is not None:
        overrides["denoise"] = denoise
    config = ServiceConfig().with_overrides(**overrides)
    return blob, view, config


def test_acceptance_pipeline_determinism():
    blob, view, config = _pipeline_fixture()
    d1 = patch_digest(run_pipeline(blob, view, MockBackend(), config,
                                   registry=[STYLE]).patch)
    d2 = patch_digest(run_pipeline(blob, view, MockBackend(), config,
                                   registry=[STYLE]).patch)
    report("pipeline-determinism", d1 == d2, f"digest={d1[:16]}")


def test_acceptance_denoise_wiring():
    class Recording(MockBackend):
        def __init__(self):
            super().__init__()
            self.log = []

        def generate(self, request):
            result = super().generate(request)
            self.log.append((request.stage, request.denoise, result))
            return result

    blob, view, config = _pipeline_fixture()
    rec = Recording()
    run_pipeline(blob, view, rec, config, registry=[STYLE])
    default_ok = [(s, d) for s, d, _ in rec.log] == [("coarse", 1.0), ("refine", 0.3)]

    blob, view, config = _pipeline_fixture(denoise=0.0)
    rec0 = Recording()
    run_pipeline(blob, view, rec0, config, registry=[STYLE])
    zero_ok = rec0.log[1][2].image == rec0.log[0][2].image
    report("denoise-wiring", default_ok and zero_ok,
           f"default_refine_denoise_0.3={default_ok} zero_identity={zero_ok}")


def test_acceptance_end_to_end_protocol():
    from websockets.sync.client import connect

    from cosketch.server import ServerThread

    config = ServiceConfig().with_overrides(
        canvas_w=512, canvas_h=512, tile_size=128, gen_size=64,
        workers=2, idle_ms=200, tick_ms=20, port=0, seed=21)
    with ServerThread(config) as srv:
        with connect(srv.ws_url, open_timeout=15) as ws:
            ws.send(encode_client_message(Hello(user="acceptance", protocol=1)))
            welcome = parse_server_message(ws.recv(timeout=10))
            pts = [(100, 100), (180, 100), (180, 180), (100, 180), (100, 100)]
            ws.send(encode_client_message(StrokeMsg("stroke_begin", 1, *pts[0], 0.0)))
            for p in pts[1:-1]:
                ws.send(encode_client_message(StrokeMsg("stroke_point", 1, *p, 1.0)))
            ws.send(encode_client_message(StrokeMsg("stroke_end", 1, *pts[-1], 2.0)))
            patch = None
            deadline = time.time() + 30
            while time.time() < deadline:
                msg = parse_server_message(ws.recv(timeout=15))
                if isinstance(msg, ResultPatchMsg):
                    patch = msg
                    break
            assert patch is not None
            local = Raster.new(512, 512, 4, (255, 255, 255, 255))
            pix = Raster.from_png(decode_patch_pixels(patch.pixels_png))
            local.array[patch.y:patch.y + patch.h,
                        patch.x:patch.x + patch.w] = pix.array
        import httpx
        snap = Raster.from_png(httpx.get(srv.http_url + "/snapshot",
                                         timeout=10).content)
    ok = hashlib.sha256(local.array.tobytes()).hexdigest() == \
        hashlib.sha256(snap.array.tobytes()).hexdigest()
    report("end-to-end-protocol", ok, "applied patch hash == /snapshot hash")
