"""Load harness: synthetic drawers measuring stroke-end -> result-patch
latency.

Virtual mode drives a CoreService on a virtual clock inside one event loop:
scripted backend delays are the only time cost, so reports are byte-stable
across runs. Wall mode drives a live server over WebSockets for real
measurements.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass
from typing import Optional

from .clock import VirtualClock
from .config import ServiceConfig
from .pipeline import MockBackend
from .protocol import ResultPatchMsg
from .scheduler import Histogram
from .service import CoreService
from .session import StrokeEvent


@dataclass
class LoadScript:
    users: int = 8
    strokes_per_user: int = 1
    stroke_points: int = 12
    stroke_gap_ms: float = 300.0   # pause between one user's strokes
    user_stagger_ms: float = 150.0  # offset between users' first strokes
    point_interval_ms: float = 16.0
    stroke_size_px: float = 60.0
    cell_pitch_px: float = 256.0   # tile-aligned so users hold disjoint tiles
    cell_offset_px: float = 66.0
    seed: int = 0

    def stroke_events(self, user: int, stroke: int, canvas: tuple[int, int],
                      start: float) -> list[StrokeEvent]:
        """A small closed square per (user, stroke). Cells sit on a
        tile-pitch grid so different users' expanded regions stay on
        disjoint tiles and generation can proceed fully in parallel."""
        w, h = canvas
        cols = max(1, int(w // self.cell_pitch_px))
        cell = user * max(1, self.strokes_per_user) + stroke
        cx = (cell % cols) * self.cell_pitch_px + self.cell_offset_px
        cy = (cell // cols) * self.cell_pitch_px + self.cell_offset_px
        cx = min(cx, w - self.stroke_size_px - 2)
        cy = min(cy, h - self.stroke_size_px - 2)
        s = self.stroke_size_px
        ring = [(cx, cy), (cx + s, cy), (cx + s, cy + s), (cx, cy + s), (cx, cy)]
        pts = []
        for i in range(self.stroke_points):
            seg = i * (len(ring) - 1) / self.stroke_points
            a = int(seg)
            frac = seg - a
            x = ring[a][0] + (ring[a + 1][0] - ring[a][0]) * frac
            y = ring[a][1] + (ring[a + 1][1] - ring[a][1]) * frac
            pts.append((x, y))
        pts.append(ring[0])

        uid = f"user{user}"
        events = [StrokeEvent("begin", uid, stroke, pts[0][0], pts[0][1], start)]
        for i, (x, y) in enumerate(pts[1:-1], start=1):
            events.append(StrokeEvent("point", uid, stroke, x, y,
                                      start + i * self.point_interval_ms))
        events.append(StrokeEvent("end", uid, stroke, pts[-1][0], pts[-1][1],
                                  start + len(pts) * self.point_interval_ms))
        return events


def run_virtual_load(config: ServiceConfig, script: LoadScript,
                     backend_stage_ms: float = 400.0,
                     horizon_ms: float = 120_000.0) -> dict:
    """Deterministic virtual-clock load run; returns the latency report."""
    clock = VirtualClock()
    backend = MockBackend(latency_ms=backend_stage_ms, clock=clock,
                          max_concurrent=config.workers)
    svc = CoreService(config, backend=backend, clock=clock)

    seq = itertools.count()
    events: list[tuple[float, int, str, object]] = []

    for user in range(script.users):
        for stroke in range(script.strokes_per_user):
            start = user * script.user_stagger_ms + \
                stroke * (script.stroke_gap_ms +
                          script.stroke_points * script.point_interval_ms)
            for ev in script.stroke_events(user, stroke,
                                           (config.canvas_w, config.canvas_h), start):
                heapq.heappush(events, (ev.t, next(seq), "stroke", ev))

    heapq.heappush(events, (0.0, next(seq), "tick", None))

    e2e = Histogram()
    stroke_end_of_blob: dict[int, float] = {}
    patches = 0
    jobs_in_flight = 0
    pending_strokes = sum(1 for e in events if e[2] == "stroke")

    def note_patches(outbound, now):
        nonlocal patches
        for ob in outbound:
            if isinstance(ob.message, ResultPatchMsg):
                blob = ob.message.blob_id
                if blob in stroke_end_of_blob:
                    e2e.record(now - stroke_end_of_blob[blob])
                patches += 1

    while events:
        t, _s, kind, payload = heapq.heappop(events)
        if t > horizon_ms:
            break
        if t > clock.now():
            clock.set(t)
        now = clock.now()
        if kind == "stroke":
            ev: StrokeEvent = payload
            raw = json.dumps({"type": f"stroke_{ev.kind}",
                              "contact_id": ev.contact_id,
                              "x": ev.x, "y": ev.y, "t": ev.t})
            svc.on_client_message(ev.user_id, raw, now)
            pending_strokes -= 1
            if ev.kind == "end":
                for blob in svc.state.blobs.values():
                    for s in blob.strokes:
                        if s.user_id == ev.user_id and s.ended_at == ev.t:
                            stroke_end_of_blob[blob.blob_id] = max(
                                stroke_end_of_blob.get(blob.blob_id, 0.0), now)
        elif kind == "tick":
            out, work = svc.on_tick(now)
            note_patches(out, now)
            for item in work:
                job_clock = VirtualClock(now)
                output = svc.execute_job(item, job_clock)
                duration = job_clock.now() - now
                jobs_in_flight += 1
                heapq.heappush(events, (now + duration, next(seq), "job",
                                        (item, output)))
            if pending_strokes > 0 or jobs_in_flight > 0 or svc.queue.depth > 0 \
                    or any(b.state.value in ("collecting", "queued", "generating")
                           for b in svc.state.blobs.values()):
                heapq.heappush(events, (now + config.tick_ms, next(seq), "tick", None))
        else:  # job completion
            item, output = payload
            jobs_in_flight -= 1
            out = svc.on_job_done(item, output, None, now)
            note_patches(out, now)

    snap = svc.telemetry_report()
    return {
        "mode": "virtual",
        "users": script.users,
        "strokes_per_user": script.strokes_per_user,
        "workers": config.workers,
        "backend_stage_ms": backend_stage_ms,
        "idle_ms": config.idle_ms,
        "denoise": config.denoise,
        "jobs_done": snap["jobs_done"],
        "jobs_failed": snap["jobs_failed"],
        "patches": patches,
        "end_to_end": e2e.snapshot(),
        "stages": snap["stages"],
    }


def run_wall_load(url: str, script: LoadScript, timeout_s: float = 60.0) -> dict:
    """Drive a live server over WebSockets; real clocks, real latencies."""
    import threading
    import time

    from websockets.sync.client import connect

    from .protocol import encode_client_message, Hello, StrokeMsg, parse_server_message

    e2e = Histogram()
    lock = threading.Lock()
    errors: list[str] = []

    def one_user(user: int) -> None:
        try:
            with connect(url, open_timeout=timeout_s) as ws:
                ws.send(encode_client_message(Hello(user=f"load{user}", protocol=1)))
                parse_server_message(ws.recv(timeout=timeout_s))  # welcome
                for stroke in range(script.strokes_per_user):
                    events = script.stroke_events(
                        user, stroke, (10_000, 10_000), start=0.0)
                    for ev in events:
                        ws.send(encode_client_message(StrokeMsg(
                            type=f"stroke_{ev.kind}", contact_id=ev.contact_id,
                            x=ev.x, y=ev.y, t=time.monotonic() * 1000)))
                        time.sleep(script.point_interval_ms / 1000.0)
                    sent_end = time.monotonic() * 1000
                    deadline = time.monotonic() + timeout_s
                    while time.monotonic() < deadline:
                        msg = parse_server_message(
                            ws.recv(timeout=max(0.1, deadline - time.monotonic())))
                        if isinstance(msg, ResultPatchMsg):
                            with lock:
                                e2e.record(time.monotonic() * 1000 - sent_end)
                            break
                    time.sleep(script.stroke_gap_ms / 1000.0)
        except Exception as e:
            with lock:
                errors.append(f"user{user}: {e}")

    threads = [threading.Thread(target=one_user, args=(u,))
               for u in range(script.users)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return {
        "mode": "wall",
        "users": script.users,
        "strokes_per_user": script.strokes_per_user,
        "errors": errors,
        "end_to_end": e2e.snapshot(),
    }
