"""Synchronous service core: one object owning canvas state, queue, tile
locks and telemetry.

All mutations flow through this class from a single caller at a time (the
asyncio shell serializes on a lock; harnesses are single-threaded), which
makes every scenario replayable: drive on_client_message / on_tick /
on_job_done with any clock and the outcomes are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .clock import MonotonicClock, VirtualClock
from .config import ServiceConfig
from .errors import BackendError, BadResponse, CosketchError, ProtocolError, QueueFull
from .geometry import Polyline
from .intent import HeuristicDescriber, HttpDescriber, default_registry, load_style_registry
from .pipeline import (
    CanvasView,
    HttpBackend,
    MockBackend,
    PipelineOutput,
    run_pipeline,
)
from .protocol import (
    BlobStateMsg,
    ErrorMsg,
    Hello,
    Ping,
    ResultPatchMsg,
    StrokeEcho,
    StrokeMsg,
    Welcome,
    encode_patch_pixels,
    parse_client_message,
)
from .raster import Raster, rasterize_strokes
from .scheduler import (
    Job,
    JobQueue,
    Priority,
    Telemetry,
    TileLockTable,
    align_region_to_tiles,
    complete,
    partition,
    tiles_for_region,
)
from .session import (
    Blob,
    BlobState,
    CanvasState,
    ResultPatch,
    StrokeEvent,
    apply_patch,
    expire_stale,
    ingest_stroke_event,
    mark_failed,
    seal_idle_blobs,
)

INK_RGBA = (40, 40, 48, 255)


@dataclass
class Outbound:
    """A server message plus routing: exclude_user for stroke echoes."""

    message: object
    exclude_user: Optional[str] = None


@dataclass
class WorkItem:
    """A dispatched job with everything the pipeline needs, snapshotted."""

    job: Job
    blob: Blob
    view: CanvasView
    describe_view: Optional[Raster]
    dispatched_at: float


class CoreService:
    def __init__(self, config: ServiceConfig, *, backend=None, clock=None,
                 registry=None, describer=None):
        self.config = config
        self.clock = clock or MonotonicClock()
        self.state = CanvasState(config.canvas_w, config.canvas_h)
        self.tiles = partition((config.canvas_w, config.canvas_h), config.tile_size)
        self.queue = JobQueue(config.queue_capacity)
        self.locks = TileLockTable()
        self.telemetry = Telemetry(workers_total=config.workers)
        self.backend = backend or self._make_backend(config)
        self.registry = registry or self._load_registry(config)
        self.describer = describer or self._make_describer(config)
        self.running: dict[int, WorkItem] = {}
        self._next_job_id = 1
        self._next_patch_seq = 1
        self._job_blob: dict[int, int] = {}
        self.recorded_events: list[StrokeEvent] = []

    @staticmethod
    def _make_backend(config: ServiceConfig):
        if config.backend == "http":
            if not config.backend_url:
                raise ValueError("backend 'http' needs backend_url")
            return HttpBackend(config.backend_url, config.backend_timeout_ms)
        return MockBackend(max_concurrent=config.workers)

    @staticmethod
    def _load_registry(config: ServiceConfig):
        if config.style_registry:
            return load_style_registry(config.style_registry)
        return default_registry()

    @staticmethod
    def _make_describer(config: ServiceConfig):
        if config.describer == "http":
            if not config.describer_url:
                raise ValueError("describer 'http' needs describer_url")
            return HttpDescriber(config.describer_url, config.describer_timeout_ms)
        return HeuristicDescriber()

    # ------------------------------------------------------------------ input

    def on_hello(self, msg: Hello) -> Welcome:
        if msg.protocol != self.config.protocol_version:
            raise ProtocolError(
                f"protocol {msg.protocol} unsupported (server speaks "
                f"{self.config.protocol_version})")
        return Welcome(user_id=msg.user, canvas_w=self.config.canvas_w,
                       canvas_h=self.config.canvas_h,
                       revision=self.state.revision,
                       protocol=self.config.protocol_version)

    def on_client_message(self, user_id: str, raw: str | bytes,
                          now: Optional[float] = None) -> list[Outbound]:
        """Parse and apply one client frame; returns broadcasts. Protocol
        errors raise and must disconnect only the offending client."""
        now = self.clock.now() if now is None else now
        msg = parse_client_message(raw)
        if isinstance(msg, Ping):
            return []
        if isinstance(msg, Hello):
            raise ProtocolError("hello is only valid as the first frame")
        assert isinstance(msg, StrokeMsg)
        kind = msg.type.removeprefix("stroke_")
        event = StrokeEvent(kind, user_id, msg.contact_id, msg.x, msg.y, msg.t)
        ingest_stroke_event(self.state, event, now, self.config.merge_margin)
        self.recorded_events.append(event)
        echo = StrokeEcho(user_id=user_id, contact_id=msg.contact_id, phase=kind,
                          x=msg.x, y=msg.y, t=msg.t, revision=self.state.revision)
        return [Outbound(echo, exclude_user=user_id)]

    # ------------------------------------------------------------------- tick

    def on_tick(self, now: Optional[float] = None) -> tuple[list[Outbound], list[WorkItem]]:
        """Seal idle blobs into jobs, expire stale ones and dispatch work.
        Returns (broadcasts, newly dispatched work items)."""
        now = self.clock.now() if now is None else now
        out: list[Outbound] = []

        for blob in seal_idle_blobs(self.state, self.config.idle_ms, now,
                                    self.config.merge_margin):
            job = Job(job_id=self._next_job_id, blob_id=blob.blob_id,
                      priority=Priority.INTERACTIVE,
                      tiles=frozenset(), enqueued_at=now)
            self._next_job_id += 1
            region = self._job_region(blob)
            job.region = region
            job.tiles = tiles_for_region(region, self.config.tile_size,
                                         self.state.size)
            self._job_blob[job.job_id] = blob.blob_id
            try:
                self.queue.enqueue(job)
            except QueueFull:
                # backpressure: blob stays queued and is retried next tick
                blob.state = BlobState.COLLECTING
                self._job_blob.pop(job.job_id, None)
                out.append(Outbound(ErrorMsg("queue_full",
                                             "generation queue is full")))
                continue
            self.telemetry.queue_depth = self.queue.depth
            out.append(Outbound(BlobStateMsg(blob.blob_id, blob.state.value,
                                             blob.bbox, self.state.revision)))

        expire_stale(self.state, now, self.config.ttl_ms, self.config.max_blobs)

        work = self._dispatch(now)
        for item in work:
            out.append(Outbound(BlobStateMsg(item.blob.blob_id,
                                             item.blob.state.value,
                                             item.blob.bbox,
                                             self.state.revision)))
        return out, work

    def _job_region(self, blob: Blob) -> tuple[int, int, int, int]:
        """Blob bbox grown by the feather width, clipped, tile aligned."""
        fx0, fy0, fx1, fy1 = blob.bbox
        f = self.config.feather_width
        w, h = self.state.size
        x0 = max(0, int(math.floor(fx0 - f)))
        y0 = max(0, int(math.floor(fy0 - f)))
        x1 = min(w, int(math.ceil(fx1 + f)) + 1)
        y1 = min(h, int(math.ceil(fy1 + f)) + 1)
        return align_region_to_tiles((x0, y0, x1 - x0, y1 - y0),
                                     self.config.tile_size, self.state.size)

    def _dispatch(self, now: float) -> list[WorkItem]:
        items = []
        cap = min(self.config.workers,
                  getattr(self.backend, "max_concurrent", self.config.workers))
        while len(self.running) < cap:
            job = self.queue.dispatch(self.locks)
            if job is None:
                break
            blob = self.state.blobs[self._job_blob[job.job_id]]
            if blob.state == BlobState.QUEUED:
                blob.transition(BlobState.GENERATING)
                self.state.bump()
            x, y, w, h = job.region
            view = CanvasView(region=job.region,
                              background=Raster(
                                  self.state.background.array[y:y + h, x:x + w].copy()))
            item = WorkItem(job=job, blob=blob, view=view,
                            describe_view=self._describe_view(blob),
                            dispatched_at=now)
            self.running[job.job_id] = item
            items.append(item)
        self.telemetry.queue_depth = self.queue.depth
        self.telemetry.workers_busy = len(self.running)
        return items

    def _describe_view(self, blob: Blob) -> Optional[Raster]:
        """Context crop: blob bbox expanded by config.context_expand, with
        the blob's ink rendered, so the describer sees surrounding canvas."""
        factor = self.config.context_expand
        if factor <= 1.0:
            return None
        x0, y0, x1, y1 = blob.bbox
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        hw = (x1 - x0) / 2 * factor
        hh = (y1 - y0) / 2 * factor
        w, h = self.state.size
        gx0 = max(0, int(math.floor(cx - hw)))
        gy0 = max(0, int(math.floor(cy - hh)))
        gx1 = min(w, int(math.ceil(cx + hw)) + 1)
        gy1 = min(h, int(math.ceil(cy + hh)) + 1)
        crop = Raster(self.state.background.array[gy0:gy1, gx0:gx1].copy())
        strokes = [Polyline([(p.x - gx0, p.y - gy0) for p in s.points.points],
                            s.contact_id) for s in blob.strokes]
        ink = rasterize_strokes(strokes, self.config.thickness,
                                (gx1 - gx0, gy1 - gy0))
        crop.array[ink.array > 0] = INK_RGBA
        return crop

    # ------------------------------------------------------------------- work

    def execute_job(self, item: WorkItem, job_clock=None) -> PipelineOutput:
        """Run the pipeline for a dispatched job. In virtual mode pass a
        per-job VirtualClock; scripted backend delays then advance it and
        become the job's virtual duration."""
        job_clock = job_clock or self.clock
        if hasattr(self.backend, "clock"):
            self.backend.clock = job_clock
        return run_pipeline(item.blob, item.view, self.backend, self.config,
                            registry=self.registry, describer=self.describer,
                            clock=job_clock, describe_view=item.describe_view)

    def on_job_done(self, item: WorkItem, output: Optional[PipelineOutput],
                    error: Optional[Exception], now: Optional[float] = None
                    ) -> list[Outbound]:
        """Settle a finished job: apply the patch or retry/fail, emit
        broadcasts."""
        now = self.clock.now() if now is None else now
        job = item.job
        self.running.pop(job.job_id, None)
        out: list[Outbound] = []

        if output is not None:
            patch = apply_patch(self.state, output.patch, now)
            complete(job, "done", self.queue, self.locks, self.telemetry,
                     max_retries=self.config.max_retries,
                     stage_latency_ms=output.stage_latency_ms,
                     queue_wait_ms=max(0.0, item.dispatched_at - job.enqueued_at),
                     end_to_end_ms=max(0.0, now - job.enqueued_at))
            out.append(Outbound(self._patch_msg(patch)))
            out.append(Outbound(BlobStateMsg(item.blob.blob_id,
                                             item.blob.state.value,
                                             item.blob.bbox,
                                             self.state.revision)))
        else:
            retryable = isinstance(error, BackendError) and \
                not isinstance(error, BadResponse)
            status = complete(job, "failed", self.queue, self.locks,
                              self.telemetry,
                              max_retries=self.config.max_retries if retryable else 0)
            if status == "failed":
                baked = self._bake_strokes(item)
                mark_failed(self.state, item.blob.blob_id, baked)
                out.append(Outbound(self._patch_msg(baked)))
                out.append(Outbound(BlobStateMsg(item.blob.blob_id,
                                                 BlobState.FAILED.value,
                                                 item.blob.bbox,
                                                 self.state.revision)))
        self.telemetry.workers_busy = len(self.running)
        self.telemetry.queue_depth = self.queue.depth
        return out

    def _bake_strokes(self, item: WorkItem) -> ResultPatch:
        """Graceful degradation: render the blob's strokes untransformed."""
        x, y, w, h = item.job.region
        pixels = item.view.background.to_rgba().copy()
        strokes = [Polyline([(p.x - x, p.y - y) for p in s.points.points],
                            s.contact_id) for s in item.blob.strokes]
        ink = rasterize_strokes(strokes, self.config.thickness, (w, h))
        pixels.array[ink.array > 0] = INK_RGBA
        return ResultPatch(blob_id=item.blob.blob_id, region=item.job.region,
                           pixels=pixels)

    def _patch_msg(self, patch: ResultPatch) -> ResultPatchMsg:
        x, y, w, h = patch.region
        seq = self._next_patch_seq
        self._next_patch_seq += 1
        return ResultPatchMsg(blob_id=patch.blob_id, x=x, y=y, w=w, h=h,
                              pixels_png=encode_patch_pixels(patch.pixels.png_bytes()),
                              revision=patch.revision_applied
                              if patch.revision_applied is not None
                              else self.state.revision,
                              seq=seq)

    # -------------------------------------------------------------- inspection

    def snapshot_png(self) -> bytes:
        return self.state.snapshot_png()

    def telemetry_report(self) -> dict:
        return self.telemetry.snapshot()
