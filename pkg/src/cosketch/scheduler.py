"""Prioritized job queue with tile-conflict-free dispatch, bounded
backpressure, retry bookkeeping and telemetry.

The queue and the tile-lock table form one synchronized domain: the service
calls into them under a single lock (or from the single-threaded simulation
loop), so the structures themselves stay lock-free.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, Optional

from .errors import QueueFull
from .pipeline import STAGES


class Priority(IntEnum):
    INTERACTIVE = 0
    BACKGROUND = 1


class JobState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


@dataclass(frozen=True)
class Tile:
    index: tuple[int, int]          # (col, row)
    rect: tuple[int, int, int, int]  # x, y, w, h


def partition(canvas_size: tuple[int, int], tile_size: int) -> list[Tile]:
    """ceil(w/t) x ceil(h/t) tiles; edge tiles truncated; disjoint, covering."""
    if tile_size < 1:
        raise ValueError("tile_size must be >= 1")
    w, h = canvas_size
    cols = (w + tile_size - 1) // tile_size
    rows = (h + tile_size - 1) // tile_size
    tiles = []
    for row in range(rows):
        for col in range(cols):
            x = col * tile_size
            y = row * tile_size
            tiles.append(Tile((col, row),
                              (x, y, min(tile_size, w - x), min(tile_size, h - y))))
    return tiles


def tiles_for_region(region: tuple[int, int, int, int], tile_size: int,
                     canvas_size: tuple[int, int]) -> frozenset[tuple[int, int]]:
    """Tile indices the region touches (region already clipped to canvas)."""
    x, y, w, h = region
    c0 = max(0, x // tile_size)
    r0 = max(0, y // tile_size)
    c1 = min((canvas_size[0] - 1) // tile_size, (x + w - 1) // tile_size)
    r1 = min((canvas_size[1] - 1) // tile_size, (y + h - 1) // tile_size)
    return frozenset((c, r) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1))


def align_region_to_tiles(region: tuple[int, int, int, int], tile_size: int,
                          canvas_size: tuple[int, int]) -> tuple[int, int, int, int]:
    """Grow the region to tile boundaries (clipped to the canvas)."""
    x, y, w, h = region
    x0 = (x // tile_size) * tile_size
    y0 = (y // tile_size) * tile_size
    x1 = min(canvas_size[0], ((x + w + tile_size - 1) // tile_size) * tile_size)
    y1 = min(canvas_size[1], ((y + h + tile_size - 1) // tile_size) * tile_size)
    return (x0, y0, x1 - x0, y1 - y0)


_job_seq = itertools.count()


@dataclass
class Job:
    job_id: int
    blob_id: int
    priority: Priority
    tiles: frozenset[tuple[int, int]]
    enqueued_at: float
    state: JobState = JobState.QUEUED
    attempt: int = 1
    region: tuple[int, int, int, int] = (0, 0, 0, 0)
    seq: int = field(default_factory=lambda: next(_job_seq))

    def sort_key(self):
        return (int(self.priority), self.enqueued_at, self.seq)


class TileLockTable:
    def __init__(self):
        self._locks: dict[tuple[int, int], int] = {}

    def all_free(self, tiles: frozenset[tuple[int, int]]) -> bool:
        return not any(t in self._locks for t in tiles)

    def acquire(self, tiles: frozenset[tuple[int, int]], job_id: int) -> None:
        conflicts = [t for t in tiles if t in self._locks]
        if conflicts:
            raise RuntimeError(f"tiles {conflicts} already locked")
        for t in tiles:
            self._locks[t] = job_id

    def release(self, tiles: frozenset[tuple[int, int]], job_id: int) -> None:
        for t in tiles:
            if self._locks.get(t) == job_id:
                del self._locks[t]

    def holder(self, tile: tuple[int, int]) -> Optional[int]:
        return self._locks.get(tile)

    def held(self) -> dict[tuple[int, int], int]:
        return dict(self._locks)


class JobQueue:
    """Bounded queue ordered by (priority, enqueued_at, seq): FIFO within a
    priority class. Dispatch skips tile-blocked jobs without reordering."""

    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self._items: list[Job] = []

    def __len__(self) -> int:
        return len(self._items)

    @property
    def depth(self) -> int:
        return len(self._items)

    def enqueue(self, job: Job, *, force: bool = False) -> int:
        """Insert in priority order, returning the queue position. `force`
        bypasses the capacity bound for retries of already-accepted jobs."""
        if job.state != JobState.QUEUED:
            raise ValueError(f"job {job.job_id} is {job.state.value}, not queued")
        if not force and len(self._items) >= self.capacity:
            raise QueueFull(f"queue at capacity {self.capacity}")
        key = job.sort_key()
        lo, hi = 0, len(self._items)
        while lo < hi:
            mid = (lo + hi) // 2
            if self._items[mid].sort_key() <= key:
                lo = mid + 1
            else:
                hi = mid
        self._items.insert(lo, job)
        return lo

    def dispatch(self, tile_locks: TileLockTable) -> Optional[Job]:
        """Highest-priority job whose tiles are all unlocked; locks them
        atomically. Blocked jobs are skipped in place (no head-of-line
        blocking across tiles)."""
        for i, job in enumerate(self._items):
            if tile_locks.all_free(job.tiles):
                tile_locks.acquire(job.tiles, job.job_id)
                del self._items[i]
                job.state = JobState.RUNNING
                return job
        return None

    def eligible_snapshot(self, tile_locks: TileLockTable) -> list[Job]:
        return [j for j in self._items if tile_locks.all_free(j.tiles)]

    def jobs(self) -> list[Job]:
        return list(self._items)


class Histogram:
    def __init__(self):
        self.values: list[float] = []

    def record(self, v: float) -> None:
        self.values.append(float(v))

    @property
    def count(self) -> int:
        return len(self.values)

    def percentile(self, q: float) -> Optional[float]:
        """Nearest-rank percentile; exact for degenerate distributions."""
        if not self.values:
            return None
        ordered = sorted(self.values)
        rank = max(1, math.ceil(q * len(ordered)))
        return ordered[rank - 1]

    def snapshot(self) -> dict:
        return {
            "count": self.count,
            "p50": self.percentile(0.50),
            "p95": self.percentile(0.95),
            "p99": self.percentile(0.99),
        }


TELEMETRY_STAGES = STAGES + ("queue_wait", "end_to_end")


class Telemetry:
    """Gauges, counters and per-stage latency histograms. `workers_busy` /
    `workers_total` stand in for the GPU-utilization gauge: mock workers
    have no GPU, so occupancy is the analogous signal."""

    def __init__(self, workers_total: int = 0):
        self.queue_depth = 0
        self.workers_busy = 0
        self.workers_total = workers_total
        self.jobs_done = 0
        self.jobs_failed = 0
        self.histograms: dict[str, Histogram] = {s: Histogram() for s in TELEMETRY_STAGES}

    def record_job(self, stage_latency_ms: dict[str, float], queue_wait_ms: float,
                   end_to_end_ms: float) -> None:
        for stage in STAGES:
            self.histograms[stage].record(stage_latency_ms.get(stage, 0.0))
        self.histograms["queue_wait"].record(queue_wait_ms)
        self.histograms["end_to_end"].record(end_to_end_ms)
        self.jobs_done += 1

    def snapshot(self) -> dict:
        return {
            "queue_depth": self.queue_depth,
            "workers_busy": self.workers_busy,
            "workers_total": self.workers_total,
            "jobs_done": self.jobs_done,
            "jobs_failed": self.jobs_failed,
            "stages": {name: h.snapshot() for name, h in self.histograms.items()},
        }


def complete(job: Job, outcome: str, queue: JobQueue, tile_locks: TileLockTable,
             telemetry: Telemetry, *, max_retries: int = 1,
             stage_latency_ms: Optional[dict[str, float]] = None,
             queue_wait_ms: float = 0.0, end_to_end_ms: float = 0.0) -> str:
    """Release tiles and settle the job: record telemetry on success,
    re-enqueue failures at their original priority and timestamp (no
    starvation reset) until attempts exceed max_retries + 1.

    Returns "done", "requeued" or "failed".
    """
    if job.state != JobState.RUNNING:
        raise ValueError(f"job {job.job_id} is {job.state.value}, not running")
    tile_locks.release(job.tiles, job.job_id)
    if outcome == "done":
        job.state = JobState.DONE
        telemetry.record_job(stage_latency_ms or {}, queue_wait_ms, end_to_end_ms)
        telemetry.queue_depth = queue.depth
        return "done"
    if outcome != "failed":
        raise ValueError(f"unknown outcome {outcome!r}")
    if job.attempt <= max_retries:
        job.attempt += 1
        job.state = JobState.QUEUED
        queue.enqueue(job, force=True)  # keeps original enqueued_at ordering
        telemetry.queue_depth = queue.depth
        return "requeued"
    job.state = JobState.FAILED
    telemetry.jobs_failed += 1
    telemetry.queue_depth = queue.depth
    return "failed"


def snapshot_telemetry(telemetry: Telemetry) -> dict:
    return telemetry.snapshot()


@dataclass
class SimJob:
    """Scripted job for the deterministic scheduler simulation."""

    submit_at: float
    duration_ms: float
    priority: Priority
    tiles: frozenset[tuple[int, int]]
    fail_times: int = 0  # first N executions report failure


@dataclass
class SimReport:
    finished: list[int]
    failed: list[int]
    tile_violations: int
    priority_inversions: int
    max_queue_depth: int
    queue_depth_consistent: bool
    makespan: float
    dispatch_log: list[tuple[float, int, int]]  # (time, job_id, worker)


def simulate(jobs: list[SimJob], workers: int, *, max_retries: int = 1,
             queue_capacity: int = 1024) -> SimReport:
    """Virtual-clock execution of scripted jobs over a worker pool.

    Every scheduling property is checked inside the loop: no two running
    jobs share a tile at any instant, and a background job is never
    dispatched while an interactive job contending for the same tiles was
    itself eligible.
    """
    queue = JobQueue(queue_capacity)
    locks = TileLockTable()
    telemetry = Telemetry(workers_total=workers)
    sim_of_job: dict[int, SimJob] = {}
    attempts_left: dict[int, int] = {}

    events: list[tuple[float, int, str, int]] = []
    seq = itertools.count()
    for i, sj in enumerate(jobs):
        heapq.heappush(events, (sj.submit_at, next(seq), "submit", i))

    idle_workers = list(range(workers))
    running: dict[int, tuple[Job, int]] = {}
    finished: list[int] = []
    failed: list[int] = []
    tile_violations = 0
    priority_inversions = 0
    max_depth = 0
    depth_consistent = True
    dispatch_log: list[tuple[float, int, int]] = []
    enqueued_count = 0
    retry_enqueues = 0
    dispatched_count = 0
    now = 0.0

    def try_dispatch(now: float) -> None:
        nonlocal dispatched_count, tile_violations, priority_inversions
        while idle_workers:
            eligible_before = queue.eligible_snapshot(locks)
            job = queue.dispatch(locks)
            if job is None:
                break
            if job.priority == Priority.BACKGROUND:
                clash = [j for j in eligible_before
                         if j.priority == Priority.INTERACTIVE and j.tiles & job.tiles]
                if clash:
                    priority_inversions += 1
            for other_job, _w in running.values():
                if other_job.tiles & job.tiles:
                    tile_violations += 1
            worker = idle_workers.pop(0)
            running[job.job_id] = (job, worker)
            dispatched_count += 1
            dispatch_log.append((now, job.job_id, worker))
            telemetry.workers_busy = workers - len(idle_workers)
            telemetry.queue_depth = queue.depth
            sj = sim_of_job[job.job_id]
            heapq.heappush(events, (now + sj.duration_ms, next(seq), "complete",
                                    job.job_id))

    while events:
        now, _s, kind, payload = heapq.heappop(events)
        if kind == "submit":
            sj = jobs[payload]
            job = Job(job_id=payload, blob_id=payload, priority=sj.priority,
                      tiles=sj.tiles, enqueued_at=sj.submit_at)
            sim_of_job[job.job_id] = sj
            attempts_left[job.job_id] = sj.fail_times
            queue.enqueue(job)
            enqueued_count += 1
            telemetry.queue_depth = queue.depth
        else:
            job, worker = running.pop(payload)
            idle_workers.append(worker)
            idle_workers.sort()
            telemetry.workers_busy = workers - len(idle_workers)
            if attempts_left[job.job_id] > 0:
                attempts_left[job.job_id] -= 1
                outcome = "failed"
            else:
                outcome = "done"
            status = complete(job, outcome, queue, locks, telemetry,
                              max_retries=max_retries,
                              queue_wait_ms=max(0.0, now - job.enqueued_at
                                                - sim_of_job[job.job_id].duration_ms),
                              end_to_end_ms=now - job.enqueued_at)
            if status == "done":
                finished.append(job.job_id)
            elif status == "failed":
                failed.append(job.job_id)
            else:
                retry_enqueues += 1
        max_depth = max(max_depth, queue.depth)
        # counting oracle: depth == inserted - removed, at every event
        if queue.depth != enqueued_count + retry_enqueues - dispatched_count:
            depth_consistent = False
        try_dispatch(now)

    return SimReport(finished=finished, failed=failed,
                     tile_violations=tile_violations,
                     priority_inversions=priority_inversions,
                     max_queue_depth=max_depth,
                     queue_depth_consistent=depth_consistent,
                     makespan=now,
                     dispatch_log=dispatch_log)
