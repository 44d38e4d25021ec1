"""Shared canvas state: stroke ingestion with persistent contact ids, blob
clustering and merging, seal debounce, lifetime control and patch
application.

CanvasState has a single logical writer: the service funnels every mutation
through one serialized command stream, so these operations never lock.
`revision` increases on every mutation and is what clients order by.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .errors import (
    ContactAlreadyActive,
    EmptyInput,
    OutOfBounds,
    StaleBlob,
    UnknownContact,
)
from .geometry import Polyline
from .raster import Raster

BACKGROUND_RGBA = (255, 255, 255, 255)
FAILED_INK_RGBA = (90, 90, 90, 255)  # untransformed strokes baked on failure


class BlobState(str, Enum):
    COLLECTING = "collecting"
    QUEUED = "queued"
    GENERATING = "generating"
    COMPOSITED = "composited"
    EXPIRED = "expired"
    FAILED = "failed"


_TRANSITIONS = {
    BlobState.COLLECTING: {BlobState.QUEUED, BlobState.EXPIRED},
    BlobState.QUEUED: {BlobState.GENERATING},
    BlobState.GENERATING: {BlobState.COMPOSITED, BlobState.FAILED},
    BlobState.COMPOSITED: {BlobState.EXPIRED},
    BlobState.EXPIRED: set(),
    BlobState.FAILED: set(),
}


@dataclass
class Stroke:
    contact_id: int
    user_id: str
    points: Polyline
    started_at: float
    ended_at: Optional[float] = None

    def bbox(self) -> tuple[float, float, float, float]:
        return self.points.bbox()


@dataclass
class Blob:
    blob_id: int
    strokes: list[Stroke] = field(default_factory=list)
    bbox: tuple[float, float, float, float] = (0, 0, 0, 0)  # margin-expanded
    state: BlobState = BlobState.COLLECTING
    last_activity: float = 0.0
    composited_at: Optional[float] = None

    def transition(self, new: BlobState) -> None:
        if new not in _TRANSITIONS[self.state]:
            raise StaleBlob(f"blob {self.blob_id}: {self.state.value} -> {new.value}")
        self.state = new


@dataclass
class ResultPatch:
    blob_id: int
    region: tuple[int, int, int, int]  # x, y, w, h
    pixels: Raster
    revision_applied: Optional[int] = None

    def __post_init__(self) -> None:
        x, y, w, h = self.region
        if self.pixels.size != (w, h):
            raise ValueError(
                f"patch pixels {self.pixels.size} do not match region {(w, h)}")
        if self.pixels.channels != 4:
            raise ValueError("patch pixels must be RGBA")


@dataclass
class StrokeEvent:
    kind: str  # begin | point | end
    user_id: str
    contact_id: int
    x: float
    y: float
    t: float

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "user": self.user_id,
                           "contact_id": self.contact_id,
                           "x": self.x, "y": self.y, "t": self.t})

    @classmethod
    def from_json(cls, line: str) -> "StrokeEvent":
        d = json.loads(line)
        return cls(d["kind"], d["user"], int(d["contact_id"]),
                   float(d["x"]), float(d["y"]), float(d["t"]))


@dataclass
class _LiveStroke:
    contact_id: int
    user_id: str
    points: list[tuple[float, float]]
    started_at: float


class CanvasState:
    def __init__(self, width: int, height: int):
        self.size = (width, height)
        self.background = Raster.new(width, height, channels=4, fill=BACKGROUND_RGBA)
        self.live: dict[tuple[str, int], _LiveStroke] = {}
        self.blobs: dict[int, Blob] = {}
        self.revision = 0
        self._next_blob_id = 1
        self._applied: set[tuple[int, int]] = set()

    def bump(self) -> int:
        self.revision += 1
        return self.revision

    def snapshot_png(self) -> bytes:
        return self.background.png_bytes()

    def live_bboxes(self) -> list[tuple[float, float, float, float]]:
        out = []
        for ls in self.live.values():
            xs = [p[0] for p in ls.points]
            ys = [p[1] for p in ls.points]
            out.append((min(xs), min(ys), max(xs), max(ys)))
        return out


def _expand(b: tuple[float, float, float, float], m: float,
            size: tuple[int, int]) -> tuple[float, float, float, float]:
    return (max(0.0, b[0] - m), max(0.0, b[1] - m),
            min(size[0] - 1.0, b[2] + m), min(size[1] - 1.0, b[3] + m))


def _intersects(a, b) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def _union(a, b):
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def ingest_stroke_event(state: CanvasState, event: StrokeEvent, now: float,
                        merge_margin: float = 24.0) -> Optional[int]:
    """Apply one begin/point/end event. Coordinates are clamped to the
    canvas. Contacts are keyed per user so simultaneous clients can reuse
    contact ids. Returns the blob id when an `end` closes a stroke."""
    w, h = state.size
    x = min(max(event.x, 0.0), w - 1.0)
    y = min(max(event.y, 0.0), h - 1.0)
    key = (event.user_id, event.contact_id)

    if event.kind == "begin":
        if key in state.live:
            raise ContactAlreadyActive(f"contact {key} already drawing")
        state.live[key] = _LiveStroke(event.contact_id, event.user_id,
                                      [(x, y)], event.t)
        state.bump()
        return None
    if event.kind == "point":
        if key not in state.live:
            raise UnknownContact(f"no open stroke for contact {key}")
        state.live[key].points.append((x, y))
        state.bump()
        return None
    if event.kind == "end":
        if key not in state.live:
            raise UnknownContact(f"no open stroke for contact {key}")
        ls = state.live.pop(key)
        ls.points.append((x, y))
        stroke = Stroke(contact_id=ls.contact_id, user_id=ls.user_id,
                        points=Polyline(ls.points), started_at=ls.started_at,
                        ended_at=event.t)
        blob_id = assign_to_blob(state, stroke, merge_margin, now)
        state.bump()
        return blob_id
    raise ValueError(f"unknown event kind {event.kind!r}")


def assign_to_blob(state: CanvasState, stroke: Stroke, merge_margin: float,
                   now: float) -> int:
    """Join the stroke to every transitively bbox-overlapping collecting
    blob (all merge into the lowest blob id) or start a new blob. Blobs that
    are queued or further along never merge: in-flight work stays valid.

    Overlap is tested against member strokes' expanded bboxes, not the
    blob's union bbox: the union over-covers (an L-shaped blob would absorb
    strokes in its empty corner), and the partition contract is connected
    components of the pairwise stroke-bbox graph."""
    if stroke.ended_at is None:
        raise ValueError("only closed strokes join blobs")
    sbox = _expand(stroke.bbox(), merge_margin, state.size)
    targets = [
        b for b in state.blobs.values()
        if b.state == BlobState.COLLECTING and any(
            _intersects(_expand(s.bbox(), merge_margin, state.size), sbox)
            for s in b.strokes)
    ]
    if not targets:
        blob = Blob(blob_id=state._next_blob_id, strokes=[stroke], bbox=sbox,
                    state=BlobState.COLLECTING, last_activity=now)
        state._next_blob_id += 1
        state.blobs[blob.blob_id] = blob
        return blob.blob_id

    survivor = min(targets, key=lambda b: b.blob_id)
    merged_box = sbox
    for b in targets:
        merged_box = _union(merged_box, b.bbox)
    for b in targets:
        if b.blob_id != survivor.blob_id:
            survivor.strokes.extend(b.strokes)
            del state.blobs[b.blob_id]
    survivor.strokes.append(stroke)
    survivor.bbox = merged_box
    survivor.last_activity = now
    return survivor.blob_id


def seal_idle_blobs(state: CanvasState, idle_ms: float, now: float,
                    merge_margin: float = 24.0) -> list[Blob]:
    """Move collecting blobs that have been idle for at least idle_ms to
    queued. A blob with an open contact drawing over it is never sealed."""
    sealed = []
    live_boxes = [_expand(b, merge_margin, state.size)
                  for b in state.live_bboxes()]
    for blob in state.blobs.values():
        if blob.state != BlobState.COLLECTING:
            continue
        if now - blob.last_activity < idle_ms:
            continue
        if any(_intersects(blob.bbox, lb) for lb in live_boxes):
            continue
        blob.transition(BlobState.QUEUED)
        state.bump()
        sealed.append(blob)
    return sealed


def expire_stale(state: CanvasState, now: float, ttl_ms: float,
                 max_blobs: int) -> list[int]:
    """Drop bookkeeping for composited blobs past their ttl; under count
    pressure the oldest composited blobs go first. Pixels stay in the
    background. Collecting/queued/generating blobs are never expired here."""
    expired: list[int] = []
    for blob in list(state.blobs.values()):
        if blob.state == BlobState.COMPOSITED and blob.composited_at is not None \
                and now - blob.composited_at >= ttl_ms:
            blob.transition(BlobState.EXPIRED)
            del state.blobs[blob.blob_id]
            expired.append(blob.blob_id)
    if len(state.blobs) > max_blobs:
        composited = sorted(
            (b for b in state.blobs.values() if b.state == BlobState.COMPOSITED),
            key=lambda b: (b.composited_at, b.blob_id))
        overflow = len(state.blobs) - max_blobs
        for blob in composited[:overflow]:
            blob.transition(BlobState.EXPIRED)
            del state.blobs[blob.blob_id]
            expired.append(blob.blob_id)
    if expired:
        state.bump()
    return expired


def apply_patch(state: CanvasState, patch: ResultPatch, now: float) -> ResultPatch:
    """Blit the composited pixels, move the blob to composited and stamp the
    patch with the revision it produced. Replaying an already-stamped patch
    is a no-op; patches for non-generating blobs raise StaleBlob."""
    if patch.revision_applied is not None and \
            (patch.blob_id, patch.revision_applied) in state._applied:
        return patch
    x, y, w, h = patch.region
    cw, ch = state.size
    if x < 0 or y < 0 or x + w > cw or y + h > ch:
        raise OutOfBounds(f"patch region {patch.region} outside canvas {state.size}")
    blob = state.blobs.get(patch.blob_id)
    if blob is None or blob.state != BlobState.GENERATING:
        raise StaleBlob(f"blob {patch.blob_id} is not generating")
    state.background.array[y:y + h, x:x + w] = patch.pixels.array
    blob.transition(BlobState.COMPOSITED)
    blob.composited_at = now
    patch.revision_applied = state.bump()
    state._applied.add((patch.blob_id, patch.revision_applied))
    return patch


def mark_failed(state: CanvasState, blob_id: int,
                baked: Optional[ResultPatch] = None) -> None:
    """Terminal failure: the blob's strokes stay on canvas untransformed
    (optionally baked into the background) and bookkeeping stops."""
    blob = state.blobs.get(blob_id)
    if blob is None or blob.state != BlobState.GENERATING:
        raise StaleBlob(f"blob {blob_id} is not generating")
    if baked is not None:
        x, y, w, h = baked.region
        state.background.array[y:y + h, x:x + w] = baked.pixels.array
    blob.transition(BlobState.FAILED)
    state.bump()


def write_event_log(path: str, events: Iterable[StrokeEvent]) -> None:
    with open(path, "a", encoding="utf-8") as f:
        for e in events:
            f.write(e.to_json() + "\n")


def read_event_log(path: str) -> list[StrokeEvent]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(StrokeEvent.from_json(line))
    return out
