"""Service configuration: one flat JSON document, every field overridable by
a command-line flag of the same name (underscores become dashes)."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class ServiceConfig:
    # canvas / session
    canvas_w: int = 1280
    canvas_h: int = 800
    merge_margin: int = 24        # px of blob-bbox expansion for clustering
    idle_ms: int = 800            # seal debounce after last stroke activity
    ttl_ms: int = 600_000         # composited blob lifetime
    max_blobs: int = 512

    # masking / edges
    thickness: int = 4
    feather_width: int = 8
    canny_sigma: float = 1.4
    canny_low: int = 50
    canny_high: int = 150

    # generation
    denoise: float = 0.3          # refine-stage denoise rate
    gen_size: int = 512           # square working resolution for backends
    seed: int = 0
    backend: str = "mock"         # mock | http
    backend_url: str = ""
    backend_timeout_ms: int = 5000
    context_expand: float = 1.5   # describe-view bbox expansion factor

    # describer
    describer: str = "heuristic"  # heuristic | http
    describer_url: str = ""
    describer_timeout_ms: int = 1000
    style_registry: str = ""      # path to a JSON style registry ('' = builtin)

    # scheduler / workers
    tile_size: int = 256
    workers: int = 4
    queue_capacity: int = 1024
    max_retries: int = 1

    # server
    port: int = 8765
    host: str = "127.0.0.1"
    tick_ms: int = 25
    outbound_buffer: int = 256
    protocol_version: int = 1
    static_dir: str = ""          # webclient assets served at /
    record: str = ""              # event-log path to append stroke events to
    replay: str = ""              # event-log path to replay at startup

    def validate(self) -> "ServiceConfig":
        if not (0.0 <= self.denoise <= 1.0):
            raise ValueError("denoise must be within [0, 1]")
        if self.canny_low >= self.canny_high:
            raise ValueError("canny_low must be < canny_high")
        if self.tile_size < 1 or self.workers < 1:
            raise ValueError("tile_size and workers must be >= 1")
        if self.canvas_w < 1 or self.canvas_h < 1:
            raise ValueError("canvas must be at least 1x1")
        return self

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        data = json.loads(Path(path).read_text())
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ServiceConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def with_overrides(self, **overrides) -> "ServiceConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **clean).validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
