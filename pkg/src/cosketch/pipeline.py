"""Per-blob transformation: pad, mask, describe, two-stage generate,
composite, unpad.

Backends are raster-in/raster-out. The deterministic mock backend is the
verification stand-in; HttpBackend adapts an external generation service
over multipart POST. Stage latencies are measured with the injected clock,
so under a virtual clock only scripted backend delays contribute.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .clock import MonotonicClock
from .config import ServiceConfig
from .errors import (
    BackendError,
    BackendTimeout,
    BackendUnavailable,
    BadResponse,
    EmptyInput,
)
from .geometry import Polyline
from .intent import (
    ContextDescriptor,
    HeuristicDescriber,
    StyleProfile,
    default_registry,
    render_prompt,
    select_style,
)
from .raster import (
    MaskBundle,
    Raster,
    build_mask,
    composite,
    pad_to_aspect,
    rasterize_strokes,
    remove_padding,
    resize_bilinear,
    resize_nearest,
)
from .session import Blob, ResultPatch

STAGES = ("pad", "mask", "describe", "coarse", "refine", "composite", "unpad")

INK_RGBA = (40, 40, 48, 255)
POSTERIZE_LEVELS = 4


@dataclass
class GenerationRequest:
    blob_id: int
    padded_sketch: Raster   # RGBA, backend working resolution
    edges: Raster           # 1-channel binary
    mask: Raster            # 1-channel, 255 = inside
    prompt: str
    style: StyleProfile
    stage: str              # coarse | refine
    denoise: float
    seed: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.denoise <= 1.0):
            raise ValueError("denoise must be within [0, 1]")
        sizes = {self.padded_sketch.size, self.edges.size, self.mask.size}
        if len(sizes) != 1:
            raise ValueError(f"request rasters disagree about size: {sizes}")
        if self.stage not in ("coarse", "refine"):
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass
class GenerationResult:
    blob_id: int
    image: Raster           # RGBA, same size as the request rasters
    stage: str
    per_stage_latency: float = 0.0  # ms spent inside the backend


class BackendContract(Protocol):
    name: str
    max_concurrent: int

    def generate(self, request: GenerationRequest) -> GenerationResult: ...


@dataclass
class CanvasView:
    """The slice of shared canvas a job works on."""

    region: tuple[int, int, int, int]   # x, y, w, h in canvas px
    background: Raster                  # RGBA crop of the region


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def _blend_fixed(base: np.ndarray, over: np.ndarray, weight: int) -> np.ndarray:
    """Fixed-point blend with round-half-up; weight in 0..255."""
    num = weight * over.astype(np.uint32) + (255 - weight) * base.astype(np.uint32)
    return ((2 * num + 255) // 510).astype(np.uint8)


class MockBackend:
    """Deterministic stylizer standing in for the diffusion service.

    Coarse: fills the mask interior with a seed-chosen palette color,
    shaded by a 4-level posterize of the sketch luminance. Refine: paints
    the edge map in a palette accent color and blends it over the incoming
    image at weight = denoise. Pixels outside the mask never change.
    """

    name = "mock"

    def __init__(self, latency_ms: float = 0.0, clock=None, max_concurrent: int = 8):
        self.latency_ms = latency_ms
        self.clock = clock
        self.max_concurrent = max_concurrent

    def _spend_latency(self) -> None:
        if self.latency_ms <= 0:
            return
        if self.clock is not None and hasattr(self.clock, "advance"):
            self.clock.advance(self.latency_ms)
        else:
            import time
            time.sleep(self.latency_ms / 1000.0)

    def generate(self, request: GenerationRequest) -> GenerationResult:
        self._spend_latency()
        img = request.padded_sketch.to_rgba().array.copy()
        mask = request.mask.array > 0
        palette = request.style.palette
        mix = _splitmix64(request.seed)

        if request.stage == "coarse":
            base = np.array(palette[mix % len(palette)], dtype=np.uint32)
            lum = request.padded_sketch.to_rgba().array[:, :, :3].mean(axis=2)
            level = np.minimum((lum / (256 / POSTERIZE_LEVELS)).astype(np.uint32),
                               POSTERIZE_LEVELS - 1)
            shade = 102 + 51 * level  # 4 shading steps, brightest at level 3
            fill = np.empty_like(img)
            for c in range(3):
                fill[:, :, c] = (base[c] * shade // 255).astype(np.uint8)
            fill[:, :, 3] = 255
            img[mask] = fill[mask]
        else:
            accent = palette[(mix + 1) % len(palette)]
            stylized = img.copy()
            paint = (request.edges.array > 0) & mask
            stylized[paint] = (*accent, 255)
            weight = int(round(request.denoise * 255))
            img = _blend_fixed(img, stylized, weight)
        return GenerationResult(blob_id=request.blob_id, image=Raster(img),
                                stage=request.stage)


class HttpBackend:
    """Adapter for an external generation service.

    POST multipart with parts `sketch`, `edges`, `mask` (PNG) and fields
    `prompt`, `denoise`, `seed`, `stage`; expects a PNG body back at the
    request size.
    """

    name = "http"

    def __init__(self, url: str, timeout_ms: int = 5000, max_concurrent: int = 2):
        self.url = url
        self.timeout_ms = timeout_ms
        self.max_concurrent = max_concurrent

    def generate(self, request: GenerationRequest) -> GenerationResult:
        import httpx

        files = {
            "sketch": ("sketch.png", request.padded_sketch.png_bytes(), "image/png"),
            "edges": ("edges.png", request.edges.png_bytes(), "image/png"),
            "mask": ("mask.png", request.mask.png_bytes(), "image/png"),
        }
        data = {
            "prompt": request.prompt,
            "denoise": str(request.denoise),
            "seed": str(request.seed),
            "stage": request.stage,
        }
        try:
            resp = httpx.post(self.url, files=files, data=data,
                              timeout=self.timeout_ms / 1000.0)
        except httpx.TimeoutException as e:
            raise BackendTimeout(str(e)) from e
        except httpx.TransportError as e:
            raise BackendUnavailable(str(e)) from e
        if resp.status_code != 200:
            raise BackendUnavailable(f"backend answered {resp.status_code}")
        try:
            image = Raster.from_png(resp.content).to_rgba()
        except Exception as e:
            raise BadResponse(f"backend response is not a PNG: {e}") from e
        if image.size != request.padded_sketch.size:
            raise BadResponse(
                f"backend returned {image.size}, expected {request.padded_sketch.size}")
        return GenerationResult(blob_id=request.blob_id, image=image,
                                stage=request.stage)


def mock_generate(request: GenerationRequest) -> GenerationResult:
    return MockBackend().generate(request)


def http_generate(request: GenerationRequest, endpoint: str,
                  timeout_ms: int = 5000) -> GenerationResult:
    return HttpBackend(endpoint, timeout_ms).generate(request)


def blob_seed(base_seed: int, blob_id: int) -> int:
    return _splitmix64((base_seed << 20) ^ blob_id) & 0xFFFFFFFFFFFFFFFF


@dataclass
class PipelineOutput:
    patch: ResultPatch
    bundle: MaskBundle
    descriptor: ContextDescriptor
    style: StyleProfile
    prompt: str
    stage_latency_ms: dict[str, float]
    artifacts: dict[str, Raster] = field(default_factory=dict)


def run_pipeline(blob: Blob, view: CanvasView, backend: BackendContract,
                 config: ServiceConfig, *, registry: Sequence[StyleProfile] | None = None,
                 describer: Callable | None = None, clock=None,
                 keep_artifacts: bool = False,
                 describe_view: Optional[Raster] = None) -> PipelineOutput:
    """Transform one blob: pad -> mask -> describe -> coarse -> refine ->
    composite -> unpad, returning the composited region patch.

    The refine stage receives the coarse output as its sketch and runs at
    config.denoise (coarse always runs at denoise 1.0). With the mock
    backend and a fixed seed the whole function is deterministic.
    """
    strokes = [s.points for s in blob.strokes if len(s.points) >= 1]
    if not strokes:
        raise EmptyInput(f"blob {blob.blob_id} has no strokes")
    clock = clock or MonotonicClock()
    registry = list(registry) if registry else default_registry()
    describer = describer or HeuristicDescriber()
    latency: dict[str, float] = {}
    artifacts: dict[str, Raster] = {}

    def timed(stage: str):
        class _T:
            def __enter__(self_t):
                self_t.t0 = clock.now()

            def __exit__(self_t, *exc):
                latency[stage] = max(0.0, clock.now() - self_t.t0)

        return _T()

    rx, ry, rw, rh = view.region

    # stage 1: sketch-in-context raster, aspect normalized to the backend square
    with timed("pad"):
        region_strokes = [
            Polyline([(p.x - rx, p.y - ry) for p in line.points], line.contact_id)
            for line in strokes
        ]
        stroke_raster = rasterize_strokes(region_strokes, config.thickness, (rw, rh))
        ink = stroke_raster.array > 0
        sketch = view.background.to_rgba().copy()
        sketch.array[ink] = INK_RGBA
        padded_sketch, pad_record = pad_to_aspect(sketch, 1.0)
        padded_bg, _ = pad_to_aspect(view.background.to_rgba(), 1.0)
        padded_strokes = [
            Polyline([(p.x + pad_record.left, p.y + pad_record.top) for p in line.points],
                     line.contact_id)
            for line in region_strokes
        ]

    # stage 2: formal intent
    with timed("mask"):
        bundle = build_mask(padded_strokes, config.thickness, config.feather_width,
                            padded_sketch.size, config.canny_sigma,
                            config.canny_low, config.canny_high)

    # stage 3: contextual intent
    with timed("describe"):
        descriptor = describer(describe_view if describe_view is not None
                               else padded_sketch, padded_strokes)
        style = select_style(descriptor, registry)
        prompt = render_prompt(descriptor, style)

    seed = blob_seed(config.seed, blob.blob_id)
    gen_size = (config.gen_size, config.gen_size)

    # stage 4: coarse pass at full denoise
    with timed("coarse"):
        request = GenerationRequest(
            blob_id=blob.blob_id,
            padded_sketch=resize_bilinear(padded_sketch, gen_size),
            edges=resize_nearest(bundle.edges, gen_size),
            mask=resize_nearest(bundle.mask, gen_size),
            prompt=prompt, style=style, stage="coarse", denoise=1.0, seed=seed)
        t0 = clock.now()
        coarse = backend.generate(request)
        coarse.per_stage_latency = max(0.0, clock.now() - t0)
        if coarse.image.size != gen_size:
            raise BadResponse(f"coarse output {coarse.image.size} != {gen_size}")

    # stage 5: refine pass over the coarse output at config.denoise
    with timed("refine"):
        refine_request = replace(request, padded_sketch=coarse.image,
                                 stage="refine", denoise=config.denoise)
        t0 = clock.now()
        refined = backend.generate(refine_request)
        refined.per_stage_latency = max(0.0, clock.now() - t0)
        if refined.image.size != gen_size:
            raise BadResponse(f"refine output {refined.image.size} != {gen_size}")

    # stage 6: blend into the padded background at region resolution
    with timed("composite"):
        generated = resize_bilinear(refined.image, padded_sketch.size)
        blended = composite(padded_bg, generated, bundle)

    # stage 7: drop the aspect padding, yielding the region patch
    with timed("unpad"):
        region_pixels = remove_padding(blended, pad_record)
        patch = ResultPatch(blob_id=blob.blob_id, region=view.region,
                            pixels=region_pixels)

    if keep_artifacts:
        artifacts = {
            "sketch": padded_sketch,
            "mask": bundle.mask,
            "feather": bundle.feather,
            "edges": bundle.edges,
            "coarse": coarse.image,
            "refined": refined.image,
            "composite": region_pixels,
            "mask_region": remove_padding(bundle.mask, pad_record),
            "feather_region": remove_padding(bundle.feather, pad_record),
        }
    return PipelineOutput(patch=patch, bundle=bundle, descriptor=descriptor,
                          style=style, prompt=prompt, stage_latency_ms=latency,
                          artifacts=artifacts)


def patch_digest(patch: ResultPatch) -> str:
    h = hashlib.sha256()
    h.update(repr(patch.region).encode())
    h.update(patch.pixels.array.tobytes())
    return h.hexdigest()
