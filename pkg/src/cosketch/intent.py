"""Contextual intent: descriptors from measurable sketch features, style
selection against a keyword registry, and prompt rendering.

The heuristic describer is the deterministic stand-in used by all tests;
HttpDescriber adapts an external captioning service and falls back to the
heuristic on timeout or error.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInput, EmptyRegistry
from .geometry import Polyline
from .raster import Raster

TONES = ("calm", "vivid", "dark", "playful")

# fixed feature thresholds so descriptors (and goldens) are stable
ASPECT_WIDE = 1.3              # bbox w/h at least this -> "wide"
DENSITY_TERCILES = (0.6, 1.5)  # path length / half bbox perimeter
CLOSED_GAP_FRACTION = 0.1      # first-to-last gap vs path length
CLOSED_GAP_MIN_PX = 4.0
DARK_LUMINANCE = 64            # mean ink luminance below this -> dark tone
SPEED_VAR_TERCILES = (0.35, 0.8)
HUE_SATURATION_MIN = 0.15
HUE_VALUE_MIN = 40

_HUE_BUCKETS = (
    (15, "red"), (45, "orange"), (70, "yellow"),
    (160, "green"), (260, "blue"), (330, "purple"), (360, "red"),
)


@dataclass(frozen=True)
class ContextDescriptor:
    keywords: tuple[str, ...]
    tone: str
    prompt: str
    confidence: float

    def __post_init__(self) -> None:
        if self.tone not in TONES:
            raise ValueError(f"unknown tone {self.tone!r}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must be within [0, 1]")
        if self.keywords and not self.prompt:
            raise ValueError("prompt must be non-empty when keywords exist")


@dataclass(frozen=True)
class StyleProfile:
    style_id: str
    display_name: str
    palette: tuple[tuple[int, int, int], ...]
    match_keywords: tuple[str, ...] = ()
    backend_hint: str = ""

    def __post_init__(self) -> None:
        if not self.palette:
            raise ValueError("palette must be non-empty")


def _parse_color(c) -> tuple[int, int, int]:
    if isinstance(c, str):
        s = c.lstrip("#")
        return (int(s[0:2], 16), int(s[2:4], 16), int(s[4:6], 16))
    r, g, b = c
    return (int(r), int(g), int(b))


def style_from_dict(d: dict) -> StyleProfile:
    return StyleProfile(
        style_id=d["style_id"],
        display_name=d["display_name"],
        palette=tuple(_parse_color(c) for c in d["palette"]),
        match_keywords=tuple(k.lower() for k in d.get("match_keywords", [])),
        backend_hint=d.get("backend_hint", ""),
    )


def load_style_registry(path: str | Path) -> list[StyleProfile]:
    data = json.loads(Path(path).read_text())
    styles = [style_from_dict(d) for d in data]
    ids = [s.style_id for s in styles]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate style_id in registry")
    if not styles:
        raise EmptyRegistry("style registry file is empty")
    return styles


def default_registry() -> list[StyleProfile]:
    return [
        StyleProfile("flat-poster", "flat poster",
                     ((66, 135, 245), (245, 130, 66), (250, 250, 250), (30, 30, 30)),
                     ()),
        StyleProfile("oil-painting", "oil painting",
                     ((120, 84, 40), (196, 164, 96), (88, 110, 60), (40, 36, 60)),
                     ("dense", "closed", "dark")),
        StyleProfile("pencil-sketch", "pencil sketch",
                     ((240, 240, 240), (170, 170, 170), (90, 90, 90), (30, 30, 30)),
                     ("sparse", "open")),
        StyleProfile("neon-glow", "neon glow",
                     ((57, 255, 20), (255, 20, 147), (0, 229, 255), (20, 20, 30)),
                     ("vivid", "wide", "blue", "purple")),
        StyleProfile("watercolor", "watercolor",
                     ((164, 212, 240), (244, 202, 202), (210, 234, 192), (252, 244, 212)),
                     ("round", "calm", "green")),
    ]


def _stroke_features(strokes: Sequence[Polyline]) -> dict:
    pts = np.concatenate([s.as_array() for s in strokes], axis=0)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    w = max(x1 - x0, 1e-6)
    h = max(y1 - y0, 1e-6)

    seg_lengths: list[float] = []
    total_len = 0.0
    any_closed = False
    for s in strokes:
        a = s.as_array()
        if len(a) >= 2:
            d = np.hypot(*(a[1:] - a[:-1]).T)
            seg_lengths.extend(d.tolist())
            L = float(d.sum())
            total_len += L
            gap = float(np.hypot(*(a[-1] - a[0])))
            if len(a) >= 8 and gap <= max(CLOSED_GAP_MIN_PX, CLOSED_GAP_FRACTION * L):
                any_closed = True
    return {
        "aspect": w / h,
        "density": total_len / (w + h),
        "closed": any_closed,
        "seg_lengths": np.array(seg_lengths),
    }


def _dominant_hue(image: Raster) -> str | None:
    if image.channels != 4:
        return None
    a = image.array
    rgb = a[:, :, :3].astype(np.float64)
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    sat = np.where(mx > 0, (mx - mn) / np.maximum(mx, 1), 0)
    colored = (a[:, :, 3] > 0) & (sat >= HUE_SATURATION_MIN) & (mx >= HUE_VALUE_MIN)
    if not colored.any():
        return None
    r, g, b = rgb[colored].mean(axis=0) / 255.0
    hue = colorsys.rgb_to_hsv(r, g, b)[0] * 360.0
    for limit, name in _HUE_BUCKETS:
        if hue <= limit:
            return name
    return "red"


def describe(blob_image: Raster, strokes: Sequence[Polyline]) -> ContextDescriptor:
    """Deterministic heuristic descriptor.

    Keywords come from measurable features: bbox aspect class, stroke
    density tercile, closed-vs-open contour and the dominant hue bucket
    when the image carries color. Tone is the per-sample speed variance
    tercile, except that dark ink maps to "dark".
    """
    strokes = [s for s in strokes if len(s) >= 1]
    if not strokes or blob_image.array.size == 0 or not blob_image.array.any():
        raise EmptyInput("nothing to describe")

    f = _stroke_features(strokes)
    keywords: list[str] = []
    if f["aspect"] >= ASPECT_WIDE:
        keywords.append("wide")
    elif f["aspect"] <= 1.0 / ASPECT_WIDE:
        keywords.append("tall")
    else:
        keywords.append("round")
    lo, hi = DENSITY_TERCILES
    keywords.append("sparse" if f["density"] <= lo else
                    "medium" if f["density"] <= hi else "dense")
    keywords.append("closed" if f["closed"] else "open")
    hue = _dominant_hue(blob_image)
    if hue is not None:
        keywords.append(hue)

    if blob_image.channels == 4:
        ink = blob_image.array[:, :, 3] > 0
        lum = blob_image.array[:, :, :3].mean(axis=2)[ink]
    else:
        ink = blob_image.array > 0
        lum = blob_image.array[ink]
    mean_lum = float(lum.mean()) if lum.size else 255.0

    seg = f["seg_lengths"]
    if mean_lum < DARK_LUMINANCE:
        tone = "dark"
    elif seg.size < 2 or seg.mean() == 0:
        tone = "calm"
    else:
        cv = float(seg.std() / seg.mean())
        lo_t, hi_t = SPEED_VAR_TERCILES
        tone = "calm" if cv <= lo_t else "playful" if cv <= hi_t else "vivid"

    confidence = min(1.0, 0.25 * (3 + (1 if hue else 0)))
    kws = tuple(sorted(set(keywords)))
    prompt = ", ".join(kws + (tone,))
    return ContextDescriptor(keywords=kws, tone=tone, prompt=prompt,
                             confidence=confidence)


def render_prompt(desc: ContextDescriptor, style: StyleProfile) -> str:
    """"<keywords joined by ', '>, <tone>, in <display_name> style" with
    keywords sorted for stable output."""
    parts = list(sorted(desc.keywords)) + [desc.tone]
    return f"{', '.join(parts)}, in {style.display_name} style"


def select_style(desc: ContextDescriptor, registry: Sequence[StyleProfile]) -> StyleProfile:
    """Profile with the largest keyword overlap; ties and zero overlap fall
    back to registry order / the first (default) profile."""
    if not registry:
        raise EmptyRegistry("no styles to select from")
    kws = set(desc.keywords)
    best = registry[0]
    best_overlap = 0
    for profile in registry:
        overlap = len(kws & set(profile.match_keywords))
        if overlap > best_overlap:
            best = profile
            best_overlap = overlap
    return best


class HeuristicDescriber:
    """Callable wrapper so the pipeline can treat describers uniformly."""

    name = "heuristic"

    def __call__(self, blob_image: Raster, strokes: Sequence[Polyline]) -> ContextDescriptor:
        return describe(blob_image, strokes)


class HttpDescriber:
    """POSTs the blob PNG to an external captioning endpoint.

    Expected response: JSON {"keywords": [...], "tone": "...",
    "confidence": 0.x}. Timeouts, transport errors and malformed answers
    fall back to the heuristic describer.
    """

    name = "http"

    def __init__(self, url: str, timeout_ms: int = 1000):
        self.url = url
        self.timeout_ms = timeout_ms
        self._fallback = HeuristicDescriber()

    def __call__(self, blob_image: Raster, strokes: Sequence[Polyline]) -> ContextDescriptor:
        import httpx

        try:
            resp = httpx.post(
                self.url,
                content=blob_image.png_bytes(),
                headers={"content-type": "image/png"},
                timeout=self.timeout_ms / 1000.0,
            )
            resp.raise_for_status()
            data = resp.json()
            kws = tuple(sorted({str(k).lower() for k in data["keywords"]}))
            tone = data.get("tone", "calm")
            if tone not in TONES:
                tone = "calm"
            conf = float(data.get("confidence", 0.5))
            prompt = ", ".join(kws + (tone,)) if kws else tone
            return ContextDescriptor(keywords=kws, tone=tone, prompt=prompt,
                                     confidence=max(0.0, min(1.0, conf)))
        except Exception:
            return self._fallback(blob_image, strokes)
