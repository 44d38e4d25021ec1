"""Raster kernels: stroke rendering, masks, edges, padding, compositing.

All rasters are 8-bit, row major, 1 channel (gray/mask) or 4 (RGBA).
Pixel centers sit on the integer grid: pixel (x, y) samples the point
(x, y), which is what makes single-pixel strokes land on exactly one
pixel. Blending is fixed point with round-half-up so outputs are byte
stable across platforms.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import BadThresholds, DegenerateInput, DimensionMismatch, EmptyInput
from .geometry import Point, Polygon, Polyline, concave_hull, simplify_polyline

CHAMFER_ORTH = 3      # 3-4 chamfer weights: within 8% of Euclidean
CHAMFER_DIAG = 4
_CHAMFER_INF = np.int32(1 << 28)

HULL_SIMPLIFY_TOLERANCE = 1.0  # px of pre-hull polyline decimation


@dataclass
class Raster:
    """8-bit image; array shape (h, w) for 1 channel or (h, w, 4) for RGBA."""

    array: np.ndarray

    def __post_init__(self) -> None:
        a = self.array
        if a.dtype != np.uint8:
            raise ValueError("raster data must be uint8")
        if a.ndim == 2:
            pass
        elif a.ndim == 3 and a.shape[2] == 4:
            pass
        else:
            raise ValueError(f"unsupported raster shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("raster must be at least 1x1")

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.array.ndim == 2 else 4

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    @classmethod
    def new(cls, width: int, height: int, channels: int = 1, fill: int | tuple = 0) -> "Raster":
        if channels == 1:
            a = np.full((height, width), fill, dtype=np.uint8)
        else:
            a = np.empty((height, width, 4), dtype=np.uint8)
            a[:] = fill
        return cls(a)

    @classmethod
    def from_png(cls, data: bytes | str) -> "Raster":
        img = Image.open(io.BytesIO(data)) if isinstance(data, bytes) else Image.open(data)
        if img.mode in ("L", "1", "I;16"):
            return cls(np.asarray(img.convert("L"), dtype=np.uint8))
        return cls(np.asarray(img.convert("RGBA"), dtype=np.uint8))

    def png_bytes(self) -> bytes:
        mode = "L" if self.channels == 1 else "RGBA"
        buf = io.BytesIO()
        Image.fromarray(self.array, mode=mode).save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path: str) -> None:
        mode = "L" if self.channels == 1 else "RGBA"
        Image.fromarray(self.array, mode=mode).save(path, format="PNG")

    def copy(self) -> "Raster":
        return Raster(self.array.copy())

    def to_rgba(self) -> "Raster":
        if self.channels == 4:
            return self
        a = np.empty((self.height, self.width, 4), dtype=np.uint8)
        a[:, :, 0] = a[:, :, 1] = a[:, :, 2] = self.array
        a[:, :, 3] = 255
        return Raster(a)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return self.array.shape == other.array.shape and \
            bool(np.array_equal(self.array, other.array))


@dataclass(frozen=True)
class PaddingRecord:
    left: int
    right: int
    top: int
    bottom: int
    original_size: tuple[int, int]
    padded_size: tuple[int, int]

    def __post_init__(self) -> None:
        ow, oh = self.original_size
        pw, ph = self.padded_size
        if ow + self.left + self.right != pw or oh + self.top + self.bottom != ph:
            raise ValueError("padding record is inconsistent")


@dataclass
class MaskBundle:
    """Formal intent of one blob: silhouette polygon, pixel mask, alpha
    feather band and edge map. `hull` is None when the silhouette was
    degenerate (collinear strokes) and the dilated stroke raster was used."""

    hull: Optional[Polygon]
    mask: Raster
    feather: Raster
    edges: Raster
    stroke_thickness: int
    bbox: tuple[int, int, int, int]  # x, y, w, h of the mask support


def rasterize_strokes(strokes: Sequence[Polyline], thickness: int,
                      size: tuple[int, int]) -> Raster:
    """Render polylines: every pixel center within thickness/2 of a stroke
    segment is set to 255. Stroke points are clamped into the canvas."""
    if not strokes:
        raise EmptyInput("no strokes to rasterize")
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    w, h = size
    out = np.zeros((h, w), dtype=np.uint8)
    r = thickness / 2.0
    pad = int(math.ceil(r)) + 1
    for line in strokes:
        pts = line.as_array()
        pts[:, 0] = np.clip(pts[:, 0], 0, w - 1)
        pts[:, 1] = np.clip(pts[:, 1], 0, h - 1)
        segs = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)] or [(pts[0], pts[0])]
        for a, b in segs:
            x0 = max(0, int(math.floor(min(a[0], b[0]) - pad)))
            x1 = min(w - 1, int(math.ceil(max(a[0], b[0]) + pad)))
            y0 = max(0, int(math.floor(min(a[1], b[1]) - pad)))
            y1 = min(h - 1, int(math.ceil(max(a[1], b[1]) + pad)))
            if x1 < x0 or y1 < y0:
                continue
            ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
            d = b - a
            L2 = d[0] * d[0] + d[1] * d[1]
            if L2 == 0:
                dist2 = (xs - a[0]) ** 2 + (ys - a[1]) ** 2
            else:
                t = np.clip(((xs - a[0]) * d[0] + (ys - a[1]) * d[1]) / L2, 0.0, 1.0)
                dist2 = (xs - (a[0] + t * d[0])) ** 2 + (ys - (a[1] + t * d[1])) ** 2
            out[y0:y1 + 1, x0:x1 + 1][dist2 <= r * r] = 255
    return Raster(out)


def chamfer_distance(support: np.ndarray) -> np.ndarray:
    """Two-pass 3-4 chamfer distance (int32, units of CHAMFER_ORTH per px)
    from each pixel to the nearest support pixel. Row-interior propagation
    uses a running-minimum identity, so both passes are fully vectorized."""
    h, w = support.shape
    d = np.where(support, np.int32(0), _CHAMFER_INF).astype(np.int32)
    ramp = np.arange(w, dtype=np.int64) * CHAMFER_ORTH

    def sweep(dist: np.ndarray) -> None:
        for y in range(h):
            row = dist[y].astype(np.int64)
            if y > 0:
                up = dist[y - 1].astype(np.int64)
                row = np.minimum(row, up + CHAMFER_ORTH)
                row[1:] = np.minimum(row[1:], up[:-1] + CHAMFER_DIAG)
                row[:-1] = np.minimum(row[:-1], up[1:] + CHAMFER_DIAG)
            # left-to-right: min over j<=x of row[j] + 3*(x-j)
            row = np.minimum.accumulate(row - ramp) + ramp
            # right-to-left
            rr = row[::-1]
            row = (np.minimum.accumulate(rr - ramp) + ramp)[::-1]
            dist[y] = np.minimum(row, _CHAMFER_INF)

    sweep(d)
    d = d[::-1, ::-1]
    sweep(d)
    return d[::-1, ::-1]


def dilate(support: np.ndarray, thickness: int) -> np.ndarray:
    """Disc dilation of radius thickness/2 via the chamfer approximation."""
    if thickness <= 0:
        return support.copy()
    radius_units = (CHAMFER_ORTH * thickness) // 2
    return chamfer_distance(support) <= radius_units


def feather_alpha(mask: np.ndarray, feather_width: int) -> np.ndarray:
    """Linear alpha ramp: 255 on the mask, falling to 0 at feather_width px
    (chamfer distance), round-half-up fixed point."""
    if feather_width <= 0:
        return np.where(mask, np.uint8(255), np.uint8(0))
    band = CHAMFER_ORTH * feather_width
    d = np.minimum(chamfer_distance(mask).astype(np.int64), band)
    alpha = (255 * (band - d) * 2 + band) // (2 * band)
    return alpha.astype(np.uint8)


def _gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3 * sigma))
    k = np.exp(-np.arange(-radius, radius + 1) ** 2 / (2.0 * sigma * sigma))
    return k / k.sum()


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def canny(image: Raster, sigma: float = 1.4, low: int = 50, high: int = 150) -> Raster:
    """Edge detector: Gaussian blur (kernel radius ceil(3*sigma)), Sobel
    gradients, non-maximum suppression over 4 direction bins, double
    threshold, hysteresis with 8-connectivity.

    Gradient magnitude is normalized so the strongest response in the image
    maps to 255; a constant image therefore yields an empty map.
    """
    if image.channels != 1:
        raise ValueError("canny expects a 1-channel raster")
    if low >= high:
        raise BadThresholds(f"low {low} must be < high {high}")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    img = image.array.astype(np.float64)
    k = _gaussian_kernel1d(sigma)
    img = ndimage.convolve1d(img, k, axis=0, mode="nearest")
    img = ndimage.convolve1d(img, k, axis=1, mode="nearest")
    gx = ndimage.convolve(img, _SOBEL_X, mode="nearest")
    gy = ndimage.convolve(img, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return Raster(np.zeros_like(image.array))
    mag = mag * (255.0 / peak)

    # non-maximum suppression: compare against both neighbors along the
    # gradient direction, quantized to 4 bins; ties keep both pixels so the
    # result is symmetric under 180-degree rotation
    angle = np.arctan2(gy, gx)
    bins = np.round(angle / (math.pi / 4)).astype(np.int64) % 4
    offs = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (-1, 1)}
    padded = np.pad(mag, 1, mode="constant")
    keep = np.zeros_like(mag, dtype=bool)
    h, w = mag.shape
    for b, (dy, dx) in offs.items():
        n1 = padded[1 + dy: 1 + dy + h, 1 + dx: 1 + dx + w]
        n2 = padded[1 - dy: 1 - dy + h, 1 - dx: 1 - dx + w]
        sel = bins == b
        keep |= sel & (mag >= n1) & (mag >= n2)
    nms = np.where(keep, mag, 0.0)

    strong = nms >= high
    weak = nms >= low
    if not strong.any():
        return Raster(np.zeros_like(image.array))
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    good = np.unique(labels[strong])
    edges = weak & np.isin(labels, good[good != 0])
    return Raster(np.where(edges, np.uint8(255), np.uint8(0)))


def pad_to_aspect(image: Raster, target_aspect: float) -> tuple[Raster, PaddingRecord]:
    """Replicate-edge padding to the target w:h ratio, split evenly with the
    extra pixel on the right/bottom; content region is bit-identical."""
    if target_aspect <= 0:
        raise ValueError("aspect must be > 0")
    w, h = image.width, image.height
    cur = w / h
    left = right = top = bottom = 0
    if cur < target_aspect:          # too narrow: widen
        new_w = max(w, round(target_aspect * h))
        extra = new_w - w
        left = extra // 2
        right = extra - left
    elif cur > target_aspect:        # too wide: heighten
        new_h = max(h, round(w / target_aspect))
        extra = new_h - h
        top = extra // 2
        bottom = extra - top
    rec = PaddingRecord(left, right, top, bottom, (w, h),
                        (w + left + right, h + top + bottom))
    if left == right == top == bottom == 0:
        return image.copy(), rec
    pads = ((top, bottom), (left, right)) + ((() if image.channels == 1 else ((0, 0),)))
    padded = np.pad(image.array, pads, mode="edge")
    return Raster(padded), rec


def remove_padding(image: Raster, record: PaddingRecord) -> Raster:
    """Exact inverse of pad_to_aspect for the matching record."""
    if (image.width, image.height) != record.padded_size:
        raise DimensionMismatch(
            f"raster {image.size} does not match padded size {record.padded_size}")
    y0 = record.top
    y1 = image.height - record.bottom
    x0 = record.left
    x1 = image.width - record.right
    return Raster(image.array[y0:y1, x0:x1].copy())


def composite(background: Raster, generated: Raster, bundle: MaskBundle) -> Raster:
    """Seam-aware blend: out = alpha*generated + (1-alpha)*background with
    alpha = feather/255, 8-bit fixed point, round-half-up. Pixels with
    feather 0 stay bit-identical to the background; feather 255 (the whole
    mask support) is bit-identical to the generated image."""
    if background.size != generated.size or background.size != bundle.feather.size:
        raise DimensionMismatch("composite inputs disagree about size")
    bg = background.to_rgba().array.astype(np.uint32)
    gen = generated.to_rgba().array.astype(np.uint32)
    alpha = bundle.feather.array.astype(np.uint32)[..., None]
    num = alpha * gen + (255 - alpha) * bg
    out = (2 * num + 255) // 510
    return Raster(out.astype(np.uint8))


def polygon_fill(poly: Polygon, size: tuple[int, int]) -> np.ndarray:
    """Scanline even-odd fill over integer pixel centers."""
    w, h = size
    out = np.zeros((h, w), dtype=bool)
    verts = poly.as_array()
    a = verts
    b = np.roll(verts, -1, axis=0)
    y0 = max(0, int(math.floor(verts[:, 1].min())))
    y1 = min(h - 1, int(math.ceil(verts[:, 1].max())))
    for y in range(y0, y1 + 1):
        cond = (a[:, 1] > y) != (b[:, 1] > y)
        if not cond.any():
            continue
        dy = b[cond, 1] - a[cond, 1]
        xs = a[cond, 0] + (y - a[cond, 1]) * (b[cond, 0] - a[cond, 0]) / dy
        xs.sort()
        for i in range(0, len(xs) - 1, 2):
            lo = int(math.ceil(xs[i]))
            hi = int(math.floor(xs[i + 1]))
            if hi >= lo:
                out[y, max(0, lo):min(w, hi + 1)] = True
    return out


def build_mask(strokes: Sequence[Polyline], thickness: int, feather_width: int,
               size: tuple[int, int], canny_sigma: float = 1.4,
               canny_low: int = 50, canny_high: int = 150) -> MaskBundle:
    """Silhouette mask for a blob of strokes.

    The concave hull of the (decimated) stroke points is filled and dilated
    by the stroke thickness, then unioned with the stroke raster itself so
    the mask always covers the ink. Collinear/degenerate stroke sets fall
    back to the dilated stroke raster with hull=None. The feather band ramps
    to zero at feather_width px; the edge map is Canny over the stroke
    raster restricted to the mask bbox expanded by feather_width.
    """
    strokes = [s for s in strokes if len(s) >= 1]
    if not strokes:
        raise EmptyInput("no strokes")
    stroke_raster = rasterize_strokes(strokes, thickness, size)

    hull: Optional[Polygon] = None
    pts: list[Point] = []
    for s in strokes:
        pts.extend(simplify_polyline(s, HULL_SIMPLIFY_TOLERANCE).points)
    try:
        hull = concave_hull(pts, k=3)
    except DegenerateInput:
        hull = None

    if hull is not None:
        support = polygon_fill(hull, size) | (stroke_raster.array > 0)
        mask_arr = np.where(dilate(support, thickness), np.uint8(255), np.uint8(0))
    else:
        mask_arr = stroke_raster.array.copy()
    mask = Raster(mask_arr)

    feather = Raster(feather_alpha(mask_arr > 0, feather_width))

    ys, xs = np.nonzero(mask_arr)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    bbox = (x0, y0, x1 - x0 + 1, y1 - y0 + 1)

    ex0 = max(0, x0 - feather_width)
    ey0 = max(0, y0 - feather_width)
    ex1 = min(size[0] - 1, x1 + feather_width)
    ey1 = min(size[1] - 1, y1 + feather_width)
    crop = Raster(stroke_raster.array[ey0:ey1 + 1, ex0:ex1 + 1].copy())
    edge_crop = canny(crop, canny_sigma, canny_low, canny_high)
    edges_arr = np.zeros_like(mask_arr)
    edges_arr[ey0:ey1 + 1, ex0:ex1 + 1] = edge_crop.array
    edges = Raster(edges_arr)

    return MaskBundle(hull=hull, mask=mask, feather=feather, edges=edges,
                      stroke_thickness=thickness, bbox=bbox)


def resize_bilinear(image: Raster, size: tuple[int, int]) -> Raster:
    """Separable bilinear resample in 8.8 fixed point (round-half-up), so
    results are byte-identical across platforms."""
    w, h = size
    if (w, h) == image.size:
        return image.copy()
    src = image.array
    sh, sw = src.shape[:2]

    def axis_coords(out_n: int, src_n: int):
        xs = (np.arange(out_n) + 0.5) * (src_n / out_n) - 0.5
        i0 = np.clip(np.floor(xs).astype(np.int64), 0, src_n - 1)
        i1 = np.minimum(i0 + 1, src_n - 1)
        frac = np.clip(xs - i0, 0.0, 1.0)
        wgt = np.round(frac * 256).astype(np.uint32)  # 0..256
        return i0, i1, wgt

    x0, x1, wx = axis_coords(w, sw)
    y0, y1, wy = axis_coords(h, sh)
    s = src.astype(np.uint32)
    if src.ndim == 2:
        tmp = s[:, x0] * (256 - wx)[None, :] + s[:, x1] * wx[None, :]
        acc = tmp[y0] * (256 - wy)[:, None] + tmp[y1] * wy[:, None]
    else:
        tmp = s[:, x0] * (256 - wx)[None, :, None] + s[:, x1] * wx[None, :, None]
        acc = tmp[y0] * (256 - wy)[:, None, None] + tmp[y1] * wy[:, None, None]
    return Raster(((acc + 32768) >> 16).astype(np.uint8))


def resize_nearest(image: Raster, size: tuple[int, int]) -> Raster:
    """Nearest-neighbour resample; keeps masks and edge maps binary."""
    w, h = size
    if (w, h) == image.size:
        return image.copy()
    sh, sw = image.array.shape[:2]
    xs = np.minimum((((np.arange(w) + 0.5) * (sw / w))).astype(int), sw - 1)
    ys = np.minimum((((np.arange(h) + 0.5) * (sh / h))).astype(int), sh - 1)
    if image.array.ndim == 2:
        return Raster(image.array[np.ix_(ys, xs)].copy())
    return Raster(image.array[np.ix_(ys, xs)].copy())
