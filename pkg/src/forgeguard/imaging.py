"""Pixel and box geometry primitives: IoU, NMS, pyramids, margins, crops, resampling.

Everything here is a pure function over plain value types; image decoding and
encoding live at the dataset codec boundary, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COLOR_ORDER = "RGB"


def round_half_away(x):
    """Round half away from zero (0.5 -> 1, -0.5 -> -1); works on arrays."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass
class ImageBuffer:
    """In-memory image: (height, width, channels) float32 intensities in [0, 255]."""

    pixels: np.ndarray
    color_order: str = COLOR_ORDER

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image dimensions must be >= 1, got {px.shape}")
        if px.size and (px.min() < 0 or px.max() > 255):
            raise ValueError("pixel intensities must lie in [0, 255]")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @classmethod
    def full(cls, width: int, height: int, value: float, channels: int = 3) -> "ImageBuffer":
        return cls(np.full((height, width, channels), value, dtype=np.float32))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; (x, y) is the top-left corner, w/h are non-negative."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box sides must be non-negative, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class Landmarks:
    """The five facial keypoints, each an (x, y) pixel pair."""

    left_eye: tuple
    right_eye: tuple
    nose: tuple
    mouth_left: tuple
    mouth_right: tuple

    def as_dict(self) -> dict:
        return {
            "left_eye": tuple(self.left_eye),
            "right_eye": tuple(self.right_eye),
            "nose": tuple(self.nose),
            "mouth_left": tuple(self.mouth_left),
            "mouth_right": tuple(self.mouth_right),
        }


@dataclass
class PyramidLevel:
    scale: float
    image: ImageBuffer


class DegenerateCropError(ValueError):
    """Raised when a crop region is empty after rounding and clipping."""


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 for disjoint or degenerate boxes."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    iw = max(0.0, ix2 - ix)
    ih = max(0.0, iy2 - iy)
    inter = iw * ih
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    # (x + w) - x can exceed w in floating point; keep the ratio in range
    return min(1.0, inter / union)


def nms(candidates: list[ScoredBox], overlap_threshold: float) -> list[ScoredBox]:
    """Greedy non-maximum suppression.

    Repeatedly keeps the highest-scoring remaining box and discards the rest
    whose IoU with it exceeds ``overlap_threshold``. Ties on equal scores are
    broken by input order (earlier wins); output is in descending score order.
    """
    if not 0.0 <= overlap_threshold <= 1.0:
        raise ValueError("overlap_threshold must lie in [0, 1]")
    # sorted() is stable, so equal scores keep input order
    ordered = sorted(candidates, key=lambda sb: -sb.score)
    kept: list[ScoredBox] = []
    for cand in ordered:
        if all(iou(cand.box, k.box) <= overlap_threshold for k in kept):
            kept.append(cand)
    return kept


def build_pyramid(image: ImageBuffer, factor: float, min_size: int) -> list[PyramidLevel]:
    """Downscale ``image`` by powers of ``factor``; keep levels with both dims >= min_size.

    Level k has scale factor**k starting at 1.0; each level's dimensions are
    floor(dim * scale). An image already below ``min_size`` yields no levels.
    """
    if not 0.0 < factor < 1.0:
        raise ValueError("factor must lie in (0, 1)")
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    levels: list[PyramidLevel] = []
    k = 0
    while True:
        scale = factor**k
        w = int(np.floor(image.width * scale))
        h = int(np.floor(image.height * scale))
        if w < min_size or h < min_size:
            break
        levels.append(PyramidLevel(scale=scale, image=resample(image, w, h)))
        k += 1
    return levels


def expand_margin(box: Box, fraction: float, bounds: tuple[int, int]) -> Box:
    """Grow a box by fraction*w on each side horizontally and fraction*h vertically,
    then clip to [0, width] x [0, height]."""
    if fraction < 0:
        raise ValueError("fraction must be >= 0")
    width, height = bounds
    x1 = max(0.0, box.x - fraction * box.w)
    y1 = max(0.0, box.y - fraction * box.h)
    x2 = min(float(width), box.x2 + fraction * box.w)
    y2 = min(float(height), box.y2 + fraction * box.h)
    return Box(x1, y1, max(0.0, x2 - x1), max(0.0, y2 - y1))


def resize_rule(width: int) -> float:
    """Width-tiered scale factor: <300 -> 2.0, [300,1000) -> 1.0, [1000,1900) -> 0.5,
    >=1900 -> 1/3."""
    if width < 1:
        raise ValueError("width must be >= 1")
    if width < 300:
        return 2.0
    if width < 1000:
        return 1.0
    if width < 1900:
        return 0.5
    return 1.0 / 3.0


def crop(image: ImageBuffer, box: Box) -> ImageBuffer:
    """Extract the integer pixel region of ``box``: edges rounded half away from
    zero, clipped to the image; raises DegenerateCropError if nothing remains."""
    x1 = int(round_half_away(box.x))
    y1 = int(round_half_away(box.y))
    x2 = int(round_half_away(box.x2))
    y2 = int(round_half_away(box.y2))
    x1 = max(0, min(x1, image.width))
    x2 = max(0, min(x2, image.width))
    y1 = max(0, min(y1, image.height))
    y2 = max(0, min(y2, image.height))
    if x2 <= x1 or y2 <= y1:
        raise DegenerateCropError(f"crop of {box} is empty after rounding and clipping")
    return ImageBuffer(image.pixels[y1:y2, x1:x2].copy())


def resample(image: ImageBuffer, target_width: int, target_height: int) -> ImageBuffer:
    """Bilinear resample to exactly (target_width, target_height).

    Source coordinates use half-pixel centers, so same-size resampling is an
    exact copy and constant images stay constant. Output intensities are
    rounded half away from zero to whole values.
    """
    if target_width < 1 or target_height < 1:
        raise ValueError("target dimensions must be >= 1")
    if target_width == image.width and target_height == image.height:
        return ImageBuffer(image.pixels.copy())
    src = image.pixels
    h, w = image.height, image.width

    sx = (np.arange(target_width, dtype=np.float64) + 0.5) * (w / target_width) - 0.5
    sy = (np.arange(target_height, dtype=np.float64) + 0.5) * (h / target_height) - 0.5
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[None, :, None]
    fy = (sy - y0)[:, None, None]

    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    out = np.clip(round_half_away(out), 0, 255).astype(np.float32)
    return ImageBuffer(out)
