"""Three-stage detection cascade: propose on an image pyramid, refine, output.

Stage networks are pluggable backends; this module owns the orchestration:
pyramid construction, dense proposal scanning, coordinate mapping, box
regression, landmark decoding, and the per-stage score filters and NMS.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from forgeguard.cascade.backends import StageBackend
from forgeguard.imaging import (
    Box,
    DegenerateCropError,
    ImageBuffer,
    Landmarks,
    ScoredBox,
    build_pyramid,
    crop,
    iou,
    nms,
    resample,
)

DEFAULT_THRESHOLDS = (0.6, 0.7, 0.95)
DEFAULT_NMS_THRESHOLDS = (0.7, 0.7, 0.7)
PYRAMID_FACTOR = 0.709
PYRAMID_MIN_SIZE = 12
PROPOSAL_STRIDE = 2


class DetectionBackendError(RuntimeError):
    """A stage backend failed while evaluating patches."""


@dataclass(frozen=True)
class FaceDetection:
    box: Box
    confidence: float
    landmarks: Landmarks | None = None


def apply_box_regression(box: Box, offsets: Sequence[float]) -> Box:
    """Shift corners by offsets scaled by the box's own width and height.

    x1' = x1 + dx1*w, y1' = y1 + dy1*h, x2' = x2 + dx2*w, y2' = y2 + dy2*h;
    the result is re-normalized so width and height stay non-negative.
    """
    dx1, dy1, dx2, dy2 = (float(v) for v in offsets)
    x1 = box.x + dx1 * box.w
    y1 = box.y + dy1 * box.h
    x2 = box.x2 + dx2 * box.w
    y2 = box.y2 + dy2 * box.h
    return Box(min(x1, x2), min(y1, y2), abs(x2 - x1), abs(y2 - y1))


def decode_landmarks(fractions: Sequence[float], box: Box) -> Landmarks:
    """Turn five (x, y) fractional pairs into pixel coordinates inside ``box``."""
    pts = [
        (box.x + float(fractions[2 * i]) * box.w, box.y + float(fractions[2 * i + 1]) * box.h)
        for i in range(5)
    ]
    return Landmarks(*pts)


def _backends_by_role(backends: Sequence[StageBackend]) -> dict[str, StageBackend]:
    by_role: dict[str, StageBackend] = {}
    for backend in backends:
        if backend.stage_role in by_role:
            raise ValueError(f"duplicate backend for role {backend.stage_role!r}")
        by_role[backend.stage_role] = backend
    missing = {"proposal", "refine", "output"} - set(by_role)
    if missing:
        raise ValueError(f"missing backends for roles: {sorted(missing)}")
    return by_role


def _sliding_windows(image: ImageBuffer, size: int, stride: int):
    """All full (size x size) windows at the given stride, with their origins."""
    px = image.pixels
    if image.width < size or image.height < size:
        return None, None, None
    windows = np.lib.stride_tricks.sliding_window_view(px, (size, size), axis=(0, 1))
    windows = windows[::stride, ::stride]  # (ny, nx, C, size, size)
    ny, nx = windows.shape[:2]
    patches = windows.transpose(0, 1, 3, 4, 2).reshape(ny * nx, size, size, px.shape[2])
    xs = np.tile(np.arange(nx) * stride, ny)
    ys = np.repeat(np.arange(ny) * stride, nx)
    return patches, xs, ys


def _evaluate(backend: StageBackend, patches: np.ndarray):
    try:
        return backend.evaluate_batch(patches)
    except Exception as exc:
        raise DetectionBackendError(
            f"{backend.stage_role} backend failed: {exc}"
        ) from exc


def _rescore_stage(
    image: ImageBuffer,
    candidates: list[ScoredBox],
    backend: StageBackend,
    threshold: float,
):
    """Crop each candidate from the original image, rescore and regress it."""
    survivors = []
    for cand in candidates:
        try:
            patch = crop(image, cand.box)
        except DegenerateCropError:
            continue
        patch = resample(patch, backend.input_size, backend.input_size)
        scores, offsets, landmarks = _evaluate(backend, patch.pixels[None])
        score = float(scores[0])
        if score < threshold:
            continue
        regressed = apply_box_regression(cand.box, offsets[0])
        lm = tuple(float(v) for v in landmarks[0]) if landmarks is not None else None
        survivors.append((ScoredBox(regressed, min(1.0, score)), lm))
    return survivors


def detect_faces(
    image: ImageBuffer,
    backends: Sequence[StageBackend],
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS,
    nms_thresholds: tuple[float, float, float] = DEFAULT_NMS_THRESHOLDS,
    include_landmarks: bool = True,
    stride: int = PROPOSAL_STRIDE,
    pyramid_factor: float = PYRAMID_FACTOR,
    pyramid_min_size: int = PYRAMID_MIN_SIZE,
) -> list[FaceDetection]:
    """Run the full cascade and return detections sorted by descending confidence.

    Proposal: dense scan of every pyramid level, boxes mapped back to original
    coordinates, NMS. Refine: crop + resample each survivor, rescore against
    the second threshold, regress boxes, NMS. Output: rescore against the
    third threshold, regress, decode landmarks, final NMS.
    """
    by_role = _backends_by_role(backends)
    t1, t2, t3 = thresholds
    n1, n2, n3 = nms_thresholds

    levels = build_pyramid(image, pyramid_factor, pyramid_min_size)
    if not levels:
        return []

    proposal = by_role["proposal"]
    candidates: list[ScoredBox] = []
    for level in levels:
        patches, xs, ys = _sliding_windows(level.image, proposal.input_size, stride)
        if patches is None or len(patches) == 0:
            continue
        scores, _, _ = _evaluate(proposal, patches)
        keep = np.flatnonzero(scores >= t1)
        inv = 1.0 / level.scale
        side = proposal.input_size * inv
        for i in keep:
            box = Box(xs[i] * inv, ys[i] * inv, side, side)
            candidates.append(ScoredBox(box, min(1.0, float(scores[i]))))
    candidates = nms(candidates, n1)

    refined = [sb for sb, _ in _rescore_stage(image, candidates, by_role["refine"], t2)]
    refined = nms(refined, n2)

    outputs = _rescore_stage(image, refined, by_role["output"], t3)
    detections = []
    for sb, lm in outputs:
        landmarks = None
        if include_landmarks and lm is not None:
            landmarks = decode_landmarks(lm, sb.box)
        detections.append(FaceDetection(sb.box, sb.score, landmarks))

    detections.sort(key=lambda d: -d.confidence)
    final: list[FaceDetection] = []
    for det in detections:
        if all(iou(det.box, kept.box) <= n3 for kept in final):
            final.append(det)
    return final
