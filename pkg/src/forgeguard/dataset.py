"""Dataset preparation: frame extraction, tiered resizing, face harvesting at a
95% confidence floor with a 30% crop margin, stratified 7:2:1 splitting, and
the JSON-lines manifest that ties it together.

This module is also the codec boundary: images and videos enter here and
leave as ImageBuffers; harvested crops are written back as lossless PNG.
"""

from __future__ import annotations

import io
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from forgeguard.imaging import (
    DegenerateCropError,
    ImageBuffer,
    crop,
    expand_margin,
    resample,
    resize_rule,
    round_half_away,
)

CLASS_LABELS = ("real", "fake", "plastic")
SPLITS = ("train", "validation", "test")
DEFAULT_RATIOS = (7, 2, 1)

HARVEST_CONFIDENCE = 0.95
HARVEST_MARGIN = 0.30


class CodecError(ValueError):
    """A media file could not be decoded."""


class ManifestError(ValueError):
    """A manifest file violates its schema."""


@dataclass(frozen=True)
class FrameExtractionConfig:
    every_nth: int = 10
    max_frames: int | None = None

    def __post_init__(self):
        if self.every_nth < 1:
            raise ValueError("every_nth must be >= 1")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str | None = None
    source: str | None = None
    face_index: int | None = None

    def __post_init__(self):
        if self.label not in CLASS_LABELS:
            raise ValueError(f"label must be one of {CLASS_LABELS}, got {self.label!r}")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.face_index is not None and self.face_index < 0:
            raise ValueError("face_index must be >= 0")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    seed: int | None = None

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(paths) != len(set(paths)):
            dupes = sorted({p for p in paths if paths.count(p) > 1})
            raise ManifestError(f"duplicate manifest paths: {dupes[:3]}")

    def class_counts(self) -> dict:
        counts: dict = {}
        for e in self.entries:
            key = (e.label, e.split)
            counts[key] = counts.get(key, 0) + 1
        return counts

    def subset(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def verify_files(self, root: str | Path = ".") -> list[str]:
        """Paths of entries whose files are missing on disk."""
        root = Path(root)
        return [e.path for e in self.entries if not (root / e.path).exists()]


# ---------------------------------------------------------------------------
# codec boundary


def load_image(path: str | Path) -> ImageBuffer:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return ImageBuffer(np.asarray(rgb, dtype=np.float32))
    except Exception as exc:
        raise CodecError(f"cannot decode image {path}: {exc}") from exc


def decode_image_bytes(data: bytes) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            return ImageBuffer(np.asarray(rgb, dtype=np.float32))
    except Exception as exc:
        raise CodecError(f"cannot decode image payload: {exc}") from exc


def save_png(image: ImageBuffer, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(round_half_away(image.pixels), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path, format="PNG")


def extract_frames(video_path: str | Path, config: FrameExtractionConfig) -> list[ImageBuffer]:
    """Decode frames 0, n, 2n, ... in temporal order, up to any configured cap."""
    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise CodecError(f"cannot open video {video_path}")
    frames: list[ImageBuffer] = []
    index = 0
    try:
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if index % config.every_nth == 0:
                rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
                frames.append(ImageBuffer(rgb.astype(np.float32)))
                if config.max_frames is not None and len(frames) >= config.max_frames:
                    break
            index += 1
    finally:
        cap.release()
    return frames


# ---------------------------------------------------------------------------
# preprocessing and harvesting


def preprocess_frame(image: ImageBuffer) -> ImageBuffer:
    """Apply the width-tiered resize rule to both dimensions."""
    scale = resize_rule(image.width)
    if scale == 1.0:
        return image
    tw = max(1, int(round_half_away(image.width * scale)))
    th = max(1, int(round_half_away(image.height * scale)))
    return resample(image, tw, th)


def harvest_faces(
    image: ImageBuffer,
    detector,
    confidence: float = HARVEST_CONFIDENCE,
    margin: float = HARVEST_MARGIN,
) -> list[ImageBuffer]:
    """Crop every detection at or above the confidence floor, margin-expanded
    and clipped to the frame, in detection order."""
    crops = []
    for det in detector(image):
        if det.confidence < confidence:
            continue
        region = expand_margin(det.box, margin, (image.width, image.height))
        try:
            crops.append(crop(image, region))
        except DegenerateCropError:
            continue  # detection fell entirely outside the frame
    return crops


def catalog_names(base_name: str, count: int) -> list[tuple[str, int | None]]:
    """Filenames (and face_index values) for the crops of one frame.

    A single face keeps the plain name; multiple faces are catalogued
    individually with a face index suffix.
    """
    if count == 1:
        return [(f"{base_name}.png", None)]
    return [(f"{base_name}_f{i}.png", i) for i in range(count)]


# ---------------------------------------------------------------------------
# stratified split


def stratified_split(
    items: list[tuple[str, str]],
    ratios: tuple[int, int, int] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetManifest:
    """Shuffle each class by the seeded RNG and apportion to train/validation/test
    by largest remainder on the normalized ratios.

    Ties in the remainders are broken train > validation > test, so 11 items of
    one class land 8/2/1.
    """
    if any(r <= 0 for r in ratios):
        raise ValueError("ratios must be positive")
    total_ratio = sum(ratios)
    rng = random.Random(seed)
    by_label: dict[str, list[tuple[str, str]]] = {}
    for item in items:
        by_label.setdefault(item[1], []).append(item)

    entries: list[ManifestEntry] = []
    for label in sorted(by_label):
        group = list(by_label[label])
        rng.shuffle(group)
        n = len(group)
        # exact integer arithmetic so remainder ties resolve by the documented
        # train > validation > test order, not by float noise
        base = [(r * n) // total_ratio for r in ratios]
        remainders = [(r * n) % total_ratio for r in ratios]
        leftover = n - sum(base)
        order = sorted(range(3), key=lambda s: (-remainders[s], s))
        for s in order[:leftover]:
            base[s] += 1
        start = 0
        for split, count in zip(SPLITS, base):
            for path, lab in group[start : start + count]:
                entries.append(ManifestEntry(path=path, label=lab, split=split))
            start += count
    entries.sort(key=lambda e: e.path)
    return DatasetManifest(entries=entries, seed=seed)


# ---------------------------------------------------------------------------
# manifest IO


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """One JSON object per line; optional fields are omitted when absent."""
    lines = []
    for e in manifest.entries:
        doc = {"path": e.path, "label": e.label}
        if e.split is not None:
            doc["split"] = e.split
        if e.source is not None:
            doc["source"] = e.source
        if e.face_index is not None:
            doc["face_index"] = e.face_index
        lines.append(json.dumps(doc))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_manifest(path: str | Path, allow_unsplit: bool = False) -> DatasetManifest:
    """Parse a JSON-lines manifest, naming the offending line and field on error.

    ``allow_unsplit`` accepts entries without a split (the state cmd_prep
    leaves them in before cmd_split assigns one).
    """
    entries = []
    seen = set()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ManifestError(f"{path}:{lineno}: expected an object")
        for required in ("path", "label"):
            if required not in doc:
                raise ManifestError(f"{path}:{lineno}: missing field {required!r}")
        if doc["label"] not in CLASS_LABELS:
            raise ManifestError(
                f"{path}:{lineno}: field 'label' must be one of {CLASS_LABELS}, "
                f"got {doc['label']!r}"
            )
        split = doc.get("split")
        if split is None and not allow_unsplit:
            raise ManifestError(f"{path}:{lineno}: missing field 'split'")
        if split is not None and split not in SPLITS:
            raise ManifestError(
                f"{path}:{lineno}: field 'split' must be one of {SPLITS}, got {split!r}"
            )
        if doc["path"] in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate path {doc['path']!r}")
        seen.add(doc["path"])
        face_index = doc.get("face_index")
        if face_index is not None and (not isinstance(face_index, int) or face_index < 0):
            raise ManifestError(f"{path}:{lineno}: field 'face_index' must be an int >= 0")
        entries.append(
            ManifestEntry(
                path=doc["path"],
                label=doc["label"],
                split=split,
                source=doc.get("source"),
                face_index=face_index,
            )
        )
    return DatasetManifest(entries=entries)
