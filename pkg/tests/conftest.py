import cv2
import numpy as np
import pytest

from forgeguard.cascade import render_marker
from forgeguard.dataset import save_png, stratified_split
from forgeguard.imaging import Box, ImageBuffer
from forgeguard.model_zoo import BackboneSpec, assemble_classifier, seeded_backbone

CLASS_COLORS = {
    "real": (200, 40, 40),
    "fake": (40, 40, 200),
}

# per-class marker tints with channel mean 1.0, so the stage stub (which
# scores the channel mean) sees the canonical marker either way
MARKER_TINTS = {
    "real": (1.5, 0.75, 0.75),
    "fake": (0.75, 0.75, 1.5),
}


@pytest.fixture(autouse=True)
def _isolated_model_cache(tmp_path_factory, monkeypatch):
    cache = tmp_path_factory.getbasetemp() / "model_cache"
    monkeypatch.setenv("FORGEGUARD_MODEL_CACHE", str(cache))


def marker_image(label, box=Box(100, 100, 80, 80), size=320):
    """A blank frame with one class-tinted detection marker planted in it."""
    img = ImageBuffer(np.zeros((size, size, 3), np.float32))
    render_marker(img, box, tint=MARKER_TINTS[label])
    return img


def write_marker_video(path, label, n_frames=20, size=320):
    # FFV1 is lossless, so the planted marker survives the round trip intact
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"FFV1"), 10, (size, size)
    )
    assert writer.isOpened()
    frame = marker_image(label, size=size)
    bgr = cv2.cvtColor(frame.pixels.astype(np.uint8), cv2.COLOR_RGB2BGR)
    for _ in range(n_frames):
        writer.write(bgr)
    writer.release()


def make_class_image(rng, label, size=32):
    """A solid-color class image with mild per-pixel noise."""
    base = np.asarray(CLASS_COLORS[label], dtype=np.float32)
    noise = rng.uniform(-25, 25, size=(size, size, 3))
    return ImageBuffer(np.clip(base + noise, 0, 255).astype(np.float32))


def build_separable_dataset(root, per_class=150, size=32, seed=123):
    """Write a two-class, linearly separable PNG dataset with a 7:2:1 manifest."""
    rng = np.random.default_rng(seed)
    items = []
    for label in ("real", "fake"):
        for i in range(per_class):
            rel = f"{label}/{label}_{i:04d}.png"
            save_png(make_class_image(rng, label, size), root / rel)
            items.append((rel, label))
    return stratified_split(items, seed=seed)


@pytest.fixture(scope="session")
def separable_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("separable")
    manifest = build_separable_dataset(root)
    return root, manifest


@pytest.fixture()
def tiny_model():
    backbone = seeded_backbone(BackboneSpec("stub-32", 32, 64, params=1000))
    return assemble_classifier(backbone, 2)
