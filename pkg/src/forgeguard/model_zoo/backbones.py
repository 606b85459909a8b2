"""Frozen feature-extraction backbones and the model registry.

The three reference variants mirror published architectures: their input
resolution, pooled feature width and parameter accounting are fixed here and
reported by ``count_params``. The bundled extraction engine is a deterministic
seeded projection (mean-pool to a coarse grid, fixed random projection, tanh)
so the whole pipeline runs offline; dropping a real weight container into the
registry cache swaps in learned features without touching any other code.
"""

from __future__ import annotations

import hashlib
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from forgeguard.imaging import ImageBuffer, resample

CACHE_ENV_VAR = "FORGEGUARD_MODEL_CACHE"
_POOL_GRID = 8

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class RegistryError(ValueError):
    """Unknown variant, missing weights, or a checksum mismatch."""


@dataclass(frozen=True)
class BackboneSpec:
    """Declared architecture facts for a backbone variant.

    ``params`` is the parameter count of the reference architecture the
    extractor stands in for; it is what count_params reports as non-trainable.
    """

    variant: str
    input_size: int
    feature_width: int
    params: int
    preprocessing: tuple = (
        ("scale", 1.0 / 255.0),
        ("mean", IMAGENET_MEAN),
        ("std", IMAGENET_STD),
    )

    def preprocessing_dict(self) -> dict:
        return {k: v for k, v in self.preprocessing}


REFERENCE_SPECS = {
    "efficientnet_b4": BackboneSpec("efficientnet_b4", 380, 1792, 17_673_820),
    "resnet50": BackboneSpec("resnet50", 128, 2048, 23_587_712),
    "vgg16": BackboneSpec("vgg16", 128, 512, 14_714_688),
}

# sha256 of each reference projection kernel's little-endian float32 bytes
REFERENCE_CHECKSUMS = {
    "efficientnet_b4": "7e5721277be204822209b26141065112c1b3ed505d2fb6e0d6f2075386ad9110",
    "resnet50": "dc137dd11f0f1e8f5c755bbb7070ece7c63072771e60f823ed57883cf3ff75d8",
    "vgg16": "918a99ac41579d76db1b121b0608eeeecc25c2885fff95a17c29030473ed65cf",
}


class Backbone:
    """Immutable feature extractor: images in, (N, feature_width) features out."""

    def __init__(self, spec: BackboneSpec, kernel: np.ndarray, pool_grid: int = _POOL_GRID):
        expected = (pool_grid * pool_grid * 3, spec.feature_width)
        if kernel.shape != expected:
            raise ValueError(f"kernel shape {kernel.shape} does not match {expected}")
        self.spec = spec
        self.kernel = np.ascontiguousarray(kernel, dtype=np.float32)
        self.pool_grid = pool_grid

    def _normalize(self, image: ImageBuffer) -> np.ndarray:
        if image.width != self.spec.input_size or image.height != self.spec.input_size:
            image = resample(image, self.spec.input_size, self.spec.input_size)
        px = image.pixels
        if px.shape[2] == 1:
            px = np.repeat(px, 3, axis=2)
        pre = self.spec.preprocessing_dict()
        x = px * pre["scale"]
        return (x - np.asarray(pre["mean"])) / np.asarray(pre["std"])

    def _pool(self, x: np.ndarray) -> np.ndarray:
        g = self.pool_grid
        h, w = x.shape[:2]
        ys = np.linspace(0, h, g + 1).astype(int)
        xs = np.linspace(0, w, g + 1).astype(int)
        pooled = np.empty((g, g, 3), dtype=np.float64)
        for i in range(g):
            for j in range(g):
                pooled[i, j] = x[ys[i] : max(ys[i + 1], ys[i] + 1), xs[j] : max(xs[j + 1], xs[j] + 1)].mean(
                    axis=(0, 1)
                )
        return pooled

    def extract_one(self, image: ImageBuffer) -> np.ndarray:
        pooled = self._pool(self._normalize(image)).reshape(-1)
        return np.tanh(pooled @ self.kernel.astype(np.float64))

    def extract(self, images: Iterable[ImageBuffer]) -> np.ndarray:
        feats = [self.extract_one(img) for img in images]
        if not feats:
            return np.zeros((0, self.spec.feature_width))
        return np.stack(feats)

    def kernel_checksum(self) -> str:
        return hashlib.sha256(self.kernel.astype("<f4").tobytes()).hexdigest()


def seeded_backbone(spec: BackboneSpec, pool_grid: int = _POOL_GRID) -> Backbone:
    """Deterministic projection backbone seeded by the variant name."""
    seed = zlib.crc32(spec.variant.encode("utf-8"))
    rng = np.random.default_rng(seed)
    dim = pool_grid * pool_grid * 3
    kernel = (rng.standard_normal((dim, spec.feature_width)) / np.sqrt(dim)).astype(np.float32)
    return Backbone(spec, kernel, pool_grid)


def reference_spec(variant: str) -> BackboneSpec:
    try:
        return REFERENCE_SPECS[variant]
    except KeyError:
        raise RegistryError(
            f"unknown backbone variant {variant!r}; known: {sorted(REFERENCE_SPECS)}"
        ) from None


def cache_dir(override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "forgeguard"


def load_backbone(variant: str, cache: str | os.PathLike | None = None) -> Backbone:
    """Fetch a backbone through the registry cache, verifying its checksum.

    The reference container is materialized deterministically on first use;
    later loads must match the recorded checksum or a RegistryError is raised.
    """
    spec = reference_spec(variant)
    directory = cache_dir(cache)
    path = directory / f"{variant}.npz"
    if path.exists():
        try:
            with np.load(path) as data:
                kernel = data["kernel"]
                pool_grid = int(data["pool_grid"])
        except Exception as exc:
            raise RegistryError(f"cannot read backbone container {path}: {exc}") from exc
        backbone = Backbone(spec, kernel, pool_grid)
    else:
        backbone = seeded_backbone(spec)
        directory.mkdir(parents=True, exist_ok=True)
        np.savez(path, kernel=backbone.kernel, pool_grid=backbone.pool_grid)
    recorded = REFERENCE_CHECKSUMS.get(variant)
    if recorded and recorded != "UNSET" and backbone.kernel_checksum() != recorded:
        raise RegistryError(
            f"checksum mismatch for {path}: got {backbone.kernel_checksum()}, "
            f"registry records {recorded}"
        )
    return backbone
