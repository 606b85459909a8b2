"""Stage backends for the detection cascade, plus their weight-file container.

The cascade treats each stage as a pluggable backend behind a tiny contract:
a role, an input size, and a deterministic ``evaluate``. The bundled
TemplateMatchBackend detects a synthetic quadratic "bump" marker; it exists so
the full cascade is exercisable and testable without trained stage networks,
and it round-trips through the same weight container a trained backend would.

Weight container layout (little-endian):
    magic   4 bytes  b"FGSW"
    version u16      currently 1
    role    u8       0=proposal, 1=refine, 2=output
    size    u16      stage input side in pixels
    count   u32      number of layers
    layer   ndim u8, dims u32*ndim, float32 values (row-major)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from forgeguard.imaging import Box, ImageBuffer

ROLES = ("proposal", "refine", "output")
ROLE_INPUT_SIZES = {"proposal": 12, "refine": 24, "output": 48}

_MAGIC = b"FGSW"
_VERSION = 1

# canonical five-point layout as fractions of a face box:
# left eye, right eye, nose, mouth left, mouth right
DEFAULT_LANDMARK_FRACTIONS = (0.30, 0.35, 0.70, 0.35, 0.50, 0.55, 0.35, 0.75, 0.65, 0.75)


class WeightFormatError(ValueError):
    """Malformed or truncated stage weight container."""


class StageRoleError(ValueError):
    """A backend was loaded or used in the wrong cascade role."""


@dataclass(frozen=True)
class StageOutput:
    classifier: float
    bbox_regress: tuple[float, float, float, float]
    landmark_regress: tuple | None = None

    def __post_init__(self):
        if not 0.0 <= self.classifier <= 1.0:
            raise ValueError(f"classifier confidence must lie in [0, 1], got {self.classifier}")
        if self.landmark_regress is not None and len(self.landmark_regress) != 10:
            raise ValueError("landmark_regress must hold five (x, y) pairs")


class StageBackend:
    """Base contract: deterministic patch scoring for one cascade stage."""

    stage_role: str
    input_size: int

    def evaluate_batch(self, patches: np.ndarray):
        """Score a (N, size, size, C) batch.

        Returns (scores (N,), offsets (N, 4), landmarks (N, 10) or None).
        """
        raise NotImplementedError

    def evaluate(self, patch: np.ndarray) -> StageOutput:
        scores, offsets, landmarks = self.evaluate_batch(patch[None])
        return StageOutput(
            classifier=float(scores[0]),
            bbox_regress=tuple(float(v) for v in offsets[0]),
            landmark_regress=tuple(float(v) for v in landmarks[0]) if landmarks is not None else None,
        )


def marker_template(size: int) -> np.ndarray:
    """The quadratic bump 255*(u(1-u) + v(1-v)) sampled at pixel centers.

    Polynomial in each axis, so bilinear resampling reproduces it exactly at
    any scale; peak 127.5 at the center, 0 at the corners.
    """
    c = (np.arange(size) + 0.5) / size
    fx = c * (1 - c)
    return 255.0 * (fx[None, :] + fx[:, None])


def render_marker(image: ImageBuffer, box: Box, tint: tuple = (1.0, 1.0, 1.0)) -> None:
    """Draw a bump marker into ``image`` over the integer region of ``box``.

    ``tint`` scales the marker per channel, letting fixtures carry a class
    signature while staying detectable by the same template.
    """
    x1, y1 = int(round(box.x)), int(round(box.y))
    x2, y2 = int(round(box.x2)), int(round(box.y2))
    x1, x2 = max(0, x1), min(image.width, x2)
    y1, y2 = max(0, y1), min(image.height, y2)
    if x2 <= x1 or y2 <= y1:
        return
    w, h = x2 - x1, y2 - y1
    u = (np.arange(w) + 0.5) / w
    v = (np.arange(h) + 0.5) / h
    bump = 255.0 * ((u * (1 - u))[None, :] + (v * (1 - v))[:, None])
    tint_arr = np.asarray(tint[: image.channels], dtype=np.float32)
    image.pixels[y1:y2, x1:x2] = np.clip(bump[:, :, None] * tint_arr, 0, 255)


class TemplateMatchBackend(StageBackend):
    """Scores a patch by its mean absolute distance to the bump marker.

    score = max(0, 1 - sharpness * mean|gray - template| / 127.5), so an
    exactly framed marker scores ~1 and constant patches score 0 at the
    default sharpness. With ``regress`` enabled the backend fits the patch to
    the separable quadratic a + bx + cx^2 (+ same in y) and emits corner
    offsets that snap the box onto the marker's inferred extent.
    """

    def __init__(
        self,
        stage_role: str,
        sharpness: float = 3.0,
        regress: bool = True,
        landmarks: bool = True,
        landmark_fractions: tuple = DEFAULT_LANDMARK_FRACTIONS,
    ):
        if stage_role not in ROLES:
            raise StageRoleError(f"unknown stage role {stage_role!r}; expected one of {ROLES}")
        self.stage_role = stage_role
        self.input_size = ROLE_INPUT_SIZES[stage_role]
        self.sharpness = float(sharpness)
        self.regress = bool(regress)
        self.emit_landmarks = bool(landmarks) and stage_role == "output"
        # quantize to float32 up front so the weight container round-trips bit-exactly
        self.landmark_fractions = tuple(
            float(v) for v in np.asarray(landmark_fractions, dtype=np.float32)
        )
        self.template = marker_template(self.input_size).astype(np.float32).astype(np.float64)
        # least-squares design for basis [1, x, y, x^2, y^2] at pixel centers
        s = self.input_size
        c = (np.arange(s) + 0.5) / s
        xs = np.tile(c, s)
        ys = np.repeat(c, s)
        self._design = np.stack([np.ones_like(xs), xs, ys, xs**2, ys**2], axis=1)

    def evaluate_batch(self, patches: np.ndarray):
        patches = np.asarray(patches, dtype=np.float64)
        if patches.ndim != 4 or patches.shape[1:3] != (self.input_size, self.input_size):
            raise ValueError(
                f"{self.stage_role} backend expects (N, {self.input_size}, "
                f"{self.input_size}, C) patches, got {patches.shape}"
            )
        gray = patches.mean(axis=3)
        dist = np.abs(gray - self.template).mean(axis=(1, 2))
        scores = np.clip(1.0 - self.sharpness * dist / 127.5, 0.0, 1.0)

        n = len(patches)
        offsets = np.zeros((n, 4))
        if self.regress:
            coeffs = self._masked_quadratic_fit(gray.reshape(n, -1))
            offsets[:, 0::2] = self._axis_offsets(coeffs[:, 1], coeffs[:, 3])
            offsets[:, 1::2] = self._axis_offsets(coeffs[:, 2], coeffs[:, 4])

        landmarks = None
        if self.emit_landmarks:
            landmarks = np.tile(np.asarray(self.landmark_fractions), (n, 1))
        return scores, offsets, landmarks

    def _masked_quadratic_fit(self, gray_flat: np.ndarray) -> np.ndarray:
        """Per-patch weighted least squares on the quadratic basis.

        Background pixels (near zero) are masked out so a window covering
        marker plus surroundings still recovers the marker's own quadratic;
        a second pass drops pixels the first fit cannot explain (marker edge
        blends), which tightens the inferred extent to about a pixel. Patches
        with too few lit pixels get a zero fit, and hence no offsets.
        """

        def solve(weights, values):
            ata = np.einsum("pi,np,pj->nij", self._design, weights, self._design)
            ata += 1e-9 * np.eye(5)
            atg = np.einsum("pi,np->ni", self._design, weights * values)
            return np.linalg.solve(ata, atg[:, :, None])[:, :, 0]

        coeffs = np.zeros((len(gray_flat), 5))
        lit = (gray_flat > 2.0).astype(np.float64)
        enough = lit.sum(axis=1) >= 16
        if not enough.any():
            return coeffs
        w = lit[enough]
        g = gray_flat[enough]
        first = solve(w, g)
        residual = np.abs(g - first @ self._design.T)
        w2 = w * (residual < 8.0)
        again = w2.sum(axis=1) >= 16
        w[again] = w2[again]
        coeffs[enough] = solve(w, g)
        return coeffs

    @staticmethod
    def _axis_offsets(linear: np.ndarray, quadratic: np.ndarray) -> np.ndarray:
        """Recover marker extent along one axis from the fitted quadratic.

        The marker contributes 255*(u - u^2) with u = alpha + beta*x, giving a
        -255*beta^2 x^2 term and a 255*beta(1 - 2*alpha) x term. Returns
        (near_offset, far_offset) per patch, clamped; degenerate fits
        (beta ~ 0, e.g. constant patches) regress nowhere.
        """
        beta = np.sqrt(np.maximum(-quadratic, 0.0) / 255.0)
        safe = beta > 0.05
        alpha = np.zeros_like(beta)
        alpha[safe] = (1.0 - linear[safe] / (255.0 * beta[safe])) / 2.0
        near = np.zeros_like(beta)
        far = np.zeros_like(beta)
        near[safe] = -alpha[safe] / beta[safe]
        far[safe] = (1.0 - alpha[safe]) / beta[safe] - 1.0
        return np.clip(np.stack([near, far], axis=1), -1.5, 1.5)

    # --- weight container round-trip -------------------------------------

    def to_layers(self) -> list[np.ndarray]:
        layers = [
            self.template.astype(np.float32),
            np.array([self.sharpness, 1.0 if self.regress else 0.0], dtype=np.float32),
        ]
        if self.stage_role == "output":
            layers.append(np.asarray(self.landmark_fractions, dtype=np.float32))
        return layers

    @classmethod
    def from_layers(cls, stage_role: str, input_size: int, layers: list[np.ndarray]):
        expected = 3 if stage_role == "output" else 2
        if len(layers) != expected:
            raise WeightFormatError(
                f"{stage_role} backend expects {expected} layers, file holds {len(layers)}"
            )
        if input_size != ROLE_INPUT_SIZES[stage_role]:
            raise WeightFormatError(
                f"input size {input_size} does not match role {stage_role!r} "
                f"({ROLE_INPUT_SIZES[stage_role]})"
            )
        template, params = layers[0], layers[1]
        if template.shape != (input_size, input_size):
            raise WeightFormatError(f"template layer has shape {template.shape}")
        if params.shape != (2,):
            raise WeightFormatError(f"parameter layer has shape {params.shape}")
        kwargs = {}
        if stage_role == "output":
            if layers[2].shape != (10,):
                raise WeightFormatError(f"landmark layer has shape {layers[2].shape}")
            kwargs["landmark_fractions"] = tuple(float(v) for v in layers[2])
        backend = cls(
            stage_role,
            sharpness=float(params[0]),
            regress=bool(params[1] > 0.5),
            **kwargs,
        )
        backend.template = template.astype(np.float64)
        return backend


def save_stage_weights(backend: TemplateMatchBackend, path: str | Path) -> None:
    """Serialize a backend into the sized, versioned binary container."""
    layers = backend.to_layers()
    role_code = ROLES.index(backend.stage_role)
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<HBHI", _VERSION, role_code, backend.input_size, len(layers))
    for layer in layers:
        arr = np.ascontiguousarray(layer, dtype="<f4")
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    Path(path).write_bytes(bytes(blob))


def load_stage_weights(path: str | Path, expected_role: str | None = None) -> TemplateMatchBackend:
    """Load a backend from its weight container.

    Raises WeightFormatError naming the offending field for malformed files
    and StageRoleError when the file's role differs from ``expected_role``.
    """
    data = Path(path).read_bytes()
    view = memoryview(data)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise WeightFormatError(f"truncated container while reading {what} in {path}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != _MAGIC:
        raise WeightFormatError(f"bad magic in {path}; not a stage weight container")
    version, role_code, input_size, layer_count = struct.unpack("<HBHI", take(9, "header"))
    if version != _VERSION:
        raise WeightFormatError(f"unsupported container version {version}")
    if role_code >= len(ROLES):
        raise WeightFormatError(f"unknown role code {role_code}")
    role = ROLES[role_code]
    if expected_role is not None and role != expected_role:
        raise StageRoleError(f"{path} holds a {role!r} backend, expected {expected_role!r}")
    if layer_count > 1024:
        raise WeightFormatError(f"implausible layer count {layer_count}")
    layers = []
    for i in range(layer_count):
        (ndim,) = struct.unpack("<B", take(1, f"layer {i} ndim"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, f"layer {i} dims"))
        count = int(np.prod(dims)) if dims else 1
        raw = take(4 * count, f"layer {i} values")
        layers.append(np.frombuffer(raw, dtype="<f4").reshape(dims).copy())
    if pos != len(view):
        raise WeightFormatError(f"{len(view) - pos} trailing bytes after last layer in {path}")
    return TemplateMatchBackend.from_layers(role, input_size, layers)
