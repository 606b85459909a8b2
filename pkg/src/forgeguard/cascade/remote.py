"""Client for a remote face-detection service, enforcing its upload contract.

Uploads must be JPEG, PNG, GIF or BMP, at most 4 MiB, and strictly larger
than 50x50 pixels. All three checks run locally before any network call; an
injectable transport keeps tests on recorded responses.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass

from PIL import Image

from forgeguard.cascade.detector import FaceDetection
from forgeguard.imaging import Box, Landmarks

ALLOWED_FORMATS = frozenset({"JPEG", "PNG", "GIF", "BMP"})
MAX_UPLOAD_BYTES = 4 * 2**20
MIN_UPLOAD_DIM = 50

_FORMAT_ALIASES = {
    "JPG": "JPEG",
    "JPEG": "JPEG",
    "PNG": "PNG",
    "GIF": "GIF",
    "BMP": "BMP",
}

_MAGIC_PREFIXES = (
    (b"\xff\xd8\xff", "JPEG"),
    (b"\x89PNG\r\n\x1a\n", "PNG"),
    (b"GIF87a", "GIF"),
    (b"GIF89a", "GIF"),
    (b"BM", "BMP"),
)


class UploadValidationError(ValueError):
    """Base class for local upload-contract violations."""

    error_code = "invalid-upload"


class UnsupportedFormatError(UploadValidationError):
    error_code = "unsupported-format"


class PayloadTooLargeError(UploadValidationError):
    error_code = "payload-too-large"


class ImageTooSmallError(UploadValidationError):
    error_code = "image-too-small"


class BadImageError(UploadValidationError):
    error_code = "bad-image"


class RemoteServiceError(RuntimeError):
    """Transport or HTTP failure talking to the remote service."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class RemoteServiceConfig:
    endpoint: str
    api_key: str = ""
    timeout: float = 10.0
    allowed_formats: frozenset = ALLOWED_FORMATS
    max_bytes: int = MAX_UPLOAD_BYTES
    min_dim: int = MIN_UPLOAD_DIM


def detect_format(image_bytes: bytes) -> str | None:
    """Sniff the codec from magic bytes; None when unrecognized."""
    for prefix, name in _MAGIC_PREFIXES:
        if image_bytes.startswith(prefix):
            return name
    return None


def normalize_format(name: str | None) -> str | None:
    if not name:
        return None
    return _FORMAT_ALIASES.get(name.strip().upper().lstrip("."), name.strip().upper())


def validate_upload(
    image_bytes: bytes,
    declared_format: str | None,
    allowed_formats: frozenset = ALLOWED_FORMATS,
    max_bytes: int = MAX_UPLOAD_BYTES,
    min_dim: int = MIN_UPLOAD_DIM,
) -> tuple[str, int, int]:
    """Check format membership, byte budget and minimum decoded dimensions.

    Returns (format, width, height); raises a specific UploadValidationError
    otherwise. Dimensions must strictly exceed ``min_dim`` on both sides.
    """
    fmt = normalize_format(declared_format)
    if fmt is None or fmt not in allowed_formats:
        raise UnsupportedFormatError(
            f"format {declared_format!r} is not one of {sorted(allowed_formats)}"
        )
    if len(image_bytes) > max_bytes:
        raise PayloadTooLargeError(
            f"payload is {len(image_bytes)} bytes; limit is {max_bytes}"
        )
    try:
        with Image.open(io.BytesIO(image_bytes)) as img:
            width, height = img.size
    except Exception as exc:
        raise BadImageError(f"cannot decode image: {exc}") from exc
    if width <= min_dim or height <= min_dim:
        raise ImageTooSmallError(
            f"image is {width}x{height}; both sides must exceed {min_dim} pixels"
        )
    return fmt, width, height


def _requests_transport(url, headers, json_body, timeout):
    import requests

    resp = requests.post(url, headers=headers, json=json_body, timeout=timeout)
    try:
        body = resp.json()
    except ValueError:
        body = None
    return resp.status_code, body


def _parse_face(entry: dict) -> FaceDetection:
    box = Box(float(entry["x"]), float(entry["y"]), float(entry["w"]), float(entry["h"]))
    landmarks = None
    lm = entry.get("landmarks")
    if lm:
        landmarks = Landmarks(
            tuple(lm["left_eye"]),
            tuple(lm["right_eye"]),
            tuple(lm["nose"]),
            tuple(lm["mouth_left"]),
            tuple(lm["mouth_right"]),
        )
    return FaceDetection(
        box=box,
        confidence=float(entry.get("confidence", 1.0)),
        landmarks=landmarks,
    )


def remote_detect(
    image_bytes: bytes,
    image_format: str,
    config: RemoteServiceConfig,
    transport=None,
) -> list[FaceDetection]:
    """Validate the upload locally, then ask the remote endpoint for faces.

    The endpoint contract is one JSON POST carrying the base64 payload and an
    API-key header; the response is {"faces": [{x, y, w, h, confidence,
    landmarks?}]}. Every local validation failure raises before any network
    traffic; transport and HTTP failures raise RemoteServiceError with the
    status when one exists.
    """
    fmt, _, _ = validate_upload(
        image_bytes,
        image_format,
        allowed_formats=config.allowed_formats,
        max_bytes=config.max_bytes,
        min_dim=config.min_dim,
    )
    send = transport or _requests_transport
    body = {
        "image": base64.b64encode(image_bytes).decode("ascii"),
        "format": fmt,
    }
    headers = {"X-Api-Key": config.api_key}
    try:
        status, payload = send(config.endpoint, headers, body, config.timeout)
    except RemoteServiceError:
        raise
    except Exception as exc:
        raise RemoteServiceError(f"transport failure: {exc}") from exc
    if not 200 <= status < 300:
        raise RemoteServiceError(f"remote service returned HTTP {status}", status=status)
    if not isinstance(payload, dict) or "faces" not in payload:
        raise RemoteServiceError("remote response missing 'faces' field", status=status)
    return [_parse_face(face) for face in payload["faces"]]
