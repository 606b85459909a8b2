import io

import numpy as np
import pytest
from PIL import Image

from forgeguard.cascade import (
    ImageTooSmallError,
    PayloadTooLargeError,
    RemoteServiceConfig,
    RemoteServiceError,
    UnsupportedFormatError,
    detect_format,
    remote_detect,
    validate_upload,
)


def encode(fmt: str, width=100, height=100) -> bytes:
    img = Image.fromarray(np.full((height, width, 3), 120, np.uint8))
    buf = io.BytesIO()
    img.save(buf, format=fmt)
    return buf.getvalue()


CONFIG = RemoteServiceConfig(endpoint="https://faces.example/api", api_key="k")


class SpyTransport:
    def __init__(self, status=200, payload=None):
        self.calls = []
        self.status = status
        self.payload = payload if payload is not None else {"faces": []}

    def __call__(self, url, headers, body, timeout):
        self.calls.append((url, headers, body, timeout))
        return self.status, self.payload


# ---------------------------------------------------------------------------
# validation


def test_oversize_jpeg_rejected():
    blob = encode("JPEG") + b"\x00" * (5 * 2**20)
    with pytest.raises(PayloadTooLargeError):
        validate_upload(blob, "JPEG")


def test_small_png_rejected():
    with pytest.raises(ImageTooSmallError):
        validate_upload(encode("PNG", 40, 40), "PNG")


def test_exactly_50px_rejected():
    # the contract demands strictly more than 50 pixels on each side
    with pytest.raises(ImageTooSmallError):
        validate_upload(encode("PNG", 50, 50), "PNG")
    fmt, w, h = validate_upload(encode("PNG", 51, 51), "PNG")
    assert (fmt, w, h) == ("PNG", 51, 51)


def test_unsupported_format_rejected():
    with pytest.raises(UnsupportedFormatError):
        validate_upload(encode("PNG"), "TIFF")


def test_format_aliases_normalized():
    fmt, _, _ = validate_upload(encode("JPEG"), "jpg")
    assert fmt == "JPEG"


@pytest.mark.parametrize("fmt", ["JPEG", "PNG", "GIF", "BMP"])
def test_all_allowed_formats_pass(fmt):
    got, w, h = validate_upload(encode(fmt), fmt)
    assert got == fmt and (w, h) == (100, 100)


@pytest.mark.parametrize(
    "fmt,magic",
    [("JPEG", b"\xff\xd8\xff"), ("PNG", b"\x89PNG"), ("GIF", b"GIF8"), ("BMP", b"BM")],
)
def test_detect_format_sniffs_magic(fmt, magic):
    blob = encode(fmt)
    assert blob.startswith(magic)
    assert detect_format(blob) == fmt


def test_detect_format_unknown():
    assert detect_format(b"\x00\x01\x02\x03") is None


# ---------------------------------------------------------------------------
# remote_detect


def test_remote_detect_maps_recorded_face():
    transport = SpyTransport(
        payload={
            "faces": [
                {
                    "x": 10,
                    "y": 20,
                    "w": 30,
                    "h": 40,
                    "confidence": 0.97,
                    "landmarks": {
                        "left_eye": [15, 30],
                        "right_eye": [33, 30],
                        "nose": [24, 40],
                        "mouth_left": [18, 52],
                        "mouth_right": [30, 52],
                    },
                }
            ]
        }
    )
    dets = remote_detect(encode("BMP"), "BMP", CONFIG, transport=transport)
    assert len(dets) == 1
    d = dets[0]
    assert (d.box.x, d.box.y, d.box.w, d.box.h) == (10, 20, 30, 40)
    assert d.confidence == 0.97
    assert d.landmarks.nose == (24, 40)
    assert len(transport.calls) == 1
    url, headers, body, timeout = transport.calls[0]
    assert url == CONFIG.endpoint
    assert headers["X-Api-Key"] == "k"
    assert body["format"] == "BMP"


def test_remote_detect_zero_network_on_validation_failure():
    transport = SpyTransport()
    oversized = encode("JPEG") + b"\x00" * (5 * 2**20)
    with pytest.raises(PayloadTooLargeError):
        remote_detect(oversized, "JPEG", CONFIG, transport=transport)
    with pytest.raises(ImageTooSmallError):
        remote_detect(encode("PNG", 40, 40), "PNG", CONFIG, transport=transport)
    with pytest.raises(UnsupportedFormatError):
        remote_detect(encode("PNG"), "webp", CONFIG, transport=transport)
    assert transport.calls == []


def test_remote_detect_http_error_carries_status():
    transport = SpyTransport(status=503)
    with pytest.raises(RemoteServiceError) as exc_info:
        remote_detect(encode("PNG"), "PNG", CONFIG, transport=transport)
    assert exc_info.value.status == 503


def test_remote_detect_transport_exception_wrapped():
    def broken(url, headers, body, timeout):
        raise ConnectionError("network unreachable")

    with pytest.raises(RemoteServiceError, match="transport failure"):
        remote_detect(encode("PNG"), "PNG", CONFIG, transport=broken)


def test_remote_detect_malformed_response():
    transport = SpyTransport(payload={"unexpected": 1})
    with pytest.raises(RemoteServiceError, match="faces"):
        remote_detect(encode("PNG"), "PNG", CONFIG, transport=transport)
