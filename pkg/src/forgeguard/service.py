"""HTTP inference service: validate an upload, find the face, classify it.

POST /api/detect (multipart field "image") -> DetectResponse JSON
GET  /api/health                          -> {"status": "ok", "model_loaded": bool}
GET  /api/model                           -> checkpoint metadata sidecar
Static webapp bundle served at "/" when a directory is configured.

Status codes: 200 success (including face_found=false), 400 bad or too-small
image, 413 payload too large, 415 unsupported format, 503 model not ready.
"""

from __future__ import annotations

import base64
import datetime
import io
import json
import logging
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from forgeguard.cascade.remote import (
    BadImageError,
    ImageTooSmallError,
    PayloadTooLargeError,
    UnsupportedFormatError,
    UploadValidationError,
    detect_format,
    validate_upload,
)
from forgeguard.dataset import CodecError, decode_image_bytes
from forgeguard.imaging import ImageBuffer, crop, expand_margin, resample, round_half_away
from forgeguard.model_zoo.classifier import ClassifierModel

NO_FACE_MESSAGE = "No face found in the uploaded image."
CROP_MARGIN = 0.30
THUMBNAIL_MAX_SIDE = 256

logger = logging.getLogger(__name__)


def _thumbnail_b64(image: ImageBuffer, max_side: int = THUMBNAIL_MAX_SIDE) -> str:
    scale = min(1.0, max_side / max(image.width, image.height))
    if scale < 1.0:
        image = resample(
            image,
            max(1, int(image.width * scale)),
            max(1, int(image.height * scale)),
        )
    arr = np.clip(round_half_away(image.pixels), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _box_dict(box) -> dict:
    return {"x": box.x, "y": box.y, "w": box.w, "h": box.h}


def handle_detect(
    image_bytes: bytes,
    declared_format: str | None,
    model: ClassifierModel,
    detector,
) -> dict:
    """Validate, detect, crop and classify one upload.

    Returns the response document; raises UploadValidationError subclasses for
    contract violations (callers map them to status codes). The detector runs
    only after every local validation has passed. When several faces are
    found, the highest-confidence one is classified and the rest are still
    listed under "detections".
    """
    fmt = detect_format(image_bytes) or declared_format
    validate_upload(image_bytes, fmt)
    try:
        image = decode_image_bytes(image_bytes)
    except CodecError as exc:
        raise BadImageError(str(exc)) from exc

    detections = sorted(detector(image), key=lambda d: -d.confidence)
    if not detections:
        return {"face_found": False, "message": NO_FACE_MESSAGE}

    top = detections[0]
    region = expand_margin(top.box, CROP_MARGIN, (image.width, image.height))
    face = crop(image, region)
    face = resample(face, model.input_size, model.input_size)
    verdict, probs = model.classify(face)

    response = {
        "face_found": True,
        "verdict": verdict,
        "probabilities": {
            name: float(p) for name, p in zip(model.class_names, probs)
        },
        "box": _box_dict(top.box),
        "crop_thumbnail": _thumbnail_b64(face),
        "detections": [
            {"box": _box_dict(d.box), "confidence": d.confidence} for d in detections
        ],
    }
    if top.landmarks is not None:
        response["landmarks"] = {
            name: list(pt) for name, pt in top.landmarks.as_dict().items()
        }
    return response


def handle_health(model: ClassifierModel | None) -> dict:
    return {"status": "ok", "model_loaded": model is not None}


def handle_model_info(model: ClassifierModel | None) -> dict:
    if model is None:
        raise RuntimeError("no model loaded")
    return model.metadata()


_log_lock = threading.Lock()


def append_detection_log(response: dict, log_path: str | Path) -> None:
    """Append one JSON line per request: timestamp, face_found, verdict and
    probabilities. Never persists image bytes; write failures are logged and
    swallowed so the request itself still succeeds."""
    entry = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "face_found": response.get("face_found", False),
    }
    if response.get("verdict") is not None:
        entry["verdict"] = response["verdict"]
    if response.get("probabilities") is not None:
        entry["probabilities"] = response["probabilities"]
    try:
        line = json.dumps(entry) + "\n"
        with _log_lock:
            with open(log_path, "a") as fh:
                fh.write(line)
    except OSError as exc:
        logger.warning("could not append detection log %s: %s", log_path, exc)


_STATUS_BY_ERROR = {
    UnsupportedFormatError: 415,
    PayloadTooLargeError: 413,
    ImageTooSmallError: 400,
    BadImageError: 400,
}


def create_app(
    model: ClassifierModel | None,
    detector,
    log_path: str | Path | None = None,
    webapp_dir: str | Path | None = None,
):
    """Assemble the FastAPI application around a loaded model and detector."""
    app = FastAPI(title="forgeguard", docs_url=None, redoc_url=None)

    @app.post("/api/detect")
    async def api_detect(image: UploadFile = File(...)):
        if model is None:
            return JSONResponse({"error": "model-not-ready"}, status_code=503)
        payload = await image.read()
        declared = (image.filename or "").rsplit(".", 1)[-1] if image.filename else None
        try:
            response = handle_detect(payload, declared, model, detector)
        except UploadValidationError as exc:
            status = _STATUS_BY_ERROR.get(type(exc), 400)
            return JSONResponse(
                {"error": exc.error_code, "message": str(exc)}, status_code=status
            )
        except Exception:
            logger.exception("detection failed")
            return JSONResponse({"error": "internal"}, status_code=500)
        if log_path is not None:
            append_detection_log(response, log_path)
        return JSONResponse(response)

    @app.get("/api/health")
    def api_health():
        return handle_health(model)

    @app.get("/api/model")
    def api_model():
        if model is None:
            return JSONResponse({"error": "model-not-ready"}, status_code=503)
        return handle_model_info(model)

    if webapp_dir is not None and Path(webapp_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(webapp_dir), html=True), name="webapp")

    return app
