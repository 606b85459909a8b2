from forgeguard.cascade.backends import (
    ROLE_INPUT_SIZES,
    StageBackend,
    StageOutput,
    StageRoleError,
    TemplateMatchBackend,
    WeightFormatError,
    load_stage_weights,
    marker_template,
    render_marker,
    save_stage_weights,
)
from forgeguard.cascade.detector import (
    DetectionBackendError,
    FaceDetection,
    apply_box_regression,
    decode_landmarks,
    detect_faces,
)
from forgeguard.cascade.remote import (
    ImageTooSmallError,
    PayloadTooLargeError,
    RemoteServiceConfig,
    RemoteServiceError,
    UnsupportedFormatError,
    UploadValidationError,
    detect_format,
    remote_detect,
    validate_upload,
)

__all__ = [
    "ROLE_INPUT_SIZES",
    "StageBackend",
    "StageOutput",
    "StageRoleError",
    "TemplateMatchBackend",
    "WeightFormatError",
    "load_stage_weights",
    "marker_template",
    "render_marker",
    "save_stage_weights",
    "DetectionBackendError",
    "FaceDetection",
    "apply_box_regression",
    "decode_landmarks",
    "detect_faces",
    "ImageTooSmallError",
    "PayloadTooLargeError",
    "RemoteServiceConfig",
    "RemoteServiceError",
    "UnsupportedFormatError",
    "UploadValidationError",
    "detect_format",
    "remote_detect",
    "validate_upload",
]
