"""Frozen-backbone classifiers: a trainable dense head on top of fixed features."""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from forgeguard.imaging import ImageBuffer
from forgeguard.model_zoo.activations import sigmoid, softmax
from forgeguard.model_zoo.backbones import Backbone, BackboneSpec, load_backbone

DEFAULT_CLASS_NAMES = {
    2: ("real", "fake"),
    3: ("real", "fake", "plastic"),
}

DEFAULT_DROPOUT = 0.4


@dataclass(frozen=True)
class ParamCount:
    trainable: int
    non_trainable: int

    @property
    def total(self) -> int:
        return self.trainable + self.non_trainable


@dataclass
class ClassifierModel:
    """Frozen backbone plus a dense head (feature_width -> num_classes).

    The head output activation is softmax for three or more classes and
    sigmoid (normalized for reporting) for binary heads.
    """

    backbone: Backbone
    class_names: tuple[str, ...]
    head_w: np.ndarray = field(repr=False)  # (feature_width, K) float64
    head_b: np.ndarray = field(repr=False)  # (K,) float64
    dropout_rate: float = DEFAULT_DROPOUT
    activation: str = "softmax"

    def __post_init__(self):
        k = len(self.class_names)
        f = self.backbone.spec.feature_width
        if self.head_w.shape != (f, k) or self.head_b.shape != (k,):
            raise ValueError(
                f"head shapes {self.head_w.shape}/{self.head_b.shape} do not match "
                f"feature width {f} and {k} classes"
            )
        if self.activation not in ("softmax", "sigmoid"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def input_size(self) -> int:
        return self.backbone.spec.input_size

    def logits(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.head_w + self.head_b

    def probabilities(self, features: np.ndarray) -> np.ndarray:
        """Class probabilities per row; sigmoid heads are normalized to sum 1."""
        z = self.logits(features)
        if self.activation == "softmax":
            return softmax(z)
        s = sigmoid(z)
        return s / s.sum(axis=-1, keepdims=True)

    def classify(self, image: ImageBuffer) -> tuple[str, np.ndarray]:
        """Predict one image: (argmax label, probability vector)."""
        feats = self.backbone.extract_one(image)[None, :]
        probs = self.probabilities(feats)[0]
        return self.class_names[int(np.argmax(probs))], probs

    def metadata(self) -> dict:
        return {
            "variant": self.backbone.spec.variant,
            "num_classes": self.num_classes,
            "class_names": list(self.class_names),
            "input_size": self.input_size,
            "preprocessing": _jsonable(self.backbone.spec.preprocessing_dict()),
            "head_params": int(self.head_w.size + self.head_b.size),
        }


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    return value


def default_class_names(num_classes: int) -> tuple[str, ...]:
    if num_classes in DEFAULT_CLASS_NAMES:
        return DEFAULT_CLASS_NAMES[num_classes]
    return tuple(f"class_{i}" for i in range(num_classes))


def assemble_classifier(
    backbone: Backbone,
    num_classes: int,
    class_names: tuple[str, ...] | None = None,
    dropout_rate: float = DEFAULT_DROPOUT,
) -> ClassifierModel:
    """Attach a zero-initialized dense head to an already-built backbone."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    names = tuple(class_names) if class_names else default_class_names(num_classes)
    if len(names) != num_classes:
        raise ValueError(f"{len(names)} class names for {num_classes} classes")
    f = backbone.spec.feature_width
    return ClassifierModel(
        backbone=backbone,
        class_names=names,
        head_w=np.zeros((f, num_classes), dtype=np.float64),
        head_b=np.zeros(num_classes, dtype=np.float64),
        dropout_rate=dropout_rate,
        activation="softmax" if num_classes >= 3 else "sigmoid",
    )


def build_classifier(
    variant: str,
    num_classes: int,
    class_names: tuple[str, ...] | None = None,
    dropout_rate: float = DEFAULT_DROPOUT,
    backbone: Backbone | None = None,
    cache: str | None = None,
) -> ClassifierModel:
    """Build one of the reference variants; ``backbone`` overrides the registry."""
    if backbone is None:
        backbone = load_backbone(variant, cache)
    return assemble_classifier(backbone, num_classes, class_names, dropout_rate)


def count_params(model: ClassifierModel) -> ParamCount:
    """Exact accounting: the dense head is trainable, the backbone is frozen.

    The non-trainable figure is the reference architecture count declared by
    the backbone spec.
    """
    return ParamCount(
        trainable=int(model.head_w.size + model.head_b.size),
        non_trainable=int(model.backbone.spec.params),
    )


def _checkpoint_paths(path: str | Path) -> tuple[Path, Path]:
    base = Path(path)
    if base.suffix in (".npz", ".json"):
        base = base.with_suffix("")
    return base.with_suffix(".npz"), base.with_suffix(".json")


def save_checkpoint(model: ClassifierModel, path: str | Path) -> Path:
    """Write ``<path>.npz`` (weights) and the normative ``<path>.json`` sidecar."""
    npz_path, json_path = _checkpoint_paths(path)
    npz_path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        npz_path,
        head_w=model.head_w,
        head_b=model.head_b,
        backbone_kernel=model.backbone.kernel,
        backbone_pool_grid=model.backbone.pool_grid,
        backbone_params=model.backbone.spec.params,
        dropout_rate=model.dropout_rate,
    )
    sidecar = dict(model.metadata())
    sidecar["created"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    json_path.write_text(json.dumps(sidecar, indent=2))
    return npz_path


def load_checkpoint(path: str | Path) -> ClassifierModel:
    npz_path, json_path = _checkpoint_paths(path)
    if not npz_path.exists() or not json_path.exists():
        raise FileNotFoundError(f"checkpoint {npz_path} / {json_path} not found")
    meta = json.loads(json_path.read_text())
    with np.load(npz_path) as data:
        pre = meta["preprocessing"]
        spec = BackboneSpec(
            variant=meta["variant"],
            input_size=int(meta["input_size"]),
            feature_width=int(data["head_w"].shape[0]),
            params=int(data["backbone_params"]),
            preprocessing=(
                ("scale", pre["scale"]),
                ("mean", tuple(pre["mean"])),
                ("std", tuple(pre["std"])),
            ),
        )
        backbone = Backbone(spec, data["backbone_kernel"], int(data["backbone_pool_grid"]))
        return ClassifierModel(
            backbone=backbone,
            class_names=tuple(meta["class_names"]),
            head_w=data["head_w"].astype(np.float64),
            head_b=data["head_b"].astype(np.float64),
            dropout_rate=float(data["dropout_rate"]),
            activation="softmax" if len(meta["class_names"]) >= 3 else "sigmoid",
        )
