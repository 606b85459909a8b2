"""Head training on frozen-backbone features: Adam, early stopping on
validation loss, per-epoch metric records, history CSV and curve plots.

The backbone never changes during training, so features are extracted once
per split and every epoch shuffles and rebatches the cached feature matrix.
Epoch metrics are full-split recomputations (no running averages), which keeps
the records directly comparable to tabular reports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from forgeguard.dataset import CodecError, DatasetManifest, load_image
from forgeguard.model_zoo.activations import sigmoid, softmax
from forgeguard.model_zoo.classifier import ClassifierModel, save_checkpoint


class ManifestLabelError(ValueError):
    """A manifest label is not among the model's class names."""


class ConfigurationError(ValueError):
    """The manifest or config cannot support a training run."""


class EvaluationError(RuntimeError):
    """A file in the evaluated split could not be read."""


class HistoryParseError(ValueError):
    """A history CSV violates its schema."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    patience: int = 10
    min_delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1 or self.min_delta < 0:
            raise ValueError("patience must be >= 1 and min_delta >= 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float

    def __post_init__(self):
        values = (self.train_loss, self.train_acc, self.val_loss, self.val_acc)
        if not all(np.isfinite(v) for v in values):
            raise ValueError(f"epoch {self.epoch} has non-finite metrics: {values}")


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = 0


class EarlyStopping:
    """Stop when the monitored loss fails to improve by min_delta for
    ``patience`` consecutive epochs; remembers the best epoch seen."""

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if value < self.best - self.min_delta:
            self.best = value
            self.best_epoch = epoch
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.patience


class Adam:
    """Adaptive moment estimation over a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], config: TrainConfig):
        self.params = params
        self.lr = config.learning_rate
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.epsilon = config.epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m += (1 - self.beta1) * (g - m)
            v += (1 - self.beta2) * (g * g - v)
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def head_loss_and_grads(w, b, features, targets, activation="softmax"):
    """Cross-entropy loss of the dense head plus analytic gradients.

    ``targets`` is one-hot (N, K). Softmax heads use categorical
    cross-entropy; sigmoid heads use per-unit binary cross-entropy summed over
    units. Both yield d_logits = (prediction - target) / N.
    """
    z = features @ w + b
    n = len(features)
    if activation == "softmax":
        p = softmax(z)
        loss = -np.sum(targets * np.log(np.clip(p, 1e-12, None))) / n
    else:
        p = sigmoid(z)
        loss = (
            -np.sum(
                targets * np.log(np.clip(p, 1e-12, None))
                + (1 - targets) * np.log(np.clip(1 - p, 1e-12, None))
            )
            / n
        )
    d_logits = (p - targets) / n
    grad_w = features.T @ d_logits
    grad_b = d_logits.sum(axis=0)
    return float(loss), grad_w, grad_b


def _split_features(model: ClassifierModel, manifest: DatasetManifest, split: str, root):
    entries = manifest.subset(split)
    if not entries:
        raise ConfigurationError(f"manifest has no entries in the {split!r} split")
    label_index = {name: i for i, name in enumerate(model.class_names)}
    for e in entries:
        if e.label not in label_index:
            raise ManifestLabelError(
                f"label {e.label!r} of {e.path} is not among model classes "
                f"{model.class_names}"
            )
    root = Path(root)
    images = []
    for e in entries:
        try:
            images.append(load_image(root / e.path))
        except CodecError as exc:
            raise EvaluationError(str(exc)) from exc
    features = model.backbone.extract(images)
    labels = np.array([label_index[e.label] for e in entries], dtype=np.int64)
    return features, labels, entries


def _metrics(model, features, labels):
    targets = np.eye(model.num_classes)[labels]
    loss, _, _ = head_loss_and_grads(
        model.head_w, model.head_b, features, targets, model.activation
    )
    predicted = np.argmax(model.probabilities(features), axis=1)
    return loss, float(np.mean(predicted == labels))


def train(
    model: ClassifierModel,
    manifest: DatasetManifest,
    config: TrainConfig,
    root: str | Path = ".",
    checkpoint_path: str | Path | None = None,
) -> tuple[TrainingHistory, Path | None]:
    """Train the head on the manifest's train split, validating each epoch.

    Only head parameters move; the backbone stays frozen. Training stops when
    the epoch budget is exhausted or validation loss plateaus per the early
    stopping config. The model is left holding the best-epoch head weights,
    which are also written to ``checkpoint_path`` when given.
    """
    x_train, y_train, _ = _split_features(model, manifest, "train", root)
    x_val, y_val, _ = _split_features(model, manifest, "validation", root)
    eye = np.eye(model.num_classes)

    rng = np.random.default_rng(config.seed)
    optimizer = Adam([model.head_w, model.head_b], config)
    stopper = EarlyStopping(config.patience, config.min_delta)
    best_weights = (model.head_w.copy(), model.head_b.copy())
    history = TrainingHistory()

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            xb = x_train[batch]
            if model.dropout_rate > 0:
                mask = rng.random(xb.shape) >= model.dropout_rate
                xb = xb * mask / (1.0 - model.dropout_rate)
            _, grad_w, grad_b = head_loss_and_grads(
                model.head_w, model.head_b, xb, eye[y_train[batch]], model.activation
            )
            optimizer.step([grad_w, grad_b])

        train_loss, train_acc = _metrics(model, x_train, y_train)
        val_loss, val_acc = _metrics(model, x_val, y_val)
        history.records.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))

        should_stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_weights = (model.head_w.copy(), model.head_b.copy())
        if should_stop:
            history.stopped_early = True
            break

    history.best_epoch = stopper.best_epoch
    model.head_w, model.head_b = best_weights
    if checkpoint_path is not None:
        return history, save_checkpoint(model, checkpoint_path)
    return history, None


def evaluate_split(
    model: ClassifierModel,
    manifest: DatasetManifest,
    split: str,
    root: str | Path = ".",
):
    """Deterministic forward pass over one split in manifest order.

    Returns (loss, accuracy, predictions) where predictions is a list of
    (true_label, predicted_label, probability_vector).
    """
    features, labels, entries = _split_features(model, manifest, split, root)
    loss, accuracy = _metrics(model, features, labels)
    probs = model.probabilities(features)
    predicted = np.argmax(probs, axis=1)
    predictions = [
        (entries[i].label, model.class_names[predicted[i]], probs[i])
        for i in range(len(entries))
    ]
    return loss, accuracy, predictions


# ---------------------------------------------------------------------------
# history CSV and curves

_HISTORY_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]


def write_history(history: TrainingHistory, path: str | Path) -> None:
    """CSV with six significant digits per metric."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HISTORY_HEADER)
        for r in history.records:
            writer.writerow(
                [r.epoch]
                + [f"{v:.6g}" for v in (r.train_loss, r.train_acc, r.val_loss, r.val_acc)]
            )


def read_history(path: str | Path) -> TrainingHistory:
    """Parse a history CSV; epochs must be contiguous from 1.

    ``best_epoch`` is reconstructed as the earliest validation-loss minimum;
    the early-stop flag is not represented in the CSV and reads back False.
    """
    records = []
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _HISTORY_HEADER:
            raise HistoryParseError(f"{path}:1: expected header {','.join(_HISTORY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise HistoryParseError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            try:
                record = EpochRecord(
                    epoch=int(row[0]),
                    train_loss=float(row[1]),
                    train_acc=float(row[2]),
                    val_loss=float(row[3]),
                    val_acc=float(row[4]),
                )
            except ValueError as exc:
                raise HistoryParseError(f"{path}:{lineno}: {exc}") from exc
            if record.epoch != len(records) + 1:
                raise HistoryParseError(
                    f"{path}:{lineno}: epoch {record.epoch} breaks the contiguous "
                    f"sequence (expected {len(records) + 1})"
                )
            records.append(record)
    best_epoch = 0
    if records:
        best_epoch = min(records, key=lambda r: (r.val_loss, r.epoch)).epoch
    return TrainingHistory(records=records, stopped_early=False, best_epoch=best_epoch)


def emit_curves(history: TrainingHistory, out_path: str | Path) -> Path:
    """Two-panel PNG: loss vs epoch and accuracy vs epoch, train and validation."""
    if not history.records:
        raise ValueError("cannot plot an empty history")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [r.epoch for r in history.records]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(11, 4.5))
    ax_loss.plot(epochs, [r.train_loss for r in history.records], marker="o", label="train loss")
    ax_loss.plot(epochs, [r.val_loss for r in history.records], marker="s", label="val loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.set_title("Loss")
    ax_loss.legend()
    ax_acc.plot(epochs, [r.train_acc for r in history.records], marker="o", label="train acc")
    ax_acc.plot(epochs, [r.val_acc for r in history.records], marker="s", label="val acc")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_title("Accuracy")
    ax_acc.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
