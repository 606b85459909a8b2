from pathlib import Path

import numpy as np
import pytest

from forgeguard.dataset import DatasetManifest, ManifestEntry
from forgeguard.model_zoo import BackboneSpec, assemble_classifier, seeded_backbone
from forgeguard.training import (
    Adam,
    ConfigurationError,
    EarlyStopping,
    EpochRecord,
    EvaluationError,
    HistoryParseError,
    ManifestLabelError,
    TrainConfig,
    TrainingHistory,
    emit_curves,
    evaluate_split,
    head_loss_and_grads,
    read_history,
    train,
    write_history,
)

DATA_DIR = Path(__file__).parent / "data"


def model_3class(feature_width=16):
    backbone = seeded_backbone(BackboneSpec("stub-16", 16, feature_width, params=10))
    return assemble_classifier(backbone, 3)


# ---------------------------------------------------------------------------
# gradients


@pytest.mark.parametrize("activation", ["softmax", "sigmoid"])
def test_head_gradient_matches_central_differences(activation):
    rng = np.random.default_rng(11)
    f, k = 16, 3
    w = rng.normal(size=(f, k))
    b = rng.normal(size=k)
    x = rng.normal(size=(1, f))
    y = np.eye(k)[[1]]
    _, grad_w, grad_b = head_loss_and_grads(w, b, x, y, activation)

    h = 1e-5

    def loss_at(w_, b_):
        return head_loss_and_grads(w_, b_, x, y, activation)[0]

    for idx in [(0, 0), (5, 1), (15, 2), (8, 0)]:
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        numeric = (loss_at(wp, b) - loss_at(wm, b)) / (2 * h)
        assert abs(grad_w[idx] - numeric) / max(abs(numeric), 1e-8) < 1e-4
    for j in range(k):
        bp, bm = b.copy(), b.copy()
        bp[j] += h
        bm[j] -= h
        numeric = (loss_at(w, bp) - loss_at(w, bm)) / (2 * h)
        assert abs(grad_b[j] - numeric) / max(abs(numeric), 1e-8) < 1e-4


def test_adam_moves_parameters_toward_gradient():
    w = np.array([1.0, -1.0])
    opt = Adam([w], TrainConfig(learning_rate=0.1))
    opt.step([np.array([1.0, -1.0])])
    assert w[0] < 1.0 and w[1] > -1.0


# ---------------------------------------------------------------------------
# early stopping


def test_early_stopping_scripted_plateau():
    # improves through epoch 3, then plateaus; patience 2 stops after epoch 5
    stopper = EarlyStopping(patience=2, min_delta=0.0)
    schedule = [0.5, 0.4, 0.3, 0.3, 0.3, 0.3]
    stops = [stopper.update(e, v) for e, v in enumerate(schedule, start=1)]
    assert stops == [False, False, False, False, True, True]
    assert stopper.best_epoch == 3


def test_early_stopping_min_delta():
    stopper = EarlyStopping(patience=1, min_delta=0.05)
    assert not stopper.update(1, 1.0)
    assert stopper.update(2, 0.97)  # improved, but by less than min_delta


# ---------------------------------------------------------------------------
# train


def test_separable_dataset_reaches_high_accuracy(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    history, _ = train(tiny_model, manifest, TrainConfig(epochs=5, seed=0), root=root)
    assert history.records[-1].val_acc >= 0.95
    assert len(history.records) <= 5
    for r in history.records:
        assert r.train_loss >= 0 and r.val_loss >= 0
        assert 0 <= r.train_acc <= 1 and 0 <= r.val_acc <= 1


def test_training_is_bitwise_deterministic(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    config = TrainConfig(epochs=3, seed=42)
    h1, _ = train(tiny_model, manifest, config, root=root)

    backbone = seeded_backbone(BackboneSpec("stub-32", 32, 64, params=1000))
    model2 = assemble_classifier(backbone, 2)
    h2, _ = train(model2, manifest, config, root=root)
    assert h1.records == h2.records
    assert h1.best_epoch == h2.best_epoch


def test_backbone_bitwise_frozen(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    before = tiny_model.backbone.kernel.tobytes()
    train(tiny_model, manifest, TrainConfig(epochs=2, seed=0), root=root)
    assert tiny_model.backbone.kernel.tobytes() == before


def test_single_epoch_single_record(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    history, _ = train(tiny_model, manifest, TrainConfig(epochs=1, seed=0), root=root)
    assert len(history.records) == 1
    assert history.records[0].epoch == 1


def test_early_stop_fires_in_training(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    # min_delta so large no epoch can qualify as an improvement after the first
    config = TrainConfig(epochs=50, patience=2, min_delta=1.0, seed=0)
    history, _ = train(tiny_model, manifest, config, root=root)
    assert history.stopped_early
    assert len(history.records) == 1 + config.patience
    assert history.best_epoch == 1


def test_best_epoch_minimizes_val_loss(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    history, _ = train(tiny_model, manifest, TrainConfig(epochs=4, seed=0), root=root)
    losses = {r.epoch: r.val_loss for r in history.records}
    assert losses[history.best_epoch] == min(losses.values())


def test_label_outside_class_names_fails_before_training(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    bad = DatasetManifest(
        entries=manifest.entries[:10]
        + [ManifestEntry("nonexistent.png", "plastic", "train")]
    )
    with pytest.raises(ManifestLabelError, match="plastic"):
        train(tiny_model, bad, TrainConfig(epochs=1), root=root)


def test_empty_split_is_configuration_error(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    train_only = DatasetManifest(entries=manifest.subset("train"))
    with pytest.raises(ConfigurationError, match="validation"):
        train(tiny_model, train_only, TrainConfig(epochs=1), root=root)


def test_train_writes_checkpoint(separable_dataset, tiny_model, tmp_path):
    root, manifest = separable_dataset
    _, ckpt = train(
        tiny_model,
        manifest,
        TrainConfig(epochs=2, seed=0),
        root=root,
        checkpoint_path=tmp_path / "model",
    )
    assert ckpt is not None and ckpt.exists()
    assert (tmp_path / "model.json").exists()


# ---------------------------------------------------------------------------
# evaluate_split


def test_evaluate_uniform_model_predicts_first_class(separable_dataset):
    root, manifest = separable_dataset
    backbone = seeded_backbone(BackboneSpec("stub-32", 32, 64, params=1000))
    model = assemble_classifier(backbone, 2)  # zero head: uniform probabilities
    loss, acc, predictions = evaluate_split(model, manifest, "test", root=root)
    test_entries = manifest.subset("test")
    assert len(predictions) == len(test_entries)
    assert all(p[1] == "real" for p in predictions)  # argmax tie-break: first class
    prior = sum(1 for e in test_entries if e.label == "real") / len(test_entries)
    assert acc == pytest.approx(prior)


def test_evaluate_trained_model_near_perfect(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    train(tiny_model, manifest, TrainConfig(epochs=5, learning_rate=0.05, seed=0), root=root)
    loss, acc, predictions = evaluate_split(tiny_model, manifest, "test", root=root)
    assert acc == 1.0
    assert loss < 0.05
    for true, predicted, probs in predictions:
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_evaluate_missing_file_names_path(separable_dataset, tiny_model):
    root, manifest = separable_dataset
    broken = DatasetManifest(
        entries=[ManifestEntry("gone/file.png", "real", "test")]
    )
    with pytest.raises(EvaluationError, match="gone/file.png"):
        evaluate_split(tiny_model, broken, "test", root=root)


# ---------------------------------------------------------------------------
# history CSV


def test_history_round_trip(tmp_path, separable_dataset, tiny_model):
    root, manifest = separable_dataset
    history, _ = train(tiny_model, manifest, TrainConfig(epochs=3, seed=1), root=root)
    path = tmp_path / "history.csv"
    write_history(history, path)
    loaded = read_history(path)
    assert len(loaded.records) == len(history.records)
    for a, b in zip(loaded.records, history.records):
        assert a.epoch == b.epoch
        for attr in ("train_loss", "train_acc", "val_loss", "val_acc"):
            assert getattr(a, attr) == pytest.approx(getattr(b, attr), rel=1e-5)
    assert loaded.best_epoch == history.best_epoch


def test_history_parses_published_first_row():
    loaded = read_history(DATA_DIR / "efficientnet_b4_history.csv")
    first = loaded.records[0]
    assert first == EpochRecord(1, 0.1486, 0.9397, 0.1252, 0.9579)
    assert len(loaded.records) == 9
    assert loaded.records[-1].val_acc == 0.9834
    assert loaded.best_epoch == 8  # val_loss 0.0431 is the minimum


def test_history_rejects_non_contiguous_epochs(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text(
        "epoch,train_loss,train_acc,val_loss,val_acc\n"
        "1,0.5,0.5,0.5,0.5\n"
        "3,0.4,0.6,0.4,0.6\n"
    )
    with pytest.raises(HistoryParseError, match=":3:"):
        read_history(path)


def test_history_rejects_bad_header(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("epoch,loss\n1,0.5\n")
    with pytest.raises(HistoryParseError, match="header"):
        read_history(path)


def test_history_rejects_malformed_value(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text(
        "epoch,train_loss,train_acc,val_loss,val_acc\n1,oops,0.5,0.5,0.5\n"
    )
    with pytest.raises(HistoryParseError, match=":2:"):
        read_history(path)


# ---------------------------------------------------------------------------
# curves


def test_emit_curves_from_published_table(tmp_path):
    history = read_history(DATA_DIR / "efficientnet_b4_history.csv")
    out = emit_curves(history, tmp_path / "curves.png")
    assert out.exists() and out.stat().st_size > 1000
    assert history.records[-1].val_acc == 0.9834  # what the accuracy panel ends at


def test_emit_curves_single_point(tmp_path):
    history = TrainingHistory(records=[EpochRecord(1, 0.5, 0.5, 0.5, 0.5)])
    out = emit_curves(history, tmp_path / "one.png")
    assert out.exists() and out.stat().st_size > 0


def test_emit_curves_empty_history_raises(tmp_path):
    with pytest.raises(ValueError):
        emit_curves(TrainingHistory(), tmp_path / "x.png")
