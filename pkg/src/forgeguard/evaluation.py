"""Confusion matrices and the classification report: per-class precision, recall,
F1 and support, plus overall accuracy and macro / weighted averages.

Matrix orientation is rows = true class, columns = predicted class. An empty
predicted column yields precision 0 (flagged in the report) so every metric
stays defined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class LabelError(ValueError):
    """A pair mentions a label missing from class_names."""


@dataclass(frozen=True)
class ConfusionMatrix:
    class_names: tuple[str, ...]
    counts: np.ndarray  # (K, K) ints, rows true / cols predicted

    def __post_init__(self):
        k = len(self.class_names)
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (k, k):
            raise ValueError(f"counts must be {k}x{k}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return (
            isinstance(other, ConfusionMatrix)
            and self.class_names == other.class_names
            and np.array_equal(self.counts, other.counts)
        )


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    per_class: dict  # label -> ClassMetrics
    accuracy: float
    macro_avg: ClassMetrics
    weighted_avg: ClassMetrics
    total_support: int
    empty_predicted_columns: tuple[str, ...] = ()


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def confusion(pairs, class_names) -> ConfusionMatrix:
    """Tally (true, predicted) label pairs into a K x K matrix."""
    names = tuple(class_names)
    index = {name: i for i, name in enumerate(names)}
    counts = np.zeros((len(names), len(names)), dtype=np.int64)
    for true, pred in pairs:
        if true not in index or pred not in index:
            bad = true if true not in index else pred
            raise LabelError(f"label {bad!r} not in class_names {names}")
        counts[index[true], index[pred]] += 1
    return ConfusionMatrix(names, counts)


def report(matrix: ConfusionMatrix) -> EvalReport:
    """Per-class precision/recall/F1/support plus accuracy, macro and weighted rows."""
    counts = matrix.counts
    total = matrix.total
    if total == 0:
        raise ValueError("cannot report on an empty confusion matrix")
    col_sums = counts.sum(axis=0)
    row_sums = counts.sum(axis=1)
    diag = np.diag(counts)

    per_class = {}
    empty_cols = []
    for i, name in enumerate(matrix.class_names):
        if col_sums[i] == 0:
            precision = 0.0
            empty_cols.append(name)
        else:
            precision = diag[i] / col_sums[i]
        recall = diag[i] / row_sums[i] if row_sums[i] else 0.0
        per_class[name] = ClassMetrics(
            precision=float(precision),
            recall=float(recall),
            f1=f1_score(float(precision), float(recall)),
            support=int(row_sums[i]),
        )

    metrics = list(per_class.values())
    supports = np.array([m.support for m in metrics], dtype=np.float64)
    macro = ClassMetrics(
        precision=float(np.mean([m.precision for m in metrics])),
        recall=float(np.mean([m.recall for m in metrics])),
        f1=float(np.mean([m.f1 for m in metrics])),
        support=total,
    )
    weights = supports / total
    weighted = ClassMetrics(
        precision=float(np.dot(weights, [m.precision for m in metrics])),
        recall=float(np.dot(weights, [m.recall for m in metrics])),
        f1=float(np.dot(weights, [m.f1 for m in metrics])),
        support=total,
    )
    return EvalReport(
        per_class=per_class,
        accuracy=float(diag.sum() / total),
        macro_avg=macro,
        weighted_avg=weighted,
        total_support=total,
        empty_predicted_columns=tuple(empty_cols),
    )


def reconstruct_counts(rows, reported_accuracy: float, tolerance: float = 5e-4):
    """Rebuild the matrix diagonal from per-class (recall, support) rows and check
    whether it reproduces the reported accuracy.

    ``rows`` is a sequence of (label, recall, support). Returns (diagonal dict,
    verdict string): "consistent" when sum(diag)/sum(support) matches
    ``reported_accuracy`` within ``tolerance``, else "inconsistent".
    """
    diagonal = {label: int(round(recall * support)) for label, recall, support in rows}
    total = sum(support for _, _, support in rows)
    implied = sum(diagonal.values()) / total if total else 0.0
    verdict = "consistent" if abs(implied - reported_accuracy) <= tolerance else "inconsistent"
    return diagonal, verdict


def render_report(rep: EvalReport, digits: int = 4) -> str:
    """Plain-text table in the usual classification-report layout."""
    width = max([len(n) for n in rep.per_class] + [len("Weighted avg")])
    header = f"{'':<{width}}  {'Precision':>10} {'Recall':>10} {'f1-score':>10} {'Support':>10}"
    lines = [header]
    for name, m in rep.per_class.items():
        lines.append(
            f"{name:<{width}}  {m.precision:>10.{digits}f} {m.recall:>10.{digits}f} "
            f"{m.f1:>10.{digits}f} {m.support:>10d}"
        )
    lines.append(
        f"{'Accuracy':<{width}}  {'':>10} {'':>10} {rep.accuracy:>10.{digits}f} "
        f"{rep.total_support:>10d}"
    )
    for label, m in (("Macro avg", rep.macro_avg), ("Weighted avg", rep.weighted_avg)):
        lines.append(
            f"{label:<{width}}  {m.precision:>10.{digits}f} {m.recall:>10.{digits}f} "
            f"{m.f1:>10.{digits}f} {m.support:>10d}"
        )
    if rep.empty_predicted_columns:
        lines.append(
            "note: precision set to 0 for classes never predicted: "
            + ", ".join(rep.empty_predicted_columns)
        )
    return "\n".join(lines)


def report_to_json(rep: EvalReport) -> dict:
    def metrics_dict(m: ClassMetrics) -> dict:
        return {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}

    return {
        "per_class": {name: metrics_dict(m) for name, m in rep.per_class.items()},
        "accuracy": rep.accuracy,
        "macro_avg": metrics_dict(rep.macro_avg),
        "weighted_avg": metrics_dict(rep.weighted_avg),
        "total_support": rep.total_support,
    }


def write_report(rep: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_json(rep), indent=2))
