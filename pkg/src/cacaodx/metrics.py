"""Confusion matrix, per-class metrics, accuracy and field agreement.

Zero denominators yield 0.0 by convention (never NaN) and are marked
with `*` in the rendered table so reports stay total and comparable.
Percentages render to two decimal places.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetManifest, load_split_samples
from .errors import InputError, ShapeMismatchError


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion(truths, preds, labels) -> np.ndarray:
    """counts[t][p] = number of samples with truth t predicted as p."""
    truths, preds, labels = list(truths), list(preds), list(labels)
    if len(truths) != len(preds):
        raise InputError(f"{len(truths)} truths vs {len(preds)} predictions")
    index = {label: i for i, label in enumerate(labels)}
    matrix = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(truths, preds):
        if t not in index or p not in index:
            raise InputError(f"label outside the configured set: {t!r} / {p!r}")
        matrix[index[t], index[p]] += 1
    return matrix


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    # zero-denominator flags, used to mark the rendered value
    precision_defined: bool = True
    recall_defined: bool = True


@dataclass(frozen=True)
class EvalReport:
    labels: tuple
    matrix: np.ndarray
    per_class: dict
    accuracy: float
    total: int

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "matrix": self.matrix.tolist(),
            "per_class": {
                label: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for label, m in self.per_class.items()
            },
            "accuracy": self.accuracy,
            "total": self.total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        width = max([len(str(l)) for l in self.labels] + [5])
        head = f"{'':<{width}}  {'Precision':>9}  {'Recall':>9}  {'F1-score':>9}  {'Support':>7}"
        lines = [head]
        for label in self.labels:
            m = self.per_class[label]
            p = f"{m.precision * 100:.2f}%" + ("" if m.precision_defined else "*")
            r = f"{m.recall * 100:.2f}%" + ("" if m.recall_defined else "*")
            f1 = f"{m.f1 * 100:.2f}%"
            lines.append(f"{label:<{width}}  {p:>9}  {r:>9}  {f1:>9}  {m.support:>7}")
        lines.append(f"accuracy {self.accuracy * 100:.2f}%  total {self.total}")
        if any(not (m.precision_defined and m.recall_defined) for m in self.per_class.values()):
            lines.append("* zero-denominator metric, reported as 0.00% by convention")
        return "\n".join(lines) + "\n"

    def matrix_csv(self) -> str:
        lines = ["truth\\pred," + ",".join(str(l) for l in self.labels)]
        for i, label in enumerate(self.labels):
            lines.append(f"{label}," + ",".join(str(int(v)) for v in self.matrix[i]))
        return "\n".join(lines) + "\n"


def metrics(matrix, labels=None) -> EvalReport:
    """Per-class precision/recall/F1/support and accuracy from counts."""
    matrix = np.asarray(matrix, dtype=np.int64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InputError(f"confusion matrix must be square, got {matrix.shape}")
    if (matrix < 0).any():
        raise InputError("confusion matrix counts must be non-negative")
    n = matrix.shape[0]
    labels = tuple(labels) if labels is not None else tuple(range(n))
    if len(labels) != n:
        raise InputError(f"{len(labels)} labels for a {n}x{n} matrix")

    total = int(matrix.sum())
    accuracy = float(np.trace(matrix) / total) if total else 0.0
    per_class = {}
    for i, label in enumerate(labels):
        tp = int(matrix[i, i])
        col = int(matrix[:, i].sum())
        row = int(matrix[i, :].sum())
        precision = tp / col if col else 0.0
        recall = tp / row if row else 0.0
        per_class[label] = ClassMetrics(
            precision=precision,
            recall=recall,
            f1=f1_score(precision, recall),
            support=row,
            precision_defined=col > 0,
            recall_defined=row > 0,
        )
    return EvalReport(labels, matrix, per_class, accuracy, total)


@dataclass(frozen=True)
class AgreementResult:
    matches: int
    total: int
    rate: float


def agreement(app_labels, expert_labels) -> AgreementResult:
    """Fraction of field samples where the app matches the expert.

    Each element is (disease, level-or-None). The disease must match;
    the level is compared only when both sides assert one.
    """
    app_labels, expert_labels = list(app_labels), list(expert_labels)
    if len(app_labels) != len(expert_labels):
        raise InputError(f"{len(app_labels)} app labels vs {len(expert_labels)} expert labels")
    if not app_labels:
        raise InputError("agreement needs at least one sample")
    matches = 0
    for app, expert in zip(app_labels, expert_labels):
        app_disease, app_level = _as_pair(app)
        exp_disease, exp_level = _as_pair(expert)
        ok = app_disease == exp_disease
        if ok and app_level is not None and exp_level is not None:
            ok = app_level == exp_level
        matches += int(ok)
    return AgreementResult(matches, len(app_labels), matches / len(app_labels))


def _as_pair(value):
    if isinstance(value, str):
        return value, None
    disease, level = value
    return disease, level


def evaluate_model(model, test_data, batch_size: int = 64) -> EvalReport:
    """Run the model over the test split and assemble a full report.

    test_data is either a DatasetManifest (only split == "test" entries
    are used) or a list of (CHW image, label index) pairs.
    """
    labels = model.arch.labels
    if isinstance(test_data, DatasetManifest):
        samples = load_split_samples(test_data, labels, "test", model.arch.input_size)
    else:
        samples = list(test_data)
    if not samples:
        raise InputError("no test samples to evaluate")
    images = np.stack([np.asarray(img, dtype=np.float32) for img, _ in samples])
    truth_idx = [int(lab) for _, lab in samples]
    if max(truth_idx) >= len(labels) or min(truth_idx) < 0:
        raise InputError(f"label index outside the model's {len(labels)} classes")
    if images.shape[2] != model.arch.input_size or images.shape[3] != model.arch.input_size:
        raise ShapeMismatchError(
            f"test images are {images.shape[2]}x{images.shape[3]},"
            f" model expects {model.arch.input_size}"
        )
    preds = []
    for start in range(0, len(images), batch_size):
        probs = model.forward(images[start : start + batch_size])
        preds.extend(int(i) for i in probs.argmax(axis=1))
    truths = [labels[i] for i in truth_idx]
    predictions = [labels[i] for i in preds]
    return metrics(confusion(truths, predictions, labels), labels)
