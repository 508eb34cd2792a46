"""Confusion matrices, overall accuracy and per-class recognition rate.

The recognition rate of class c is the mean of its true-positive rate and
its true-negative rate, where the negatives are every sample whose true
class is not c and a true negative is one that was also not predicted as c.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricsError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray   # counts[i, j]: true class i predicted as j

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise MetricsError(f"confusion matrix must be square, got shape {self.counts.shape}")
        if (self.counts < 0).any():
            raise MetricsError("confusion matrix entries must be nonnegative")

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self, c: int) -> int:
        return int(self.counts[c, c])

    def fn(self, c: int) -> int:
        return int(self.counts[c].sum() - self.counts[c, c])

    def fp(self, c: int) -> int:
        return int(self.counts[:, c].sum() - self.counts[c, c])


def confusion_matrix(true_labels, predicted_labels, k: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise MetricsError(f"{len(t)} true labels but {len(p)} predictions")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise MetricsError(f"{name} label out of range [0, {k})")
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts)


def overall_accuracy(matrix: ConfusionMatrix) -> float:
    """Correctly recognised samples over all samples."""
    total = matrix.total
    if total == 0:
        raise MetricsError("overall accuracy of an empty confusion matrix is undefined")
    return float(np.trace(matrix.counts) / total)


def recognition_rate(matrix: ConfusionMatrix, c: int, class_name: str | None = None):
    """(TPR, TNR, RR) for class ``c``; RR = (TPR + TNR) / 2."""
    name = class_name if class_name is not None else f"class {c}"
    row = int(matrix.counts[c].sum())
    negatives = matrix.total - row
    if row == 0:
        raise MetricsError(f"{name} has no true samples; its recognition rate is undefined")
    if negatives == 0:
        raise MetricsError(f"{name} is the only class present; its true-negative rate is undefined")
    tpr = matrix.tp(c) / row
    tnr = (negatives - matrix.fp(c)) / negatives
    return tpr, tnr, (tpr + tnr) / 2


def mean_recognition_rate(matrix: ConfusionMatrix) -> float:
    return float(np.mean([recognition_rate(matrix, c)[2] for c in range(matrix.k)]))


@dataclass(frozen=True)
class ClassRates:
    name: str
    tpr: float
    tnr: float
    rr: float


@dataclass
class EvalReport:
    classes: list[str]
    matrix: ConfusionMatrix
    overall_accuracy: float
    per_class: list[ClassRates]
    mean_rr: float

    @classmethod
    def from_matrix(cls, matrix: ConfusionMatrix, classes=None) -> "EvalReport":
        classes = list(classes) if classes is not None else [f"class{i}" for i in range(matrix.k)]
        if len(classes) != matrix.k:
            raise MetricsError(f"{len(classes)} class names for a {matrix.k}-class matrix")
        rates = [ClassRates(n, *recognition_rate(matrix, c, n)) for c, n in enumerate(classes)]
        return cls(classes, matrix, overall_accuracy(matrix), rates, float(np.mean([r.rr for r in rates])))

    @classmethod
    def from_predictions(cls, true_labels, predicted_labels, classes) -> "EvalReport":
        return cls.from_matrix(confusion_matrix(true_labels, predicted_labels, len(classes)), classes)
