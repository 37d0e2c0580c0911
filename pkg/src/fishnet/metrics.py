"""Multi-class log loss, accuracy, and confusion-matrix reporting.

Log loss is the probability-punishing score used to rank the fish models:

    logloss = -(1/N) * sum_i ln(p[i, true_i])

with probabilities clipped to [1e-15, 1 - 1e-15] so certain-but-wrong
predictions stay finite.  Lower is better.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CLIP_EPS = 1e-15


@dataclass
class Prediction:
    """Probability rows (N x M, each summing to 1) with true class indices."""

    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.probs.ndim != 2:
            raise ValueError("probs must be an N x M matrix")
        if self.labels.shape != (self.probs.shape[0],):
            raise ValueError("need exactly one label per probability row")
        if self.probs.shape[0]:
            sums = self.probs.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > 1e-6:
                raise ValueError("probability rows must sum to 1 (within 1e-6)")
        m = self.probs.shape[1]
        if np.any((self.labels < 0) | (self.labels >= m)):
            raise ValueError(f"labels must lie in [0, {m})")

    def predicted_labels(self) -> np.ndarray:
        return self.probs.argmax(axis=1)


def multiclass_logloss(probs, labels) -> float:
    """Mean negative log probability of the true class, clipped at 1e-15."""
    pred = probs if isinstance(probs, Prediction) else Prediction(probs, labels)
    n = pred.probs.shape[0]
    if n == 0:
        raise ValueError("cannot score an empty prediction set")
    true_p = pred.probs[np.arange(n), pred.labels]
    clipped = np.clip(true_p, CLIP_EPS, 1.0 - CLIP_EPS)
    return float(-np.mean(np.log(clipped)))


def logloss_gradient(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(logloss)/d(probs): -1/(N*p) at the true class, 0 elsewhere."""
    n = probs.shape[0]
    grad = np.zeros_like(probs)
    idx = np.arange(n)
    grad[idx, labels] = -1.0 / (n * np.clip(probs[idx, labels], CLIP_EPS, None))
    return grad


def accuracy(true_labels, predicted_labels) -> float:
    """Fraction of exact label matches."""
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.shape != p.shape:
        raise ValueError(f"label vectors differ in length: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise ValueError("cannot score an empty label set")
    return float(np.mean(t == p))


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes; counts sum to N."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_lists(self) -> list[list[int]]:
        return self.counts.tolist()

    def format_table(self, class_names) -> str:
        names = list(class_names)
        width = max(len(n) for n in names) + 2
        width = max(width, 6)
        header = " " * width + "".join(f"{n:>{width}}" for n in names)
        lines = [header]
        for name, row in zip(names, self.counts):
            cells = "".join(f"{int(v):>{width}}" for v in row)
            lines.append(f"{name:>{width}}{cells}")
        return "\n".join(lines)


def confusion_matrix(true_labels, predicted_labels, num_classes: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"label vectors differ in length: {t.shape} vs {p.shape}")
    if np.any((t < 0) | (t >= num_classes)):
        raise ValueError(f"true labels must lie in [0, {num_classes})")
    if np.any((p < 0) | (p >= num_classes)):
        raise ValueError(f"predicted labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass
class MetricsReport:
    logloss: float
    accuracy: float
    confusion: ConfusionMatrix
    class_names: tuple[str, ...] = field(default_factory=tuple)

    def to_json_dict(self) -> dict:
        return {
            "logloss": self.logloss,
            "accuracy": self.accuracy,
            "confusion": self.confusion.to_lists(),
            "class_names": list(self.class_names),
        }
