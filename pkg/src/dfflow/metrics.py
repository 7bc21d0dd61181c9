"""Binary classification metrics: confusion counts, summary ratios, ROC/AUC.

Class 1 ("fake") is the positive class throughout. Ratios that would divide
zero by zero are reported as None rather than NaN. The ROC sweep walks
unique score thresholds from high to low; tied scores cross together, which
makes the trapezoidal area equal the pair-counting probability with half
credit for ties.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, LengthMismatch, SingleClass

__all__ = [
    "ConfusionMatrix",
    "MetricsSummary",
    "RocCurve",
    "confusion",
    "summary",
    "roc_auc",
    "write_roc_csv",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsSummary:
    """Accuracy plus the three positive-class ratios; None marks 0/0 cases."""

    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None


@dataclass
class RocCurve:
    """(fpr, tpr) points from threshold +inf down to -inf, with trapezoid area."""

    points: list[tuple[float, float]]
    auc: float


def _as_binary(values, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{what} must be 0 or 1")
    return arr.astype(np.int64)


def confusion(labels, preds) -> ConfusionMatrix:
    y = _as_binary(labels, "labels")
    p = _as_binary(preds, "preds")
    if len(y) != len(p):
        raise LengthMismatch(f"{len(y)} labels vs {len(p)} predictions")
    if len(y) == 0:
        raise EmptyInput("no samples")
    return ConfusionMatrix(
        tp=int(((y == 1) & (p == 1)).sum()),
        fp=int(((y == 0) & (p == 1)).sum()),
        tn=int(((y == 0) & (p == 0)).sum()),
        fn=int(((y == 1) & (p == 0)).sum()),
    )


def summary(cm: ConfusionMatrix) -> MetricsSummary:
    if cm.total == 0:
        raise EmptyInput("empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else None
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else None
    if precision is None or recall is None or precision + recall == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return MetricsSummary(accuracy, precision, recall, f1)


def roc_auc(labels, scores) -> RocCurve:
    y = _as_binary(labels, "labels")
    s = np.asarray(scores, dtype=np.float64)
    if len(y) != len(s):
        raise LengthMismatch(f"{len(y)} labels vs {len(s)} scores")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both classes present")

    order = np.argsort(-s, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    prev = None
    for idx in order:
        if prev is not None and s[idx] != prev:
            points.append((fp / n_neg, tp / n_pos))
        if y[idx] == 1:
            tp += 1
        else:
            fp += 1
        prev = s[idx]
    points.append((1.0, 1.0))

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += 0.5 * (y0 + y1) * (x1 - x0)
    return RocCurve(points=points, auc=auc)


def write_roc_csv(curve: RocCurve, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("fpr,tpr\n")
        for fpr, tpr in curve.points:
            fh.write(f"{fpr:.6f},{tpr:.6f}\n")
