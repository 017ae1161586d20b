"""ROC curves, Mann-Whitney AUC and threshold classification metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import OneClassOnly


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # first entry is +inf (nothing predicted positive)
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _check(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n1 = int(labels.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise OneClassOnly("both classes must be present")
    return scores, labels, n1, n0


def auc_mann_whitney(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), via average ranks."""
    scores, labels, n1, n0 = _check(scores, labels)
    r = rankdata(scores)
    u = r[labels].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def roc(scores, labels) -> RocCurve:
    scores, labels, n1, n0 = _check(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, lab = scores[order], labels[order]
    # last index of every run of equal scores
    cut = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(lab)[cut]
    fp = np.cumsum(~lab)[cut]
    tpr = np.r_[0.0, tp / n1]
    fpr = np.r_[0.0, fp / n0]
    thresholds = np.r_[np.inf, s[cut]]
    return RocCurve(fpr, tpr, thresholds, auc_mann_whitney(scores, labels))


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    sensitivity: float
    specificity: float
    threshold: float
    tp: int
    fn: int
    tn: int
    fp: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("accuracy", "sensitivity", "specificity", "threshold", "tp", "fn", "tn", "fp")}


def classify_metrics(scores, labels, threshold: float = 0.5) -> ClassificationMetrics:
    """Predict positive when score >= threshold and tabulate the confusion counts."""
    scores, labels, n1, n0 = _check(scores, labels)
    pred = scores >= threshold
    tp = int((pred & labels).sum())
    tn = int((~pred & ~labels).sum())
    fn, fp = n1 - tp, n0 - tn
    return ClassificationMetrics((tp + tn) / (n1 + n0), tp / n1, tn / n0, float(threshold), tp, fn, tn, fp)


def youden_threshold(scores, labels) -> float:
    """Score threshold maximising sensitivity + specificity - 1 (ties: highest threshold)."""
    curve = roc(scores, labels)
    j = curve.tpr[1:] - curve.fpr[1:]
    return float(curve.thresholds[1:][int(np.argmax(j))])
