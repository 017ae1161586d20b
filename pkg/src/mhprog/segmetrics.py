"""Per-class segmentation quality (Dice, IoU, accuracy, F1, ROC AUC) with per-class tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core_data import ClassLabel, LabeledScan
from .errors import EmptyInput, OneClassOnly, ShapeMismatch
from .stats.roc import auc_mann_whitney

FOREGROUND = tuple(c for c in ClassLabel if c is not ClassLabel.Background)
METRIC_NAMES = ("dice", "iou", "accuracy", "f1", "roc_auc")


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @classmethod
    def of(cls, pred, truth) -> "Confusion":
        pred = np.asarray(pred, dtype=bool)
        truth = np.asarray(truth, dtype=bool)
        if pred.shape != truth.shape:
            raise ShapeMismatch(f"prediction {pred.shape} vs truth {truth.shape}")
        tp = int((pred & truth).sum())
        fp = int((pred & ~truth).sum())
        fn = int((~pred & truth).sum())
        return cls(tp, fp, fn, pred.size - tp - fp - fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def dice(self) -> float:
        den = 2 * self.tp + self.fp + self.fn
        return 1.0 if den == 0 else 2 * self.tp / den

    def iou(self) -> float:
        den = self.tp + self.fp + self.fn
        return 1.0 if den == 0 else self.tp / den

    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    def f1(self) -> float:
        if self.tp + self.fp + self.fn == 0:
            return 1.0
        if self.tp == 0:
            return 0.0
        # exact rationals so the single final rounding matches dice bit for bit
        prec = Fraction(self.tp, self.tp + self.fp)
        rec = Fraction(self.tp, self.tp + self.fn)
        return float(2 * prec * rec / (prec + rec))

    def balanced_accuracy(self) -> float:
        if self.tp + self.fn == 0 or self.tn + self.fp == 0:
            raise OneClassOnly("truth mask holds a single class")
        return 0.5 * (self.tp / (self.tp + self.fn) + self.tn / (self.tn + self.fp))


def binary_metrics(pred, truth) -> tuple[float, float, float, float]:
    """(dice, iou, accuracy, f1) for two same-shaped binary masks; both empty counts as perfect."""
    c = Confusion.of(pred, truth)
    return c.dice(), c.iou(), c.accuracy(), c.f1()


def roc_auc_class(prob, truth) -> float:
    """Pixel-level AUC of a probability map against a binary truth mask."""
    prob = np.asarray(prob, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if prob.shape != truth.shape:
        raise ShapeMismatch(f"probability map {prob.shape} vs truth {truth.shape}")
    if prob.size and (prob.min() < 0 or prob.max() > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return auc_mann_whitney(prob.ravel(), truth.ravel())


def hard_mask_auc(pred, truth) -> float:
    """Fallback AUC for hard masks: (sensitivity + specificity) / 2."""
    return Confusion.of(pred, truth).balanced_accuracy()


@dataclass
class ClassMetrics:
    label: ClassLabel
    dice: float
    iou: float
    accuracy: float
    f1: float
    roc_auc: float | None
    support: int
    hard_mask_fallback: bool = False

    def row(self) -> dict:
        return {
            "class": self.label.name,
            **{k: getattr(self, k) for k in METRIC_NAMES},
            "support": self.support,
            "fallback": self.hard_mask_fallback,
        }


def mean_row(values) -> float | None:
    """Unweighted arithmetic mean over classes; undefined entries are skipped."""
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return float(sum(vals) / len(vals))


@dataclass
class MetricsReport:
    per_class: list[ClassMetrics]
    mean: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: list[ClassMetrics]) -> "MetricsReport":
        mean = {k: mean_row(getattr(r, k) for r in rows) for k in METRIC_NAMES}
        return cls(rows, mean)

    def table(self) -> list[dict]:
        rows = [r.row() for r in self.per_class]
        rows.append({"class": "Mean", **self.mean, "support": sum(r.support for r in self.per_class),
                     "fallback": any(r.hard_mask_fallback for r in self.per_class)})
        return rows


def _class_metrics(label, conf: Confusion, auc, fallback) -> ClassMetrics:
    return ClassMetrics(label, conf.dice(), conf.iou(), conf.accuracy(), conf.f1(), auc,
                        conf.tp + conf.fn, fallback)


def report(pred_scans, truth_scans, classes=FOREGROUND, prob_maps=None,
           aggregate: str = "micro") -> MetricsReport:
    """Per-class metrics over paired scans.

    ``micro`` pools confusion counts (and pixels for AUC) over all pairs;
    ``macro`` averages per-pair metrics. ``prob_maps``, if given, is a list of
    dicts mapping ClassLabel -> probability map for each pair; without it the
    AUC column uses the hard-mask fallback and is flagged.
    """
    pred_scans = list(pred_scans)
    truth_scans = list(truth_scans)
    if not pred_scans or not truth_scans:
        raise EmptyInput("no scan pairs")
    if len(pred_scans) != len(truth_scans):
        raise ShapeMismatch(f"{len(pred_scans)} predictions vs {len(truth_scans)} truths")
    if aggregate not in ("micro", "macro"):
        raise ValueError(f"unknown aggregation {aggregate!r}")
    preds = [p.labels if isinstance(p, LabeledScan) else np.asarray(p) for p in pred_scans]
    truths = [t.labels if isinstance(t, LabeledScan) else np.asarray(t) for t in truth_scans]
    for p, t in zip(preds, truths):
        if p.shape != t.shape:
            raise ShapeMismatch(f"prediction {p.shape} vs truth {t.shape}")

    rows = []
    for cls_ in classes:
        cls_ = ClassLabel(cls_)
        confs = [Confusion.of(p == cls_, t == cls_) for p, t in zip(preds, truths)]
        fallback = prob_maps is None
        if aggregate == "micro":
            conf = sum(confs, Confusion())
            auc = _auc(cls_, preds, truths, prob_maps, conf)
            rows.append(_class_metrics(cls_, conf, auc, fallback))
        else:
            per = []
            for i, c in enumerate(confs):
                sub = None if prob_maps is None else [prob_maps[i]]
                per.append(_class_metrics(cls_, c, _auc(cls_, [preds[i]], [truths[i]], sub, c), fallback))
            rows.append(ClassMetrics(
                cls_,
                *(mean_row(getattr(r, k) for r in per) for k in METRIC_NAMES),
                support=sum(r.support for r in per),
                hard_mask_fallback=fallback,
            ))
    return MetricsReport.from_rows(rows)


def _auc(cls_, preds, truths, prob_maps, conf: Confusion):
    try:
        if prob_maps is None:
            return conf.balanced_accuracy()
        probs = np.concatenate([np.asarray(pm[cls_], dtype=float).ravel() for pm in prob_maps])
        truth = np.concatenate([(t == cls_).ravel() for t in truths])
        return roc_auc_class(probs, truth)
    except OneClassOnly:
        return None
