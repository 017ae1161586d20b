"""The end-to-end logistic protocol and the with/without dynamic-parameter comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateSample, OneClassOnly
from .correlation import correlate
from .logistic import LogisticFit, fit_logistic, lr_test, univariate_screen
from .matrix import DataMatrix, clean
from .normality import shapiro_wilk
from .roc import classify_metrics, roc, youden_threshold
from .vif import vif

log = logging.getLogger(__name__)

# published logistic-regression results, recorded as context only
PUBLISHED_LOGISTIC = {
    "w2": {"accuracy_without_dp": 0.862, "accuracy_with_dp": 0.876, "nagelkerke_with_dp": 0.572},
    "m3": {"accuracy_without_dp": 0.818, "accuracy_with_dp": 0.843, "nagelkerke_with_dp": 0.542},
    "m6": {"accuracy_without_dp": 0.810, "accuracy_with_dp": 0.841, "nagelkerke_with_dp": 0.688},
    "m12": {"accuracy_without_dp": 0.786, "accuracy_with_dp": 0.802, "nagelkerke_with_dp": 0.586},
}


def stratified_split(y, test_frac: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded stratified split; the test size is round(n * test_frac), shared out by largest remainder."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    n_test = int(round(len(y) * test_frac))
    idx = {c: np.flatnonzero(y == c) for c in classes}
    exact = {c: len(idx[c]) * n_test / len(y) for c in classes}
    alloc = {c: int(np.floor(exact[c])) for c in classes}
    short = n_test - sum(alloc.values())
    for c in sorted(classes, key=lambda c: (-(exact[c] - alloc[c]), c))[:short]:
        alloc[c] += 1
    test = []
    for c in classes:
        perm = rng.permutation(idx[c])
        test.extend(perm[:alloc[c]].tolist())
    test = np.sort(np.array(test, dtype=int))
    train = np.setdiff1d(np.arange(len(y)), test)
    return train, test


@dataclass
class ModelEval:
    columns: list[str]
    fit: LogisticFit
    accuracy: float
    auc: float
    sensitivity: float
    specificity: float
    threshold: float
    roc_fpr: list = field(default_factory=list)
    roc_tpr: list = field(default_factory=list)
    roc_thresholds: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "columns": self.columns,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "threshold": self.threshold,
            "nagelkerke_r2": self.fit.nagelkerke_r2,
            "fit": self.fit.as_dict(),
        }


def _evaluate(train: DataMatrix, test: DataMatrix, columns, threshold=0.5) -> ModelEval:
    fit = fit_logistic(train.select(columns).X, train.y, columns)
    p_train = fit.predict_proba(train.select(columns).X)
    p_test = fit.predict_proba(test.select(columns).X)
    if threshold == "youden":
        thr = youden_threshold(p_train, train.y)
    else:
        thr = float(threshold)
    cm = classify_metrics(p_test, test.y, thr)
    curve = roc(p_test, test.y)
    return ModelEval(list(columns), fit, cm.accuracy, curve.auc, cm.sensitivity, cm.specificity, thr,
                     curve.fpr.tolist(), curve.tpr.tolist(), curve.thresholds.tolist())


@dataclass
class Comparison:
    without_dp: ModelEval
    with_dp: ModelEval | None
    lr_statistic: float
    lr_df: int
    lr_p: float
    n_train: int
    n_test: int

    def as_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "n_test": self.n_test,
            "without_dp": self.without_dp.as_dict(),
            "with_dp": self.with_dp.as_dict() if self.with_dp else None,
            "lr_test": {"statistic": self.lr_statistic, "df": self.lr_df, "p": self.lr_p},
        }


def compare_with_without_dp(m: DataMatrix, dp_columns, seed: int = 0, test_frac: float = 0.2,
                            threshold=0.5) -> Comparison:
    """Fit nested models with and without ``dp_columns`` on the same training rows.

    Accuracy, AUC, sensitivity and specificity come from the held-out split;
    Nagelkerke R^2 and the likelihood-ratio test from the training fits.
    """
    dp = [c for c in m.columns if c in set(dp_columns)]
    missing = set(dp_columns) - set(m.columns)
    if missing:
        raise ValueError(f"dp columns not in matrix: {sorted(missing)}")
    if len(np.unique(m.y)) < 2:
        raise OneClassOnly("both outcome classes are required")
    base = [c for c in m.columns if c not in dp]
    tr, te = stratified_split(m.y, test_frac, seed)
    train, test = m.take(tr), m.take(te)
    small = _evaluate(train, test, base, threshold)
    big = _evaluate(train, test, base + dp, threshold) if dp else small
    lr = lr_test(small.fit, big.fit)
    return Comparison(small, big, lr.statistic, lr.df, lr.p, len(tr), len(te))


@dataclass
class ProtocolReport:
    cleaning: dict
    normality: dict
    correlations: dict
    vif: dict
    screening: dict
    selected: list
    comparison: Comparison | None

    def as_dict(self) -> dict:
        return {
            "cleaning": self.cleaning,
            "normality": self.normality,
            "correlations": self.correlations,
            "vif": self.vif,
            "screening": self.screening,
            "selected": self.selected,
            "comparison": self.comparison.as_dict() if self.comparison else None,
        }


def run_protocol(m: DataMatrix, dp_columns=(), target=None, include_dp: bool = True,
                 missing_threshold: float = 0.10, vif_limit: float = 5.0, alpha: float = 0.10,
                 seed: int = 0, threshold=0.5) -> ProtocolReport:
    """Cleaning, normality/correlation report, VIF exclusion, univariate screen, then the comparison.

    ``target`` is an optional continuous outcome (e.g. BCVA change) aligned with
    ``m``'s rows for the correlation report; the binary outcome is used otherwise.
    With ``include_dp=False`` the DP columns never enter screening or fitting.
    """
    dp_set = set(dp_columns)
    if not include_dp:
        m = m.select([c for c in m.columns if c not in dp_set])
    if len(np.unique(m.y[~np.isnan(m.y)])) < 2:
        raise OneClassOnly("outcome has a single class at this horizon")
    keep_target = None
    if target is not None:
        keep_target = dict(zip(m.row_ids, np.asarray(target, dtype=float)))
    cm, rep = clean(m, missing_threshold)
    if len(np.unique(cm.y)) < 2:
        raise OneClassOnly("outcome has a single class after cleaning")

    normality, correlations = {}, {}
    tgt = cm.y if keep_target is None else np.array([keep_target[r] for r in cm.row_ids])
    for j, name in enumerate(cm.columns):
        x = cm.X[:, j]
        try:
            w, p = shapiro_wilk(x)
            normality[name] = {"W": w, "p": p}
        except (DegenerateSample, ValueError) as exc:
            normality[name] = {"W": None, "p": None, "note": str(exc)}
        try:
            r, p, method = correlate(x, tgt)
            correlations[name] = {"r": r, "p": p, "method": method}
        except DegenerateSample as exc:
            correlations[name] = {"r": None, "p": None, "method": None, "note": str(exc)}

    # constant columns carry no information and break VIF/fits
    varying = [c for j, c in enumerate(cm.columns) if np.ptp(cm.X[:, j]) > 0]
    const = [c for c in cm.columns if c not in varying]
    cm = cm.select(varying)
    vif_info = {"initial": [], "removed": [], "constant": const}
    if len(cm.columns) >= 2 and cm.n > len(cm.columns):
        initial, removed = vif(cm, vif_limit)
        vif_info["initial"] = [[c, v] for c, v in initial]
        vif_info["removed"] = removed
        cm = cm.select([c for c in cm.columns if c not in removed])

    screen = univariate_screen(cm, alpha)
    selected = screen.selected
    comparison = None
    if selected or cm.columns:
        comparison = compare_with_without_dp(cm.select(selected), [c for c in selected if c in dp_set],
                                             seed=seed, threshold=threshold)
    return ProtocolReport(
        cleaning={
            "imputed": [list(t) for t in rep.imputed],
            "dropped_columns": [list(t) for t in rep.dropped_columns],
            "dropped_rows": rep.dropped_rows,
        },
        normality=normality,
        correlations=correlations,
        vif=vif_info,
        screening={"pvalues": screen.pvalues, "flagged": screen.flagged, "alpha": alpha},
        selected=selected,
        comparison=comparison,
    )
