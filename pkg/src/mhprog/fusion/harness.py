"""Stratified 80/20 evaluation with 5-fold model selection over the modality/DP ablation grid."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import InsufficientData, OneClassOnly, RankDeficient
from ..stats.logistic import fit_logistic
from ..stats.matrix import DataMatrix
from ..stats.vif import VIF_LIMIT, vif
from ..stats.protocol import stratified_split
from ..stats.roc import classify_metrics, roc
from .model import FusionConfig
from .train import FusionDataset, predict_proba, train

log = logging.getLogger(__name__)

# published AUCs of the tri-modal model with DP; context only, never asserted
PUBLISHED_FULL_MODEL_AUC = {"w2": 0.94, "m3": 0.90, "m6": 0.91, "m12": 0.89}

MODALITY_SETS = {
    "image": dict(use_image=True, use_clinical=False, use_values=False),
    "cd+values": dict(use_image=False, use_clinical=True, use_values=True),
    "cd+values+image": dict(use_image=True, use_clinical=True, use_values=True),
}


def ablation_grid() -> list[dict]:
    """Three modality sets x {without, with} DP; DP has no effect on the image-only model."""
    rows = []
    for name, mods in MODALITY_SETS.items():
        for with_dp in (False, True):
            rows.append({
                "model": "DL",
                "modalities": name,
                "with_dp": with_dp,
                "dp_applicable": mods["use_values"],
                "label": f"DL {name} {'with' if with_dp else 'w/o'} DP",
                **mods,
            })
    return rows


def stratified_folds(y, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Deal each class's shuffled indices round-robin into ``k`` folds."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        for i, j in enumerate(idx):
            folds[(i + offset) % k].append(int(j))
        offset += len(idx)
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def _standardize(train: FusionDataset, other: FusionDataset) -> tuple[FusionDataset, FusionDataset]:
    def fit(a):
        mu = a.mean(axis=0) if len(a) else np.zeros(a.shape[1])
        sd = a.std(axis=0) if len(a) else np.ones(a.shape[1])
        return mu, np.where(sd > 0, sd, 1.0)

    mc, sc = fit(train.v_c)
    mv, sv = fit(train.v_v)

    def apply(d):
        return FusionDataset(d.images, (d.v_c - mc) / sc, (d.v_v - mv) / sv, d.y, list(d.ids),
                             list(d.values_names), list(d.clinical_names))

    return apply(train), apply(other)


def _metrics(scores, y, threshold=0.5) -> dict:
    curve = roc(scores, y)
    cm = classify_metrics(scores, y, threshold)
    return {
        "auc": curve.auc,
        "accuracy": cm.accuracy,
        "sensitivity": cm.sensitivity,
        "specificity": cm.specificity,
        "roc": {"fpr": curve.fpr.tolist(), "tpr": curve.tpr.tolist()},
    }


def _fit_eval(tr, te, cfg, epochs, lr, batch_size):
    tr, te = _standardize(tr, te)
    res = train(tr, cfg, epochs=epochs, lr=lr, batch_size=batch_size)
    return predict_proba(res.params, cfg, te), res


def _check_classes(y, what):
    if len(np.unique(y)) < 2:
        raise InsufficientData(f"{what} lacks one of the outcome classes")


def evaluate_harness(data: FusionDataset, cfg: FusionConfig, seed: int = 0, dp_columns=(),
                     epochs: int = 60, lr_grid=(1e-2, 3e-3), batch_size: int = 16,
                     folds: int = 5, test_frac: float = 0.2, horizon: str | None = None,
                     rows: list[dict] | None = None) -> dict:
    """Evaluate every ablation row on one shared stratified split.

    ``dp_columns`` are indices into ``data.v_v`` holding dynamic parameters;
    "without DP" rows drop them. For each row the learning rate is chosen by
    mean validation AUC over ``folds`` stratified folds of the training portion,
    then the model is refit on the whole training portion and scored on the test split.
    """
    if len(np.unique(data.y)) < 2:
        raise OneClassOnly("dataset needs both outcome classes")
    tr_idx, te_idx = stratified_split(data.y, test_frac, seed)
    _check_classes(data.y[te_idx], "test split")
    fold_idx = stratified_folds(data.y[tr_idx], folds, seed)
    for f in fold_idx:
        _check_classes(data.y[tr_idx][f], "a validation fold")
        _check_classes(np.delete(data.y[tr_idx], f), "a training fold")

    dp_set = set(int(c) for c in dp_columns)
    no_dp_cols = [c for c in range(data.v_v.shape[1]) if c not in dp_set]
    grid = rows if rows is not None else ablation_grid()
    out_rows = []
    for row in grid:
        d = data if row["with_dp"] else data.with_values(no_dp_cols)
        rcfg = cfg.with_(use_image=row["use_image"], use_clinical=row["use_clinical"],
                         use_values=row["use_values"], clinical_dim=d.v_c.shape[1],
                         values_dim=d.v_v.shape[1])
        train_part, test_part = d.subset(tr_idx), d.subset(te_idx)
        cv = {}
        for lr in lr_grid:
            aucs = []
            for f in fold_idx:
                keep = np.setdiff1d(np.arange(len(train_part)), f)
                scores, _ = _fit_eval(train_part.subset(keep), train_part.subset(f), rcfg, epochs, lr, batch_size)
                aucs.append(roc(scores, train_part.y[f]).auc)
            cv[repr(lr)] = float(np.mean(aucs))
        best_lr = max(lr_grid, key=lambda lr: (cv[repr(lr)], -lr_grid.index(lr)))
        scores, res = _fit_eval(train_part, test_part, rcfg, epochs, best_lr, batch_size)
        out_rows.append({
            **{k: row[k] for k in ("label", "model", "modalities", "with_dp", "dp_applicable")},
            "cv_mean_auc": cv,
            "chosen_lr": best_lr,
            "final_train_loss": res.loss_trace[-1] if res.loss_trace else None,
            "test": _metrics(scores, test_part.y),
        })

    return {
        "horizon": horizon,
        "seed": seed,
        "n": len(data),
        "n_train": int(len(tr_idx)),
        "n_test": int(len(te_idx)),
        "test_ids": [data.ids[i] for i in te_idx],
        "config": cfg.to_dict(),
        "epochs": epochs,
        "lr_grid": list(lr_grid),
        "folds": folds,
        "rows": out_rows,
        "logistic": logistic_rows(data, tr_idx, te_idx, dp_set),
        "published_context": {"full_model_auc": PUBLISHED_FULL_MODEL_AUC.get(horizon)},
    }


def logistic_rows(data: FusionDataset, tr_idx, te_idx, dp_set) -> list[dict]:
    """Logistic baselines on clinical + values vectors, without and with DP, on the same split.

    Collinear columns are removed with the same greedy VIF rule as the
    statistical protocol, computed on the training rows only.
    """
    out = []
    for with_dp in (False, True):
        cols = [c for c in range(data.v_v.shape[1]) if with_dp or c not in dp_set]
        X = np.column_stack([data.v_c, data.v_v[:, cols]])
        mu, sd = X[tr_idx].mean(axis=0), X[tr_idx].std(axis=0)
        keep = sd > 0
        Xs = (X[:, keep] - mu[keep]) / sd[keep]
        if Xs.shape[1] >= 2 and len(tr_idx) > Xs.shape[1]:
            names = [str(j) for j in range(Xs.shape[1])]
            _, removed = vif(DataMatrix(names, Xs[tr_idx], data.y[tr_idx].astype(float)), VIF_LIMIT)
            Xs = Xs[:, [j for j in range(Xs.shape[1]) if str(j) not in set(removed)]]
        label = f"LG cd+values {'with' if with_dp else 'w/o'} DP"
        try:
            fit = fit_logistic(Xs[tr_idx], data.y[tr_idx])
        except (RankDeficient, OneClassOnly) as exc:
            out.append({"label": label, "with_dp": with_dp, "error": str(exc)})
            continue
        scores = fit.predict_proba(Xs[te_idx])
        out.append({"label": label, "with_dp": with_dp, "converged": fit.converged,
                    "test": _metrics(scores, data.y[te_idx])})
    return out
