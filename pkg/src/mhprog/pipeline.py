"""Glue between manifests, morphometry, dynamics and the two model families.

Feature CSVs are the hand-off format between stages: one row per (eye, stage),
empty cells for undefined or missing values.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_data import (
    DEFAULT_STAGE_DAYS, STAGE_ORDER, ClassLabel, LongitudinalSeries, PixelSpacing, Stage,
    clinical_columns, load_scan, outcome_label,
)
from .dynamics import DYNAMIC_COLUMNS, Lesion, derive_dynamics
from .errors import MhprogError, MissingBaseline, NoScans
from .morphometry import SHAPE_COLUMNS, VALUE_COLUMNS, FeatureVector, extract_features

log = logging.getLogger(__name__)

ID_COLUMNS = ("eye_id", "stage", "orientations")
FEATURE_COLUMNS = ID_COLUMNS + VALUE_COLUMNS + SHAPE_COLUMNS
BOOL_COLUMNS = ("erm_present", "traction_space_present") + tuple(c for c in DYNAMIC_COLUMNS if c.endswith("_censored"))


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def parse_cell(name: str, text: str):
    if text == "":
        return None
    if name in ("eye_id", "orientations"):
        return text
    if name == "stage":
        return Stage.parse(text)
    if name in BOOL_COLUMNS:
        return text not in ("0", "false", "False")
    return float(text)


# --- extraction -------------------------------------------------------------------

@dataclass
class RowError:
    eye_id: str
    stage: str
    reason: str


@dataclass
class ExtractResult:
    features: list[FeatureVector] = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)


def make_loader(default_spacing: PixelSpacing):
    def load(ref):
        return load_scan(ref.path, ref.spacing or default_spacing, ref.orientation)
    return load


def extract_all(series_list: list[LongitudinalSeries], default_spacing: PixelSpacing,
                min_pixels: int = 10) -> ExtractResult:
    """Run morphometry on every record; per-record failures are collected, not raised."""
    loader = make_loader(default_spacing)
    out = ExtractResult()
    for s in series_list:
        for rec in s.ordered():
            try:
                if not rec.scans:
                    raise NoScans(rec.eye_id, rec.stage.value)
                fv = extract_features(rec, min_pixels=min_pixels, loader=loader)
            except (MhprogError, OSError) as exc:
                log.warning("skipping eye %s stage %s: %s", rec.eye_id, rec.stage.value, exc)
                out.errors.append(RowError(rec.eye_id, rec.stage.value, f"{type(exc).__name__}: {exc}"))
                continue
            out.features.append(fv)
    return out


def write_features(path, features: list[FeatureVector], with_dynamics: bool = False) -> None:
    cols = FEATURE_COLUMNS + (DYNAMIC_COLUMNS if with_dynamics else ())
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for fv in features:
            row = []
            for c in cols:
                if c == "eye_id":
                    row.append(fv.eye_id)
                elif c == "stage":
                    row.append(fv.stage.value)
                elif c == "orientations":
                    row.append("".join(fv.orientations))
                else:
                    row.append(fmt(fv.get(c)))
            w.writerow(row)


def read_features(path) -> list[FeatureVector]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            vals = {k: parse_cell(k, v) for k, v in row.items()}
            fv = FeatureVector(vals.pop("eye_id"), vals.pop("stage"),
                               orientations=tuple(vals.pop("orientations", None) or ""))
            for k, v in vals.items():
                (fv.dynamics if k in DYNAMIC_COLUMNS else fv.values)[k] = v
            out.append(fv)
    return out


def group_by_eye(features: list[FeatureVector]) -> dict[str, dict[Stage, FeatureVector]]:
    out: dict[str, dict[Stage, FeatureVector]] = {}
    for fv in features:
        out.setdefault(fv.eye_id, {})[fv.stage] = fv
    return out


def dynamics_all(features: list[FeatureVector], epsilon=None, lam: float = 0.0,
                 stage_days=DEFAULT_STAGE_DAYS, last_stage: Stage | None = None) -> list[RowError]:
    """Attach recovery-rate columns to every eye's PRE FeatureVector in place."""
    errors = []
    for eye, by_stage in group_by_eye(features).items():
        try:
            derive_dynamics(None, by_stage, epsilon, lam, stage_days, last_stage)
        except MissingBaseline as exc:
            log.warning("eye %s: %s", eye, exc)
            errors.append(RowError(eye, "PRE", f"MissingBaseline: {exc}"))
    return errors


# --- model inputs --------------------------------------------------------------------

MODEL_VALUE_COLUMNS = VALUE_COLUMNS


def dp_model_columns(weighted: bool) -> list[str]:
    rate = "_w" if weighted else ""
    cols = []
    for les in Lesion:
        cols.append(f"rr_{les.value}{rate}")
        cols.append(f"rr_{les.value}_censored")
    return cols


@dataclass
class HorizonData:
    ids: list
    columns: list[str]
    X: np.ndarray           # NaN marks missing
    y: np.ndarray           # 1 Superior, 0 NotSuperior
    delta: np.ndarray       # BCVA change in letters
    dp_columns: list[str]
    clinical: list[str]


def horizon_data(series_list, features, horizon: Stage, threshold: int = 20,
                 weighted_dp: bool = False) -> HorizonData:
    """One row per eye with PRE features and BCVA at both PRE and ``horizon``.

    Covariates are the PRE clinical fields, PRE morphometry values and the
    dynamic-parameter columns (rates + censoring flags).
    """
    by_eye = group_by_eye(features)
    clin = clinical_columns(series_list)
    dp = dp_model_columns(weighted_dp)
    columns = clin + list(MODEL_VALUE_COLUMNS) + dp
    ids, rows, ys, deltas = [], [], [], []
    for s in series_list:
        pre_rec, post_rec = s.records.get(Stage.PRE), s.records.get(horizon)
        fv = by_eye.get(s.eye_id, {}).get(Stage.PRE)
        if pre_rec is None or post_rec is None or fv is None:
            continue
        if pre_rec.bcva_etdrs is None or post_rec.bcva_etdrs is None:
            continue
        lab = outcome_label(pre_rec, post_rec, threshold)
        row = [pre_rec.clinical.get(c) for c in clin]
        row += [fv.get(c) for c in MODEL_VALUE_COLUMNS]
        row += [fv.get(c) for c in dp]
        rows.append([math.nan if v is None else float(v) for v in row])
        ys.append(1.0 if lab.superior else 0.0)
        deltas.append(float(lab.delta_letters))
        ids.append(s.eye_id)
    X = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    return HorizonData(ids, columns, X, np.array(ys), np.array(deltas), dp, clin)


def scan_image(labels: np.ndarray, size: int) -> np.ndarray:
    """Label grid -> (size, size) float image in [0, 1] by nearest-neighbour resampling."""
    h, w = labels.shape
    rows = (np.arange(size) * h) // size
    cols = (np.arange(size) * w) // size
    return labels[np.ix_(rows, cols)].astype(float) / float(max(ClassLabel))


def impute_columns(X: np.ndarray) -> np.ndarray:
    """Column-mean imputation; all-missing columns become 0."""
    X = X.copy()
    for j in range(X.shape[1]):
        miss = np.isnan(X[:, j])
        if miss.any():
            X[miss, j] = X[~miss, j].mean() if (~miss).any() else 0.0
    return X


def first_scan_path(series: LongitudinalSeries):
    rec = series.records.get(Stage.PRE)
    if rec is None or not rec.scans:
        return None
    return rec.scans[0]


__all__ = [
    "ExtractResult", "FEATURE_COLUMNS", "HorizonData", "RowError", "STAGE_ORDER", "dynamics_all",
    "dp_model_columns", "extract_all", "group_by_eye", "horizon_data", "impute_columns",
    "read_features", "scan_image", "write_features",
]
