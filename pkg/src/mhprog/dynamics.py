"""Recovery-rate features from longitudinal lesion trajectories.

A lesion's recovery rate is its preoperative size divided by the number of
days until it is first seen resolved. Lesions never seen resolved are censored
and get rate 0, with the censoring flag carried as its own covariate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

from .core_data import DEFAULT_STAGE_DAYS, POSTOP_STAGES, STAGE_ORDER, LongitudinalSeries, Stage
from .errors import MissingBaseline, ZeroDay


class Lesion(str, enum.Enum):
    MacularHoleArea = "hole"
    PseudocystArea = "cyst"
    ElmDefect = "elm"
    EzDefect = "ez"

    @property
    def feature(self) -> str:
        return _FEATURE[self]

    @property
    def unit(self) -> str:
        return "um2" if self in (Lesion.MacularHoleArea, Lesion.PseudocystArea) else "um"


_FEATURE = {
    Lesion.MacularHoleArea: "hole_area_um2",
    Lesion.PseudocystArea: "pseudocyst_area_um2",
    Lesion.ElmDefect: "elm_defect_um",
    Lesion.EzDefect: "ez_defect_um",
}

# which circularity column drives the shape weight; band defects have no 2D shape
_SHAPE_FEATURE = {
    Lesion.MacularHoleArea: "hole_circularity",
    Lesion.PseudocystArea: "cyst_circularity",
}

DYNAMIC_COLUMNS = tuple(
    f"rr_{les.value}{suffix}" for les in Lesion for suffix in ("", "_w", "_censored")
)


@dataclass(frozen=True)
class LesionTrajectory:
    lesion: Lesion
    values: Mapping[Stage, float | None]

    def __post_init__(self):
        if self.values.get(Stage.PRE) is None:
            raise MissingBaseline(f"{self.lesion.name}: no preoperative size")
        for s, v in self.values.items():
            if v is not None and v < 0:
                raise ValueError(f"negative size {v} at {s.value}")

    @property
    def unit(self) -> str:
        return self.lesion.unit


@dataclass(frozen=True)
class Resolution:
    day: int | None
    censored: bool
    degenerate: bool = False


@dataclass(frozen=True)
class RecoveryRate:
    raw_rate: float
    weighted_rate: float
    censored: bool
    resolve_day: int | None
    shape_weight: float = 1.0
    degenerate: bool = False


def resolution_day(traj: LesionTrajectory, epsilon: float = 0.0,
                   stage_days: Mapping[Stage, int] = DEFAULT_STAGE_DAYS,
                   last_stage: Stage | None = None) -> Resolution:
    """Day of the earliest postoperative stage whose size is <= epsilon.

    Stages without a measurement are skipped. A lesion already <= epsilon before
    surgery resolves at the first measured postoperative stage, flagged degenerate.
    ``last_stage`` truncates the follow-up window.
    """
    pre = traj.values.get(Stage.PRE)
    if pre is None:
        raise MissingBaseline(traj.lesion.name)
    stages = [s for s in POSTOP_STAGES
              if last_stage is None or STAGE_ORDER.index(s) <= STAGE_ORDER.index(last_stage)]
    observed = [s for s in stages if traj.values.get(s) is not None]
    if pre <= epsilon:
        if not observed:
            return Resolution(None, censored=True, degenerate=True)
        return Resolution(stage_days[observed[0]], censored=False, degenerate=True)
    for s in observed:
        if traj.values[s] <= epsilon:
            return Resolution(stage_days[s], censored=False)
    return Resolution(None, censored=True)


def recovery_rate(initial: float, resolve_day: int) -> float:
    if resolve_day <= 0:
        raise ZeroDay(f"resolve day must be positive, got {resolve_day}")
    return initial / resolve_day


def weighted_recovery_rate(r: RecoveryRate, w: float) -> RecoveryRate:
    return RecoveryRate(
        raw_rate=r.raw_rate,
        weighted_rate=r.raw_rate * w,
        censored=r.censored,
        resolve_day=r.resolve_day,
        shape_weight=w,
        degenerate=r.degenerate,
    )


def lesion_recovery(traj: LesionTrajectory, epsilon: float = 0.0, weight: float = 1.0,
                    stage_days: Mapping[Stage, int] = DEFAULT_STAGE_DAYS,
                    last_stage: Stage | None = None) -> RecoveryRate:
    res = resolution_day(traj, epsilon, stage_days, last_stage)
    if res.censored:
        r = RecoveryRate(0.0, 0.0, True, None, degenerate=res.degenerate)
    else:
        raw = recovery_rate(traj.values[Stage.PRE], res.day)
        r = RecoveryRate(raw, raw, False, res.day, degenerate=res.degenerate)
    return weighted_recovery_rate(r, weight)


def trajectories(features: Mapping[Stage, object]) -> dict[Lesion, LesionTrajectory]:
    """Build one trajectory per lesion from per-stage FeatureVectors."""
    pre = features.get(Stage.PRE)
    if pre is None:
        raise MissingBaseline("no PRE feature vector")
    out = {}
    for les in Lesion:
        values = {s: fv.get(les.feature) for s, fv in features.items() if fv is not None}
        out[les] = LesionTrajectory(les, values)
    return out


def derive_dynamics(series: LongitudinalSeries | None, features: Mapping[Stage, object],
                    epsilon: Mapping[Lesion, float] | None = None, lam: float = 0.0,
                    stage_days: Mapping[Stage, int] = DEFAULT_STAGE_DAYS,
                    last_stage: Stage | None = None) -> dict[Lesion, RecoveryRate]:
    """Compute all four recovery rates and attach them to the PRE FeatureVector.

    The shape weight is 1 + lam*(1 - c), with c the preoperative circularity of
    the lesion (hole and pseudocyst only); ``lam=0`` disables weighting.
    A lesion whose PRE measurement is undefined yields a censored, degenerate rate.
    """
    if Stage.PRE not in features or features[Stage.PRE] is None:
        eye = series.eye_id if series is not None else "?"
        raise MissingBaseline(f"eye {eye!r}: no PRE features")
    epsilon = epsilon or {}
    pre_fv = features[Stage.PRE]
    rates = {}
    for les in Lesion:
        values = {s: fv.get(les.feature) for s, fv in features.items() if fv is not None}
        if values.get(Stage.PRE) is None:
            rates[les] = RecoveryRate(0.0, 0.0, True, None, degenerate=True)
            continue
        weight = 1.0
        shape_col = _SHAPE_FEATURE.get(les)
        if lam and shape_col is not None:
            c = pre_fv.get(shape_col)
            if c is not None:
                weight = 1.0 + lam * (1.0 - c)
        traj = LesionTrajectory(les, values)
        rates[les] = lesion_recovery(traj, epsilon.get(les, 0.0), weight, stage_days, last_stage)
    pre_fv.dynamics.update(dynamic_row(rates))
    return rates


def dynamic_row(rates: Mapping[Lesion, RecoveryRate]) -> dict:
    row = {}
    for les in Lesion:
        r = rates[les]
        row[f"rr_{les.value}"] = r.raw_rate
        row[f"rr_{les.value}_w"] = r.weighted_rate
        row[f"rr_{les.value}_censored"] = r.censored
    return row
