"""Macular-hole OCT morphometry, recovery dynamics and outcome prediction."""

from .core_data import (
    ClassLabel, LabeledScan, LongitudinalSeries, Orientation, OutcomeLabel, PixelSpacing, Stage,
    StudyRecord, load_manifest, load_scan, outcome_label,
)
from .dynamics import Lesion, RecoveryRate, derive_dynamics
from .errors import MhprogError
from .morphometry import FeatureVector, extract_features, measure_band_defect, measure_hole

__version__ = "0.1.0"

__all__ = [
    "ClassLabel", "FeatureVector", "LabeledScan", "Lesion", "LongitudinalSeries", "MhprogError",
    "Orientation", "OutcomeLabel", "PixelSpacing", "RecoveryRate", "Stage", "StudyRecord",
    "derive_dynamics", "extract_features", "load_manifest", "load_scan", "measure_band_defect",
    "measure_hole", "outcome_label",
]
