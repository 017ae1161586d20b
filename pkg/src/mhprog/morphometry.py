"""Quantitative, composite and qualitative parameters from a labeled B-scan.

Widths are measured along image rows, i.e. the scan is assumed flattened so
that rows run parallel to the RPE. The base of the hole is its bottom-most row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import ndimage

from .core_data import ClassLabel, LabeledScan, Orientation, PixelSpacing, Stage, StudyRecord
from .errors import EmptyComponent, NoScans

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class HoleGeometry:
    mld_um: float = 0.0
    bd_um: float = 0.0
    e_um: float = 0.0
    height_um: float = 0.0
    hole_area_um2: float = 0.0
    pseudocyst_area_um2: float = 0.0
    hole_present: bool = False


@dataclass(frozen=True)
class BandDefect:
    """Defect lengths in micrometers; ``None`` when the band has no pixels at all."""

    elm_defect_um: float | None = 0.0
    ez_defect_um: float | None = 0.0


@dataclass(frozen=True)
class CompositeIndices:
    """Ratios; ``None`` marks an undefined value (zero denominator)."""

    mhi: float | None = None
    thi: float | None = None
    dhi: float | None = None
    area_ratio: float | None = None


@dataclass(frozen=True)
class QualitativeFlags:
    erm_present: bool = False
    traction_space_present: bool = False


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Largest 4-connected component of ``mask``; ties go to the first in raster order."""
    labels, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def row_widths(component: np.ndarray) -> dict[int, int]:
    """Map row index -> (rightmost - leftmost + 1) for every row the component touches."""
    out = {}
    for r in np.flatnonzero(component.any(axis=1)):
        cols = np.flatnonzero(component[r])
        out[int(r)] = int(cols[-1] - cols[0] + 1)
    return out


def hole_pixels(scan: LabeledScan) -> dict:
    """Integer pixel measurements of the hole, before spacing is applied."""
    comp = largest_component(scan.mask(ClassLabel.MacularHole))
    n_cyst = int(scan.mask(ClassLabel.Pseudocysts).sum())
    if not comp.any():
        return dict(present=False, mld=0, bd=0, e=0, height=0, area=0, cyst_area=n_cyst)
    widths = row_widths(comp)
    rows = sorted(widths)
    base = rows[-1]
    mld = min(widths.values())
    # tie-break: the narrowest row closest to the base
    mld_row = max(r for r in rows if widths[r] == mld)
    return dict(
        present=True,
        mld=mld,
        bd=widths[base],
        e=abs(base - mld_row),
        height=rows[-1] - rows[0] + 1,
        area=int(comp.sum()),
        cyst_area=n_cyst,
    )


def measure_hole(scan: LabeledScan) -> HoleGeometry:
    px = hole_pixels(scan)
    sx, sy = scan.spacing.um_per_px_x, scan.spacing.um_per_px_y
    return HoleGeometry(
        mld_um=px["mld"] * sx,
        bd_um=px["bd"] * sx,
        e_um=px["e"] * sy,
        height_um=px["height"] * sy,
        hole_area_um2=px["area"] * sx * sy,
        pseudocyst_area_um2=px["cyst_area"] * sx * sy,
        hole_present=px["present"],
    )


def band_gap_columns(column_occupied: np.ndarray) -> int | None:
    """Longest run of empty columns strictly inside the occupied support; None if nothing is occupied."""
    cols = np.flatnonzero(column_occupied)
    if cols.size == 0:
        return None
    gaps = np.diff(cols) - 1
    return int(gaps.max()) if gaps.size else 0


def measure_band_defect(scan: LabeledScan, band: ClassLabel) -> float | None:
    """Longest interruption of the ELM or EZ band in micrometers.

    Returns None when the band is absent from the scan entirely.
    """
    band = ClassLabel(band)
    if band not in (ClassLabel.ELM, ClassLabel.EZ):
        raise ValueError(f"band must be ELM or EZ, got {band.name}")
    gap = band_gap_columns(scan.mask(band).any(axis=0))
    if gap is None:
        return None
    return gap * scan.spacing.um_per_px_x


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else None


def composite_indices(g: HoleGeometry) -> CompositeIndices:
    """Ratio indices; None where a denominator is zero.

    A zero MLD is an unmeasured caliper, so DHI (MLD/BD) is undefined with it.
    """
    return CompositeIndices(
        mhi=_ratio(g.height_um, g.bd_um),
        thi=_ratio(g.height_um, g.mld_um),
        dhi=_ratio(g.mld_um, g.bd_um) if g.mld_um > 0 else None,
        area_ratio=_ratio(g.hole_area_um2, g.pseudocyst_area_um2),
    )


def qualitative_flags(scan: LabeledScan, min_pixels: int = 10) -> QualitativeFlags:
    if min_pixels < 1:
        raise ValueError("min_pixels must be >= 1")
    return QualitativeFlags(
        erm_present=int(scan.mask(ClassLabel.ERM).sum()) >= min_pixels,
        traction_space_present=int(scan.mask(ClassLabel.Space).sum()) >= min_pixels,
    )


# --- shape ------------------------------------------------------------------

def boundary_length(mask: np.ndarray, spacing: PixelSpacing) -> float:
    """Physical length of the outer boundary, counted as exposed 4-neighbour pixel edges.

    Interior holes are filled first so only the outer contour counts. Edges
    facing up/down have length ``um_per_px_x``; edges facing left/right ``um_per_px_y``.
    """
    filled = ndimage.binary_fill_holes(mask)
    padded = np.pad(filled, 1).astype(np.int8)
    vertical_edges = np.abs(np.diff(padded, axis=0)).sum()
    horizontal_edges = np.abs(np.diff(padded, axis=1)).sum()
    return float(vertical_edges * spacing.um_per_px_x + horizontal_edges * spacing.um_per_px_y)


def circularity(mask: np.ndarray, spacing: PixelSpacing) -> float:
    """4*pi*A / P**2 for one component, clamped into (0, 1]."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyComponent("circularity of an empty pixel set")
    area = float(ndimage.binary_fill_holes(mask).sum()) * spacing.pixel_area
    perim = boundary_length(mask, spacing)
    return min(1.0, 4.0 * math.pi * area / perim**2)


def shape_weight(mask: np.ndarray, spacing: PixelSpacing, lam: float = 1.0) -> float:
    """Multiplicative rate weight 1 + lam*(1 - circularity); lies in [1, 1 + lam]."""
    if lam == 0:
        return 1.0
    return 1.0 + lam * (1.0 - circularity(mask, spacing))


# --- feature vector ---------------------------------------------------------

VALUE_COLUMNS = (
    "mld_um", "bd_um", "e_um", "height_um", "hole_area_um2", "pseudocyst_area_um2",
    "elm_defect_um", "ez_defect_um", "mhi", "thi", "dhi", "area_ratio",
    "erm_present", "traction_space_present",
)
SHAPE_COLUMNS = ("hole_circularity", "cyst_circularity")


@dataclass
class ScanMeasurement:
    """Everything measured on one scan, kept for audit."""

    orientation: Orientation
    geometry: HoleGeometry
    bands: BandDefect
    indices: CompositeIndices
    flags: QualitativeFlags
    hole_circularity: float | None
    cyst_circularity: float | None


def measure_scan(scan: LabeledScan, min_pixels: int = 10) -> ScanMeasurement:
    g = measure_hole(scan)
    hole = largest_component(scan.mask(ClassLabel.MacularHole))
    cyst = largest_component(scan.mask(ClassLabel.Pseudocysts))
    return ScanMeasurement(
        orientation=scan.orientation,
        geometry=g,
        bands=BandDefect(
            measure_band_defect(scan, ClassLabel.ELM),
            measure_band_defect(scan, ClassLabel.EZ),
        ),
        indices=composite_indices(g),
        flags=qualitative_flags(scan, min_pixels),
        hole_circularity=circularity(hole, scan.spacing) if hole.any() else None,
        cyst_circularity=circularity(cyst, scan.spacing) if cyst.any() else None,
    )


@dataclass
class FeatureVector:
    """The per-(eye, stage) parameter set. ``None`` means undefined or missing."""

    eye_id: str
    stage: Stage
    values: dict = field(default_factory=dict)
    orientations: tuple = ()
    per_scan: list = field(default_factory=list)
    dynamics: dict = field(default_factory=dict)

    def get(self, name):
        if name in self.values:
            return self.values[name]
        return self.dynamics.get(name)

    def is_defined(self, name) -> bool:
        return self.get(name) is not None


def _mean_defined(vals):
    vals = [v for v in vals if v is not None]
    return sum(vals) / len(vals) if vals else None


def combine_measurements(eye_id: str, stage: Stage, ms: list[ScanMeasurement]) -> FeatureVector:
    """Merge per-orientation measurements: mean of defined scalars, OR of flags."""
    values = {}
    for name in ("mld_um", "bd_um", "e_um", "height_um", "hole_area_um2", "pseudocyst_area_um2"):
        values[name] = _mean_defined([getattr(m.geometry, name) for m in ms])
    for name in ("elm_defect_um", "ez_defect_um"):
        values[name] = _mean_defined([getattr(m.bands, name) for m in ms])
    for f in fields(CompositeIndices):
        values[f.name] = _mean_defined([getattr(m.indices, f.name) for m in ms])
    values["erm_present"] = any(m.flags.erm_present for m in ms)
    values["traction_space_present"] = any(m.flags.traction_space_present for m in ms)
    values["hole_circularity"] = _mean_defined([m.hole_circularity for m in ms])
    values["cyst_circularity"] = _mean_defined([m.cyst_circularity for m in ms])
    for k, v in values.items():
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError(f"non-finite feature {k}={v}")
    return FeatureVector(
        eye_id, stage, values,
        orientations=tuple(m.orientation.value for m in ms),
        per_scan=list(ms),
    )


def extract_features(record: StudyRecord, scans: list[LabeledScan] | None = None,
                     min_pixels: int = 10, loader=None) -> FeatureVector:
    """Measure every scan of ``record`` and combine them into one FeatureVector.

    ``scans`` may be given directly; otherwise ``loader(scan_ref)`` is called for
    each reference on the record.
    """
    if scans is None:
        if loader is None:
            raise ValueError("need either scans or a loader")
        scans = [loader(ref) for ref in record.scans]
    if not scans:
        raise NoScans(record.eye_id, record.stage.value)
    ms = [measure_scan(s, min_pixels) for s in scans]
    return combine_measurements(record.eye_id, record.stage, ms)


def with_spacing(scan: LabeledScan, spacing: PixelSpacing) -> LabeledScan:
    return replace(scan, spacing=spacing)
