"""Data model for longitudinal macular-hole OCT studies, plus manifest and scan I/O."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DuplicateStage,
    MalformedRow,
    MissingBcva,
    UnknownLabelCode,
    UnreadableImage,
)


class ClassLabel(enum.IntEnum):
    Background = 0
    MacularHole = 1
    Pseudocysts = 2
    ERM = 3
    Space = 4
    VMT = 5
    PVD = 6
    ELM = 7
    EZ = 8
    RPE = 9


N_CLASSES = len(ClassLabel)


class Orientation(str, enum.Enum):
    Horizontal = "H"
    Vertical = "V"


class Stage(str, enum.Enum):
    PRE = "PRE"
    W2 = "W2"
    M3 = "M3"
    M6 = "M6"
    M12 = "M12"

    @property
    def nominal_day(self) -> int:
        return DEFAULT_STAGE_DAYS[self]

    @property
    def order(self) -> int:
        return STAGE_ORDER.index(self)

    @classmethod
    def parse(cls, text: str) -> "Stage":
        return cls(text.strip().upper())


STAGE_ORDER = (Stage.PRE, Stage.W2, Stage.M3, Stage.M6, Stage.M12)
DEFAULT_STAGE_DAYS = {Stage.PRE: 0, Stage.W2: 14, Stage.M3: 90, Stage.M6: 180, Stage.M12: 365}
POSTOP_STAGES = STAGE_ORDER[1:]


def check_stage_days(days: Mapping[Stage, int]) -> dict[Stage, int]:
    """Validate a stage->day map: complete, PRE at 0 and strictly increasing."""
    out = {s: int(days[s]) for s in STAGE_ORDER}
    seq = [out[s] for s in STAGE_ORDER]
    if any(b <= a for a, b in zip(seq, seq[1:])):
        raise ValueError(f"stage days must be strictly increasing, got {seq}")
    if out[Stage.PRE] != 0:
        raise ValueError("PRE must map to day 0")
    return out


@dataclass(frozen=True)
class PixelSpacing:
    um_per_px_x: float
    um_per_px_y: float

    def __post_init__(self):
        for v in (self.um_per_px_x, self.um_per_px_y):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"pixel spacing must be positive and finite, got {v}")

    @property
    def pixel_area(self) -> float:
        return self.um_per_px_x * self.um_per_px_y


@dataclass(frozen=True, eq=False)
class LabeledScan:
    """A 2D grid of class codes. ``labels[row, col]``, row 0 at the top."""

    labels: np.ndarray
    spacing: PixelSpacing
    orientation: Orientation = Orientation.Horizontal

    def __post_init__(self):
        arr = np.array(self.labels, dtype=np.uint8, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"labels must be a non-empty 2D grid, got shape {arr.shape}")
        _check_codes(np.asarray(self.labels))
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def mask(self, label: ClassLabel) -> np.ndarray:
        return self.labels == int(label)

    def __eq__(self, other):
        if not isinstance(other, LabeledScan):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.orientation == other.orientation
            and np.array_equal(self.labels, other.labels)
        )


def _check_codes(arr: np.ndarray) -> None:
    bad = (arr < 0) | (arr >= N_CLASSES)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise UnknownLabelCode(int(arr[r, c]), (int(r), int(c)))


@dataclass(frozen=True)
class ScanRef:
    path: Path
    orientation: Orientation
    spacing: PixelSpacing | None = None


@dataclass(frozen=True)
class StudyRecord:
    eye_id: str
    stage: Stage
    bcva_etdrs: int | None = None
    clinical: Mapping[str, float | None] = field(default_factory=dict)
    scans: tuple = ()

    def __post_init__(self):
        if self.bcva_etdrs is not None and not 0 <= self.bcva_etdrs <= 100:
            raise ValueError(f"BCVA {self.bcva_etdrs} outside [0, 100]")
        if len(self.scans) > 2:
            raise ValueError("a record holds at most two scans")

    def is_missing(self, name: str) -> bool:
        return self.clinical.get(name) is None


@dataclass
class LongitudinalSeries:
    eye_id: str
    records: dict[Stage, StudyRecord] = field(default_factory=dict)

    def add(self, record: StudyRecord) -> None:
        if record.stage in self.records:
            raise DuplicateStage(self.eye_id, record.stage.value)
        self.records[record.stage] = record

    @property
    def baseline(self) -> StudyRecord | None:
        return self.records.get(Stage.PRE)

    def ordered(self) -> list[StudyRecord]:
        return [self.records[s] for s in STAGE_ORDER if s in self.records]


class OutcomeValue(str, enum.Enum):
    Superior = "Superior"
    NotSuperior = "NotSuperior"


@dataclass(frozen=True)
class OutcomeLabel:
    value: OutcomeValue
    delta_letters: int

    @property
    def superior(self) -> bool:
        return self.value is OutcomeValue.Superior


def outcome_label(pre: StudyRecord, post: StudyRecord, threshold: int = 20) -> OutcomeLabel:
    """Label the BCVA change from ``pre`` to ``post``; Superior when the gain is >= threshold letters."""
    if pre.bcva_etdrs is None:
        raise MissingBcva(pre.stage.value)
    if post.bcva_etdrs is None:
        raise MissingBcva(post.stage.value)
    delta = post.bcva_etdrs - pre.bcva_etdrs
    value = OutcomeValue.Superior if delta >= threshold else OutcomeValue.NotSuperior
    return OutcomeLabel(value, delta)


# --- manifest ---------------------------------------------------------------

RESERVED_COLUMNS = ("eye_id", "stage", "bcva_etdrs", "scan_h", "scan_v", "spacing_x", "spacing_y")


def _parse_number(text: str, line: int, column: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(line, f"column {column!r}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise MalformedRow(line, f"column {column!r}: non-finite value {text!r}")
    return value


def _parse_row(row: dict, line: int, root: Path) -> StudyRecord:
    eye_id = (row.get("eye_id") or "").strip()
    if not eye_id:
        raise MalformedRow(line, "empty eye_id")
    try:
        stage = Stage.parse(row.get("stage") or "")
    except ValueError:
        raise MalformedRow(line, f"unknown stage {row.get('stage')!r}") from None

    bcva_text = (row.get("bcva_etdrs") or "").strip()
    bcva = None
    if bcva_text:
        try:
            bcva = int(bcva_text)
        except ValueError:
            raise MalformedRow(line, f"bcva_etdrs {bcva_text!r} is not an integer") from None
        if not 0 <= bcva <= 100:
            raise MalformedRow(line, f"bcva_etdrs {bcva} outside [0, 100]")

    clinical = {}
    for name, text in row.items():
        if name is None or name in RESERVED_COLUMNS:
            continue
        clinical[name] = _parse_number(text or "", line, name)

    sx = _parse_number(row.get("spacing_x") or "", line, "spacing_x")
    sy = _parse_number(row.get("spacing_y") or "", line, "spacing_y")
    spacing = None
    if sx is not None or sy is not None:
        if sx is None or sy is None:
            raise MalformedRow(line, "spacing_x and spacing_y must be given together")
        try:
            spacing = PixelSpacing(sx, sy)
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None

    scans = []
    for column, orient in (("scan_h", Orientation.Horizontal), ("scan_v", Orientation.Vertical)):
        rel = (row.get(column) or "").strip()
        if rel:
            scans.append(ScanRef(root / rel, orient, spacing))
    return StudyRecord(eye_id, stage, bcva, clinical, tuple(scans))


def load_manifest(path, errors: list | None = None, scan_root=None) -> list[LongitudinalSeries]:
    """Read a study manifest CSV into one series per eye, in first-seen order.

    Relative scan paths are resolved against ``scan_root`` (default: the
    manifest's directory). If ``errors`` is
    a list, malformed rows are appended to it and skipped; otherwise the first
    one is raised. Duplicate (eye, stage) pairs always raise.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    series: dict[str, LongitudinalSeries] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        for col in ("eye_id", "stage"):
            if col not in reader.fieldnames:
                raise MalformedRow(1, f"missing required column {col!r}")
        for line, row in enumerate(reader, start=2):
            if None in row:
                exc = MalformedRow(line, "more fields than header columns")
            else:
                try:
                    record = _parse_row(row, line, Path(scan_root) if scan_root is not None else path.parent)
                    exc = None
                except MalformedRow as e:
                    exc = e
            if exc is not None:
                if errors is None:
                    raise exc
                errors.append(exc)
                continue
            s = series.setdefault(record.eye_id, LongitudinalSeries(record.eye_id))
            s.add(record)
    return list(series.values())


def clinical_columns(series_list) -> list[str]:
    """Covariate names seen across all records, in first-seen order."""
    names: dict[str, None] = {}
    for s in series_list:
        for rec in s.ordered():
            for name in rec.clinical:
                names.setdefault(name, None)
    return list(names)


# --- scans ------------------------------------------------------------------

def load_scan(path, spacing: PixelSpacing, orientation=Orientation.Horizontal) -> LabeledScan:
    """Load an 8-bit single-channel label image (PNG or PGM)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "P", "I", "I;16", "1"):
                raise UnreadableImage(f"{path}: expected single-channel image, got mode {img.mode}")
            arr = np.array(img)
    except (OSError, UnidentifiedImageError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise UnreadableImage(f"{path}: {exc}") from exc
    arr = arr.astype(np.int64)
    _check_codes(arr)
    return LabeledScan(arr, spacing, Orientation(orientation))


def write_scan(scan: LabeledScan, path) -> None:
    Image.fromarray(scan.labels).save(Path(path))
