import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from mhprog.core_data import (
    DEFAULT_STAGE_DAYS, STAGE_ORDER, ClassLabel, LabeledScan, LongitudinalSeries, Orientation,
    OutcomeValue, PixelSpacing, Stage, StudyRecord, check_stage_days, clinical_columns,
    load_manifest, load_scan, outcome_label, write_scan,
)
from mhprog.errors import DuplicateStage, MalformedRow, MissingBcva, UnknownLabelCode, UnreadableImage

SP = PixelSpacing(10.0, 4.0)


def write_manifest(path, rows, header="eye_id,stage,bcva_etdrs,duration_days,age,scan_h,scan_v"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


# --- class labels and stages ----------------------------------------------------------

def test_class_label_codes_are_bijective():
    names = ["Background", "MacularHole", "Pseudocysts", "ERM", "Space", "VMT", "PVD", "ELM", "EZ", "RPE"]
    assert [c.name for c in ClassLabel] == names
    assert [int(c) for c in ClassLabel] == list(range(10))
    with pytest.raises(ValueError):
        ClassLabel(10)


def test_stage_nominal_days_are_monotone():
    days = [s.nominal_day for s in STAGE_ORDER]
    assert days == [0, 14, 90, 180, 365]
    assert all(a < b for a, b in zip(days, days[1:]))


def test_stage_days_must_increase():
    bad = dict(DEFAULT_STAGE_DAYS)
    bad[Stage.M3] = 10
    with pytest.raises(ValueError):
        check_stage_days(bad)


def test_stage_parse_is_case_insensitive():
    assert Stage.parse(" m12 ") is Stage.M12


@pytest.mark.parametrize("sx,sy", [(0, 1), (1, -2), (float("inf"), 1), (float("nan"), 1)])
def test_pixel_spacing_rejects_nonpositive(sx, sy):
    with pytest.raises(ValueError):
        PixelSpacing(sx, sy)


def test_labeled_scan_rejects_bad_codes_and_shapes():
    with pytest.raises(UnknownLabelCode) as exc:
        LabeledScan(np.array([[0, 11]]), SP)
    assert exc.value.code == 11 and exc.value.position == (0, 1)
    with pytest.raises(ValueError):
        LabeledScan(np.zeros((0, 4)), SP)


def test_labeled_scan_is_immutable():
    src = np.zeros((3, 3), dtype=np.uint8)
    scan = LabeledScan(src, SP)
    src[0, 0] = 1
    assert scan.labels[0, 0] == 0
    with pytest.raises(ValueError):
        scan.labels[0, 0] = 2


# --- outcome labels ---------------------------------------------------------------------

def _rec(stage, bcva):
    return StudyRecord("e", stage, bcva)


@pytest.mark.parametrize("pre,post,delta,value", [
    (45, 70, 25, OutcomeValue.Superior),
    (60, 80, 20, OutcomeValue.Superior),
    (50, 50, 0, OutcomeValue.NotSuperior),
])
def test_outcome_label_examples(pre, post, delta, value):
    lab = outcome_label(_rec(Stage.PRE, pre), _rec(Stage.M3, post))
    assert lab.delta_letters == delta
    assert lab.value is value


def test_outcome_label_threshold_15_flag():
    lab = outcome_label(_rec(Stage.PRE, 50), _rec(Stage.M3, 66), threshold=15)
    assert lab.superior


def test_outcome_label_missing_bcva():
    with pytest.raises(MissingBcva) as exc:
        outcome_label(_rec(Stage.PRE, 50), _rec(Stage.M6, None))
    assert exc.value.stage == "M6"


@given(st.integers(0, 100), st.integers(0, 100), st.integers(-100, 100), st.integers(0, 50))
def test_raising_threshold_never_creates_superior(pre, post, t, bump):
    lo = outcome_label(_rec(Stage.PRE, pre), _rec(Stage.W2, post), t)
    hi = outcome_label(_rec(Stage.PRE, pre), _rec(Stage.W2, post), t + bump)
    assert not (hi.superior and not lo.superior)
    assert lo.superior == (lo.delta_letters >= t)


# --- manifest -------------------------------------------------------------------------------

def test_manifest_two_eyes_five_stages(tmp_path):
    rows = [f"{e},{s.value},50,100,60,," for e in ("a", "b") for s in STAGE_ORDER]
    series = load_manifest(write_manifest(tmp_path / "m.csv", rows))
    assert [s.eye_id for s in series] == ["a", "b"]
    assert all(len(s.records) == 5 for s in series)


def test_manifest_duplicate_stage(tmp_path):
    rows = ["a,PRE,50,,,,", "a,PRE,52,,,,"]
    with pytest.raises(DuplicateStage):
        load_manifest(write_manifest(tmp_path / "m.csv", rows))


def test_manifest_blank_bcva_is_missing(tmp_path):
    rows = ["a,PRE,50,100,,,", "a,M6,,100,,,"]
    (s,) = load_manifest(write_manifest(tmp_path / "m.csv", rows))
    rec = s.records[Stage.M6]
    assert rec.bcva_etdrs is None
    assert s.records[Stage.PRE].is_missing("age")
    assert rec.clinical["duration_days"] == 100.0


def test_manifest_malformed_rows_are_numbered(tmp_path):
    rows = ["a,PRE,50,,,,", "b,W5,50,,,,", "c,PRE,abc,,,,", "d,PRE,50,1,2,,,extra"]
    path = write_manifest(tmp_path / "m.csv", rows)
    with pytest.raises(MalformedRow) as exc:
        load_manifest(path)
    assert exc.value.line == 3
    errors = []
    series = load_manifest(path, errors=errors)
    assert [s.eye_id for s in series] == ["a"]
    assert [e.line for e in errors] == [3, 4, 5]


def test_manifest_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "nope.csv")


def test_manifest_scan_paths_and_spacing_override(tmp_path):
    header = "eye_id,stage,bcva_etdrs,scan_h,scan_v,spacing_x,spacing_y,axial_length"
    rows = ["a,PRE,50,s/a_h.png,,5,3.5,23.1"]
    (s,) = load_manifest(write_manifest(tmp_path / "m.csv", rows, header))
    (ref,) = s.records[Stage.PRE].scans
    assert ref.path == tmp_path / "s" / "a_h.png"
    assert ref.orientation is Orientation.Horizontal
    assert ref.spacing == PixelSpacing(5.0, 3.5)
    assert clinical_columns([s]) == ["axial_length"]
    (s2,) = load_manifest(tmp_path / "m.csv", scan_root=tmp_path / "elsewhere")
    assert s2.records[Stage.PRE].scans[0].path == tmp_path / "elsewhere" / "s" / "a_h.png"


def test_series_add_and_order():
    s = LongitudinalSeries("x")
    s.add(StudyRecord("x", Stage.M3, 40))
    s.add(StudyRecord("x", Stage.PRE, 30))
    assert [r.stage for r in s.ordered()] == [Stage.PRE, Stage.M3]
    assert s.baseline.bcva_etdrs == 30
    with pytest.raises(DuplicateStage):
        s.add(StudyRecord("x", Stage.M3, 41))


def test_bcva_range_enforced():
    with pytest.raises(ValueError):
        StudyRecord("x", Stage.PRE, 101)


# --- scan I/O ----------------------------------------------------------------------------------

def test_load_all_zero_scan(tmp_path):
    p = tmp_path / "z.png"
    Image.fromarray(np.zeros((496, 512), dtype=np.uint8)).save(p)
    scan = load_scan(p, SP, "V")
    assert (scan.height, scan.width) == (496, 512)
    assert not scan.labels.any()
    assert scan.orientation is Orientation.Vertical


def test_load_scan_unknown_code(tmp_path):
    arr = np.zeros((5, 5), dtype=np.uint8)
    arr[2, 3] = 12
    p = tmp_path / "bad.png"
    Image.fromarray(arr).save(p)
    with pytest.raises(UnknownLabelCode) as exc:
        load_scan(p, SP)
    assert exc.value.code == 12 and exc.value.position == (2, 3)


def test_load_scan_with_hole_and_rpe(tmp_path):
    arr = np.zeros((6, 6), dtype=np.uint8)
    arr[1:3, 2:4] = ClassLabel.MacularHole
    arr[5, :] = ClassLabel.RPE
    p = tmp_path / "s.pgm"
    Image.fromarray(arr).save(p)
    scan = load_scan(p, SP)
    assert scan.mask(ClassLabel.MacularHole).sum() == 4
    assert scan.mask(ClassLabel.RPE).sum() == 6


def test_load_scan_rejects_rgb_and_garbage(tmp_path):
    p = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(p)
    with pytest.raises(UnreadableImage):
        load_scan(p, SP)
    q = tmp_path / "junk.png"
    q.write_bytes(b"not an image")
    with pytest.raises(UnreadableImage):
        load_scan(q, SP)


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20)), elements=st.integers(0, 9)),
       st.sampled_from(["png", "pgm"]))
def test_write_then_load_is_identity(tmp_path_factory, labels, ext):
    scan = LabeledScan(labels, SP, Orientation.Vertical)
    p = tmp_path_factory.mktemp("rt") / f"s.{ext}"
    write_scan(scan, p)
    assert load_scan(p, SP, Orientation.Vertical) == scan
