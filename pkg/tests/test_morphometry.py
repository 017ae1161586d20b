import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhprog.core_data import ClassLabel, LabeledScan, Orientation, PixelSpacing, Stage, StudyRecord
from mhprog.errors import EmptyComponent, NoScans
from mhprog.morphometry import (
    HoleGeometry, circularity, composite_indices, extract_features, hole_pixels, largest_component,
    measure_band_defect, measure_hole, qualitative_flags, shape_weight, with_spacing,
)

from oracles import band_gap_oracle, circularity_oracle, flood_components, hole_oracle, random_band, random_hole_mask

SP = PixelSpacing(10.0, 4.0)


def scan_from(hole=None, shape=(80, 140), spacing=SP, **extra):
    lab = np.zeros(shape, dtype=np.uint8)
    if hole is not None:
        lab[hole] = ClassLabel.MacularHole
    for name, m in extra.items():
        lab[m] = ClassLabel[name]
    return LabeledScan(lab, spacing)


def hourglass(width_top=100, width_mid=40, height=21, shape=(40, 140)):
    m = np.zeros(shape, dtype=bool)
    cx = shape[1] // 2
    mid = height // 2
    for k in range(height):
        w = int(round(width_mid + (width_top - width_mid) * abs(k - mid) / mid))
        m[5 + k, cx - w // 2: cx - w // 2 + w] = True
    return m


# --- hole geometry ----------------------------------------------------------------------

def test_rectangle_hole():
    m = np.zeros((80, 140), dtype=bool)
    m[10:60, 20:120] = True
    g = measure_hole(scan_from(m))
    assert (g.mld_um, g.bd_um, g.e_um, g.height_um) == (1000, 1000, 0, 200)
    assert g.hole_area_um2 == 200000
    assert g.hole_present


def test_hourglass_hole_matches_row_scan():
    m = hourglass()
    g = measure_hole(scan_from(m, shape=m.shape))
    px = hole_oracle(m, np.zeros_like(m))
    assert g.bd_um == 1000 and g.mld_um == 400
    assert g.e_um == 10 * 4  # half-height of a 21-row hourglass
    assert (g.mld_um, g.bd_um, g.e_um) == (px["mld"] * 10, px["bd"] * 10, px["e"] * 4)


def test_no_hole_gives_zero_geometry():
    g = measure_hole(scan_from())
    assert not g.hole_present
    assert g == HoleGeometry(0, 0, 0, 0, 0, 0, False)


def test_mld_tie_takes_row_nearest_base():
    m = np.zeros((20, 30), dtype=bool)
    m[2, 5:10] = True     # width 5, far from base
    m[3:6, 5:20] = True
    m[6, 5:10] = True     # width 5, near base
    m[7, 5:25] = True     # base row, width 20
    px = hole_pixels(scan_from(m, shape=m.shape))
    assert px["mld"] == 5 and px["bd"] == 20 and px["e"] == 1


def test_pseudocyst_area_sums_all_components():
    cyst = np.zeros((30, 30), dtype=bool)
    cyst[1:3, 1:3] = True
    cyst[10:13, 20:23] = True
    g = measure_hole(scan_from(shape=(30, 30), Pseudocysts=cyst))
    assert g.pseudocyst_area_um2 == (4 + 9) * 40


def test_largest_component_matches_flood_fill():
    rng = np.random.default_rng(3)
    for _ in range(30):
        m = rng.random((25, 25)) < 0.5
        comps = flood_components(m)
        best = max(comps, key=len) if comps else []
        got = largest_component(m)
        assert got.sum() == len(best)
        if best:
            assert all(got[p] for p in best)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_hole_geometry_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    m = random_hole_mask(rng)
    cyst = (rng.random(m.shape) < 0.05) & ~m
    scan = scan_from(m, shape=m.shape, Pseudocysts=cyst)
    assert hole_pixels(scan) == hole_oracle(m, cyst)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(-5, 5), st.integers(-5, 5))
def test_translation_invariance(seed, dy, dx):
    rng = np.random.default_rng(seed)
    m = np.zeros((60, 80), dtype=bool)
    m[10:50, 10:70] = random_hole_mask(rng, 40, 60)
    shifted = np.roll(np.roll(m, dy, axis=0), dx, axis=1)
    assert measure_hole(scan_from(m, shape=m.shape)) == measure_hole(scan_from(shifted, shape=m.shape))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.5, 20), st.floats(0.5, 20))
def test_scale_equivariance(seed, sx, sy):
    rng = np.random.default_rng(seed)
    m = random_hole_mask(rng)
    lab = np.zeros(m.shape, dtype=np.uint8)
    lab[m] = ClassLabel.MacularHole
    lab[-2, ::3] = ClassLabel.EZ
    base = LabeledScan(lab, PixelSpacing(sx, sy))
    a, b = measure_hole(base), measure_hole(with_spacing(base, PixelSpacing(2 * sx, sy)))
    assert b.mld_um == pytest.approx(2 * a.mld_um) and b.bd_um == pytest.approx(2 * a.bd_um)
    assert b.height_um == pytest.approx(a.height_um) and b.hole_area_um2 == pytest.approx(2 * a.hole_area_um2)
    assert measure_band_defect(with_spacing(base, PixelSpacing(2 * sx, sy)), ClassLabel.EZ) == pytest.approx(
        2 * measure_band_defect(base, ClassLabel.EZ))
    c = measure_hole(with_spacing(base, PixelSpacing(sx, 2 * sy)))
    assert c.height_um == pytest.approx(2 * a.height_um) and c.e_um == pytest.approx(2 * a.e_um)
    assert c.hole_area_um2 == pytest.approx(2 * a.hole_area_um2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_smaller_disjoint_component_is_ignored(seed):
    rng = np.random.default_rng(seed)
    big = np.zeros((50, 80), dtype=bool)
    h, w = int(rng.integers(4, 20)), int(rng.integers(10, 40))
    big[2:2 + h, 2:2 + w] = True
    speck = np.zeros_like(big)
    sh, sw = int(rng.integers(1, h)), int(rng.integers(1, w))
    speck[30:30 + sh, 50:50 + sw] = True
    assert measure_hole(scan_from(big | speck, shape=big.shape)) == measure_hole(scan_from(big, shape=big.shape))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_mld_bounds_every_row_and_bd_is_base_width(seed):
    m = random_hole_mask(np.random.default_rng(seed))
    px = hole_pixels(scan_from(m, shape=m.shape))
    comp = largest_component(m)
    rows = np.flatnonzero(comp.any(axis=1))
    for r in rows:
        cols = np.flatnonzero(comp[r])
        assert px["mld"] <= cols[-1] - cols[0] + 1
    if rows.size:
        cols = np.flatnonzero(comp[rows[-1]])
        assert px["bd"] == cols[-1] - cols[0] + 1


# --- band defects ------------------------------------------------------------------------------

def band_scan(band_mask, label=ClassLabel.EZ):
    lab = np.zeros(band_mask.shape, dtype=np.uint8)
    lab[band_mask] = label
    return LabeledScan(lab, SP)


def test_band_gap_of_100_columns():
    b = np.zeros((3, 300), dtype=bool)
    b[1, 0:100] = b[1, 200:300] = True
    assert measure_band_defect(band_scan(b), ClassLabel.EZ) == 1000


def test_continuous_band_has_no_defect():
    b = np.zeros((3, 300), dtype=bool)
    b[1, :] = True
    assert measure_band_defect(band_scan(b, ClassLabel.ELM), ClassLabel.ELM) == 0


def test_longest_gap_wins():
    b = np.zeros((3, 300), dtype=bool)
    b[1, :] = True
    b[1, 20:50] = False
    b[1, 100:180] = False
    assert measure_band_defect(band_scan(b), ClassLabel.EZ) == 80 * 10
    assert band_gap_oracle(b) == 80


def test_absent_band_is_undefined_and_other_bands_rejected():
    scan = band_scan(np.zeros((3, 10), dtype=bool))
    assert measure_band_defect(scan, ClassLabel.EZ) is None
    with pytest.raises(ValueError):
        measure_band_defect(scan, ClassLabel.RPE)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_band_defect_matches_column_oracle(seed):
    b = random_band(np.random.default_rng(seed))
    got = measure_band_defect(band_scan(b), ClassLabel.EZ)
    want = band_gap_oracle(b)
    assert got == (None if want is None else want * 10.0)


# --- composite indices and flags ------------------------------------------------------------

def test_composite_example():
    c = composite_indices(HoleGeometry(400, 1000, 0, 200, 200000, 50000, True))
    assert c.mhi == pytest.approx(0.2) and c.thi == pytest.approx(0.5) and c.dhi == pytest.approx(0.4)
    assert c.mhi == pytest.approx(c.thi * c.dhi, rel=1e-12)
    assert c.area_ratio == 4.0


def test_zero_mld_leaves_mhi_defined():
    c = composite_indices(HoleGeometry(0, 1000, 0, 200, 0, 0, True))
    assert c.thi is None and c.dhi is None and c.mhi == pytest.approx(0.2)
    assert c.area_ratio is None
    b = composite_indices(HoleGeometry(400, 0, 0, 200, 0, 0, True))
    assert b.mhi is None and b.dhi is None and b.thi == pytest.approx(0.5)


@given(st.floats(1e-3, 1e4), st.floats(1e-3, 1e4), st.floats(1e-3, 1e4))
def test_mhi_equals_thi_times_dhi(mld, bd, height):
    c = composite_indices(HoleGeometry(mld, bd, 0, height, 1, 1, True))
    assert abs(c.mhi - c.thi * c.dhi) <= 1e-12 * abs(c.mhi)


def test_qualitative_flag_examples():
    erm = np.zeros((40, 40), dtype=bool)
    erm[:, :] = False
    erm[0:10, 0:40] = True
    erm[10:12, 0:25] = True
    assert erm.sum() == 450
    erm[12, 0:40] = True
    erm[13, 0:10] = True
    assert erm.sum() == 500
    f = qualitative_flags(scan_from(shape=(40, 40), ERM=erm))
    assert (f.erm_present, f.traction_space_present) == (True, False)
    few = np.zeros((40, 40), dtype=bool)
    few[0, :3] = True
    assert not qualitative_flags(scan_from(shape=(40, 40), ERM=few), 10).erm_present
    blank = qualitative_flags(scan_from(shape=(40, 40)))
    assert (blank.erm_present, blank.traction_space_present) == (False, False)
    with pytest.raises(ValueError):
        qualitative_flags(scan_from(shape=(4, 4)), 0)


# --- feature extraction -------------------------------------------------------------------------

def _rect_scan(width_px, orientation, erm=False):
    lab = np.zeros((50, 200), dtype=np.uint8)
    lab[10:30, 50:50 + width_px] = ClassLabel.MacularHole
    if erm:
        lab[2, 10:40] = ClassLabel.ERM
    return LabeledScan(lab, SP, orientation)


def test_extract_means_h_and_v():
    rec = StudyRecord("e", Stage.PRE, 40)
    fv = extract_features(rec, [_rect_scan(100, Orientation.Horizontal), _rect_scan(120, Orientation.Vertical)])
    assert fv.get("bd_um") == 1100
    assert fv.orientations == ("H", "V")


def test_extract_single_scan_passes_through():
    rec = StudyRecord("e", Stage.PRE, 40)
    fv = extract_features(rec, [_rect_scan(100, Orientation.Horizontal)])
    assert fv.get("bd_um") == 1000 and fv.get("mld_um") == 1000
    assert fv.get("elm_defect_um") is None  # band absent
    assert fv.get("area_ratio") is None


def test_extract_ors_flags():
    rec = StudyRecord("e", Stage.PRE, 40)
    fv = extract_features(rec, [_rect_scan(100, Orientation.Horizontal),
                                _rect_scan(100, Orientation.Vertical, erm=True)])
    assert fv.get("erm_present") is True


def test_extract_without_scans():
    with pytest.raises(NoScans):
        extract_features(StudyRecord("e", Stage.W2, 40), [])


# --- circularity and shape weight ------------------------------------------------------------------

def disc(r, pad=3):
    n = 2 * r + 1 + 2 * pad
    yy, xx = np.mgrid[:n, :n]
    c = n // 2
    return (yy - c) ** 2 + (xx - c) ** 2 <= r * r


@pytest.mark.parametrize("r", [5, 20, 60])
def test_disc_circularity_matches_edge_walk(r):
    m = disc(r)
    sp = PixelSpacing(1.0, 1.0)
    assert circularity(m, sp) == pytest.approx(circularity_oracle(m, 1.0, 1.0), rel=1e-12)


def test_large_disc_tends_to_pi_squared_over_16():
    # the 4-connected edge-count perimeter of a digital disc approaches 8r, so c -> pi^2/16
    c = circularity(disc(150), PixelSpacing(1.0, 1.0))
    assert c == pytest.approx(math.pi**2 / 16, abs=0.01)
    assert shape_weight(disc(150), PixelSpacing(1.0, 1.0)) == pytest.approx(2 - c)


def test_line_is_far_from_circular():
    m = np.zeros((3, 52), dtype=bool)
    m[1, 1:51] = True
    c = circularity(m, PixelSpacing(1.0, 1.0))
    assert c == pytest.approx(4 * math.pi * 50 / (2 * 50 + 2) ** 2, rel=1e-12)
    assert shape_weight(m, PixelSpacing(1.0, 1.0), lam=1.0) == pytest.approx(2 - c)
    assert shape_weight(m, PixelSpacing(1.0, 1.0), lam=1.0) > 1.8


def test_lambda_zero_weight_is_one():
    assert shape_weight(disc(4), SP, lam=0.0) == 1.0


def test_empty_component_rejected():
    with pytest.raises(EmptyComponent):
        shape_weight(np.zeros((4, 4), dtype=bool), SP)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 3))
def test_shape_weight_bounds(seed, lam):
    m = largest_component(random_hole_mask(np.random.default_rng(seed)))
    if not m.any():
        return
    w = shape_weight(m, SP, lam)
    assert 1.0 <= w <= 1.0 + lam + 1e-12
