"""Seeded synthetic longitudinal study: label-mask scans, manifest and config.

Eyes whose EZ defect closes early gain more letters, so the EZ recovery rate
is the informative dynamic parameter.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core_data import STAGE_ORDER, ClassLabel, LabeledScan, Orientation, PixelSpacing, Stage, write_scan

WIDTH, HEIGHT = 96, 64
SPACING = PixelSpacing(10.0, 4.0)
ELM_ROW, EZ_ROW, RPE_ROW = 44, 47, 50
# stage index at which a lesion resolves; 5 = never within follow-up
_RESOLVE_CHOICES = (1, 2, 3, 5)
_GAIN_SCALE = {Stage.W2: 0.8, Stage.M3: 0.95, Stage.M6: 1.0, Stage.M12: 1.0}


def _shrink(stage_idx: int, resolve_idx: int) -> float:
    if stage_idx >= resolve_idx:
        return 0.0
    return 1.0 - 0.7 * stage_idx / resolve_idx


def draw_scan(rng, hole_w: int, hole_h: int, cyst_r: int, band_gap: int, erm: bool,
              orientation: Orientation) -> LabeledScan:
    lab = np.zeros((HEIGHT, WIDTH), dtype=np.uint8)
    cx = WIDTH // 2
    lab[ELM_ROW, :] = ClassLabel.ELM
    lab[EZ_ROW:EZ_ROW + 2, :] = ClassLabel.EZ
    lab[RPE_ROW:RPE_ROW + 3, :] = ClassLabel.RPE
    if band_gap > 0:
        lo, hi = cx - band_gap // 2, cx - band_gap // 2 + band_gap
        lab[ELM_ROW, lo:hi] = 0
        lab[EZ_ROW:EZ_ROW + 2, max(lo - 2, 1):min(hi + 2, WIDTH - 1)] = 0
    if hole_w > 0 and hole_h > 0:
        base = ELM_ROW - 1
        for k in range(hole_h):
            r = base - k
            # hourglass: narrowest at mid-height
            t = abs(k - hole_h / 2) / (hole_h / 2)
            w = max(2, int(round(hole_w * (0.45 + 0.55 * t))))
            lab[r, cx - w // 2: cx - w // 2 + w] = ClassLabel.MacularHole
    if cyst_r > 0:
        yy, xx = np.mgrid[:HEIGHT, :WIDTH]
        for dx in (-1, 1):
            ccx = cx + dx * (hole_w // 2 + cyst_r + 3)
            disc = (yy - (ELM_ROW - 10)) ** 2 + (xx - ccx) ** 2 <= cyst_r**2
            lab[disc & (lab == 0)] = ClassLabel.Pseudocysts
    if erm:
        lab[8, 20:76] = ClassLabel.ERM
        lab[9, 30:40] = ClassLabel.Space
    return LabeledScan(lab, SPACING, orientation)


def make_study(out_dir, n_eyes: int = 40, seed: int = 0) -> Path:
    """Write ``manifest.csv``, ``scans/*.png`` and ``study.cfg`` under ``out_dir``; return the manifest path."""
    out = Path(out_dir)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for e in range(n_eyes):
        eye = f"eye{e:03d}"
        hole_w = int(rng.integers(18, 40))
        hole_h = int(rng.integers(14, 26))
        cyst_r = int(rng.integers(0, 7))
        gap0 = int(rng.integers(16, 44))
        r_hole = int(rng.choice(_RESOLVE_CHOICES, p=(0.5, 0.3, 0.1, 0.1)))
        r_cyst = int(rng.choice(_RESOLVE_CHOICES))
        r_ez = int(rng.choice(_RESOLVE_CHOICES))
        erm = bool(rng.random() < 0.3)
        duration = float(rng.integers(20, 400))
        age = float(np.round(rng.normal(67, 7), 1))
        pre_bcva = int(rng.integers(25, 56))
        day_ez = {1: 14, 2: 90, 3: 180, 5: 1000}[r_ez]
        gain_full = 10 + 34 * np.sqrt(14 / day_ez) + rng.normal(0, 5)
        for si, stage in enumerate(STAGE_ORDER):
            if stage is Stage.PRE:
                bcva = pre_bcva
            else:
                bcva = int(np.clip(round(pre_bcva + _GAIN_SCALE[stage] * gain_full), 0, 100))
            scans = {}
            for orient in (Orientation.Horizontal, Orientation.Vertical):
                jitter = 1.0 if orient is Orientation.Horizontal else 1.1
                f_h = _shrink(si, r_hole)
                f_c = _shrink(si, r_cyst)
                f_e = _shrink(si, r_ez)
                scan = draw_scan(
                    rng,
                    int(round(hole_w * f_h * jitter)),
                    int(round(hole_h * f_h)),
                    int(round(cyst_r * f_c)),
                    int(round(gap0 * f_e)),
                    erm and si < 2,
                    orient,
                )
                rel = f"scans/{eye}_{stage.value}_{orient.value}.png"
                write_scan(scan, out / rel)
                scans[orient] = rel
            rows.append({
                "eye_id": eye,
                "stage": stage.value,
                "bcva_etdrs": str(bcva),
                "duration_days": repr(duration),
                "age": repr(age),
                "scan_h": scans[Orientation.Horizontal],
                "scan_v": scans[Orientation.Vertical],
            })
    manifest = out / "manifest.csv"
    with manifest.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    (out / "study.cfg").write_text(
        "# synthetic study\n"
        "manifest = manifest.csv\n"
        f"um_per_px_x = {SPACING.um_per_px_x}\n"
        f"um_per_px_y = {SPACING.um_per_px_y}\n"
        f"seed = {seed}\n",
        encoding="utf-8",
    )
    return manifest
