"""Pearson/Spearman correlation with a Shapiro-Wilk gate."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as _st

from ..errors import DegenerateSample
from .normality import shapiro_wilk

NORMALITY_ALPHA = 0.05


def _pearson(x, y):
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise DegenerateSample("zero variance")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _t_pvalue(r, n):
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    return float(2 * _st.t.sf(abs(t), n - 2))


def is_normal(x, alpha: float = NORMALITY_ALPHA) -> bool:
    try:
        return shapiro_wilk(x)[1] > alpha
    except DegenerateSample:
        return False


def correlate(x, y, mode: str = "auto") -> tuple[float, float, str]:
    """Return (r, p, method). ``auto`` uses Pearson only when both samples look normal."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be paired 1-D samples")
    n = x.size
    if n < 3:
        raise DegenerateSample(f"need at least 3 pairs, got {n}")
    if mode == "auto":
        mode = "pearson" if is_normal(x) and is_normal(y) else "spearman"
    if mode == "pearson":
        r = _pearson(x, y)
    elif mode == "spearman":
        r = _pearson(_st.rankdata(x), _st.rankdata(y))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return r, _t_pvalue(r, n), mode
