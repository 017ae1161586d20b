"""Shapiro-Wilk normality test using Royston's (1995) approximation, algorithm AS R94."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

from ..errors import DegenerateSample

# polynomial coefficients, lowest order first
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x):
    return sum(c * x**i for i, c in enumerate(coef))


def shapiro_coefficients(n: int) -> np.ndarray:
    """Antisymmetric weights a_1..a_n applied to the order statistics."""
    if n < 3:
        raise DegenerateSample(f"need at least 3 values, got {n}")
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    i = np.arange(1, n + 1)
    m = ndtri((i - 0.375) / (n + 0.25))
    mm = float(m @ m)
    u = 1.0 / math.sqrt(n)
    a = np.empty(n)
    an = _poly(_C1, u) + m[-1] / math.sqrt(mm)
    if n > 5:
        an1 = _poly(_C2, u) + m[-2] / math.sqrt(mm)
        phi = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2)
        a[:] = m / math.sqrt(phi)
        a[-1], a[-2], a[0], a[1] = an, an1, -an, -an1
    else:
        phi = (mm - 2 * m[-1] ** 2) / (1 - 2 * an**2)
        a[:] = m / math.sqrt(phi)
        a[-1], a[0] = an, -an
    return a


def shapiro_wilk(x) -> tuple[float, float]:
    """Return (W, p) for a sample of 3 to 5000 values."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    n = x.size
    if n < 3:
        raise DegenerateSample(f"need at least 3 values, got {n}")
    if n > 5000:
        raise ValueError("the approximation is only valid for n <= 5000")
    if not np.all(np.isfinite(x)):
        raise DegenerateSample("sample contains non-finite values")
    ss = float(((x - x.mean()) ** 2).sum())
    if ss <= 0 or x[-1] - x[0] < 1e-19 * max(abs(x[0]), 1.0):
        raise DegenerateSample("all values identical")

    a = shapiro_coefficients(n)
    w = float((a @ x) ** 2 / ss)
    w = min(w, 1.0)

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, max(p, 0.0)

    w1 = math.log1p(-w) if w < 1 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if w1 >= gamma:
            return w, 1e-99
        y = -math.log(gamma - w1)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        ln_n = math.log(n)
        y = w1
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
    if math.isinf(y):
        return w, 1.0
    p = float(ndtr(-(y - mu) / sigma))
    return w, p
