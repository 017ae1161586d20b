"""Variance inflation factors and greedy VIF-based exclusion."""

from __future__ import annotations

import numpy as np

VIF_LIMIT = 5.0


def _r_squared(target: np.ndarray, others: np.ndarray) -> float:
    design = np.column_stack([np.ones(len(target)), others])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    tss = float(((target - target.mean()) ** 2).sum())
    if tss == 0:
        return 1.0
    rss = float(resid @ resid)
    if rss <= 1e-12 * tss:
        return 1.0
    return max(0.0, 1.0 - rss / tss)


def vif_values(X: np.ndarray) -> np.ndarray:
    """VIF_j = 1 / (1 - R^2_j) from regressing column j on the rest (with intercept)."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if p < 2:
        raise ValueError("VIF needs at least two columns")
    if n <= p:
        raise ValueError(f"VIF needs more rows than columns ({n} <= {p})")
    out = np.empty(p)
    for j in range(p):
        r2 = _r_squared(X[:, j], np.delete(X, j, axis=1))
        out[j] = np.inf if r2 >= 1.0 else 1.0 / (1.0 - r2)
    return out


def vif(m, limit: float = VIF_LIMIT) -> tuple[list[tuple[str, float]], list[str]]:
    """Per-column VIFs on the full set plus the columns removed greedily.

    Removal drops the single largest VIF above ``limit`` and recomputes, until
    every remaining VIF is <= limit (or only one column is left).
    """
    names = list(m.columns)
    X = np.asarray(m.X, dtype=float)
    initial = list(zip(names, vif_values(X).tolist()))
    removed = []
    keep = list(range(len(names)))
    while len(keep) >= 2:
        v = vif_values(X[:, keep])
        worst = int(np.argmax(v))
        if not v[worst] > limit:
            break
        removed.append(names[keep.pop(worst)])
    return initial, removed
