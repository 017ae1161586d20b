"""Covariate matrix with missing cells, and the missing-data cleaning step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import AllColumnsDropped, EmptyInput


@dataclass
class DataMatrix:
    """Rows are eyes, columns named covariates. Missing cells (and outcomes) are NaN."""

    columns: list[str]
    X: np.ndarray
    y: np.ndarray
    row_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), len(self.columns))
        self.y = np.asarray(self.y, dtype=float)
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")
        if not self.row_ids:
            self.row_ids = list(range(len(self.y)))
        if len(self.row_ids) != len(self.y):
            raise ValueError("row_ids length does not match the number of rows")

    @property
    def n(self) -> int:
        return len(self.y)

    def col(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def select(self, names) -> "DataMatrix":
        names = list(names)
        idx = [self.columns.index(c) for c in names]
        return DataMatrix(names, self.X[:, idx].copy(), self.y.copy(), list(self.row_ids))

    def take(self, rows) -> "DataMatrix":
        rows = np.asarray(rows, dtype=int)
        return DataMatrix(list(self.columns), self.X[rows].copy(), self.y[rows].copy(),
                          [self.row_ids[i] for i in rows])

    def equals(self, other: "DataMatrix") -> bool:
        return (self.columns == other.columns and self.row_ids == other.row_ids
                and np.array_equal(self.X, other.X, equal_nan=True)
                and np.array_equal(self.y, other.y, equal_nan=True))


@dataclass
class CleaningReport:
    imputed: list = field(default_factory=list)   # (column, fraction_missing, imputed_value)
    dropped_columns: list = field(default_factory=list)  # (column, fraction_missing)
    dropped_rows: int = 0

    @property
    def empty(self) -> bool:
        return not (self.imputed or self.dropped_columns or self.dropped_rows)


def clean(m: DataMatrix, missing_threshold: float = 0.10) -> tuple[DataMatrix, CleaningReport]:
    """Mean-impute columns missing less than ``missing_threshold``, drop the rest.

    Rows with a missing outcome are removed before the fractions are computed.
    """
    if m.n == 0 or not m.columns:
        raise EmptyInput("empty data matrix")
    report = CleaningReport()
    keep_rows = ~np.isnan(m.y)
    report.dropped_rows = int((~keep_rows).sum())
    X = m.X[keep_rows].copy()
    y = m.y[keep_rows].copy()
    ids = [r for r, k in zip(m.row_ids, keep_rows) if k]
    if len(y) == 0:
        raise EmptyInput("no rows with an observed outcome")

    kept = []
    for j, name in enumerate(m.columns):
        miss = np.isnan(X[:, j])
        frac = float(miss.mean())
        if frac == 0:
            kept.append(j)
        elif frac < missing_threshold:
            mean = float(X[~miss, j].mean())
            X[miss, j] = mean
            report.imputed.append((name, frac, mean))
            kept.append(j)
        else:
            report.dropped_columns.append((name, frac))
    if not kept:
        raise AllColumnsDropped(f"every column has >= {missing_threshold:.0%} missing values")
    out = DataMatrix([m.columns[j] for j in kept], X[:, kept], y, ids)
    return out, report
