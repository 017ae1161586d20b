"""Binary logistic regression by IRLS with Wald inference, screening and LR tests."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _st
from scipy.special import expit

from ..errors import OneClassOnly, RankDeficient

log = logging.getLogger(__name__)

Z95 = 1.96
SEPARATION_LIMIT = 15.0


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class Term:
    name: str
    B: float
    SE: float
    wald: float
    p: float
    OR: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_estimate(cls, name: str, B: float, SE: float) -> "Term":
        """Derive Wald, p, odds ratio and its 95% CI from a coefficient and its SE."""
        if SE > 0:
            wald = (B / SE) ** 2
            p = float(_st.chi2.sf(wald, 1))
        else:
            wald, p = math.inf, 0.0
        return cls(name, B, SE, wald, p, _exp(B), _exp(B - Z95 * SE), _exp(B + Z95 * SE))

    def as_dict(self) -> dict:
        return {"name": self.name, "B": self.B, "SE": self.SE, "wald": self.wald, "p": self.p,
                "OR": self.OR, "ci_low": self.ci_low, "ci_high": self.ci_high}


@dataclass
class LogisticFit:
    terms: list[Term]
    intercept: Term | None
    loglik: float
    loglik_null: float
    nagelkerke_r2: float
    n: int
    converged: bool
    iterations: int
    separated: bool = False
    coef: np.ndarray = field(default=None, repr=False)
    cov: np.ndarray = field(default=None, repr=False)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def term(self, name: str) -> Term:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if not self.terms:
            eta = np.zeros(len(X))
        else:
            eta = X.reshape(-1, len(self.terms)) @ self.coef[-len(self.terms):]
        if self.intercept is not None:
            eta = eta + self.coef[0]
        return expit(eta)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "converged": self.converged,
            "separated": self.separated,
            "iterations": self.iterations,
            "loglik": self.loglik,
            "loglik_null": self.loglik_null,
            "nagelkerke_r2": self.nagelkerke_r2,
            "intercept": self.intercept.as_dict() if self.intercept else None,
            "terms": [t.as_dict() for t in self.terms],
        }


def _loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # log(1 + e^eta) computed stably
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def null_loglik(y: np.ndarray, intercept: bool = True) -> float:
    n = len(y)
    if not intercept:
        return n * math.log(0.5)
    k = float(y.sum())
    out = 0.0
    if k > 0:
        out += k * math.log(k / n)
    if k < n:
        out += (n - k) * math.log((n - k) / n)
    return out


def nagelkerke(loglik: float, loglik_null: float, n: int) -> float:
    if not math.isfinite(loglik) or loglik <= loglik_null:
        return 0.0
    cox_snell = -math.expm1(2.0 * (loglik_null - loglik) / n)
    max_cs = -math.expm1(2.0 * loglik_null / n)
    if max_cs <= 0:
        return 0.0
    return min(1.0, max(0.0, cox_snell / max_cs))


def fit_logistic(X, y, names=None, intercept: bool = True,
                 tol: float = 1e-8, max_iter: int = 50) -> LogisticFit:
    """Maximum-likelihood logistic fit by Newton-Raphson (IRLS).

    Stops when the largest coefficient update falls below ``tol`` or after
    ``max_iter`` iterations. On (quasi-)separation the partial fit is returned
    with ``converged=False`` and ``separated=True``.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    X = np.asarray(X, dtype=float)
    X = np.zeros((n, 0)) if X.size == 0 else X.reshape(n, -1)
    p = X.shape[1]
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ValueError("names do not match the number of columns")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("outcomes must be 0/1")
    if y.min() == y.max():
        raise OneClassOnly("outcome has a single class")
    D = np.column_stack([np.ones(n), X]) if intercept else X
    k = D.shape[1]
    if n <= k:
        raise RankDeficient(f"{n} observations for {k} parameters")
    if np.linalg.matrix_rank(D) < k:
        raise RankDeficient("design matrix is rank deficient")

    beta = np.zeros(k)
    eta = D @ beta
    ll = _loglik(eta, y)
    converged = False
    growing = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        w = mu * (1.0 - mu)
        info = D.T @ (D * w[:, None])
        try:
            step = np.linalg.solve(info, D.T @ (y - mu))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        beta = beta + step
        eta = D @ beta
        ll_new = _loglik(eta, y)
        growing = ll_new > ll
        ll = ll_new
        if np.max(np.abs(step)) < tol:
            converged = True
            break

    separated = bool(np.max(np.abs(beta)) > SEPARATION_LIMIT and (growing or not converged))
    if separated:
        converged = False
        log.warning("logistic fit shows separation (|B| > %g); flagged non-converged", SEPARATION_LIMIT)

    mu = expit(eta)
    w = mu * (1.0 - mu)
    info = D.T @ (D * w[:, None])
    try:
        cov = np.linalg.inv(info)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        cov = np.full((k, k), np.nan)
        se = np.full(k, np.inf)

    ll0 = null_loglik(y, intercept)
    r2 = 0.0 if p == 0 else nagelkerke(ll, ll0, n)
    off = 1 if intercept else 0
    terms = [Term.from_estimate(nm, float(beta[off + j]), float(se[off + j])) for j, nm in enumerate(names)]
    icpt = Term.from_estimate("(intercept)", float(beta[0]), float(se[0])) if intercept else None
    return LogisticFit(terms, icpt, ll, ll0, r2, n, converged, it, separated, beta, cov)


@dataclass(frozen=True)
class LrTest:
    statistic: float
    df: int
    p: float


def lr_test(small: LogisticFit, big: LogisticFit) -> LrTest:
    """Likelihood-ratio test of nested models fitted on the same rows."""
    if small.n != big.n:
        raise ValueError("models were fitted on different rows")
    df = len(big.terms) - len(small.terms)
    if df < 0:
        raise ValueError("'big' must contain at least as many terms as 'small'")
    if df == 0:
        return LrTest(0.0, 0, 1.0)
    stat = max(0.0, 2.0 * (big.loglik - small.loglik))
    return LrTest(stat, df, float(_st.chi2.sf(stat, df)))


@dataclass
class ScreenResult:
    selected: list[str]
    pvalues: dict
    flagged: dict  # column -> reason


def univariate_screen(m, alpha: float = 0.10) -> ScreenResult:
    """Keep columns whose single-covariate Wald p-value is below ``alpha``.

    Columns whose fit fails or does not converge (e.g. separation) are left out
    and reported in ``flagged``.
    """
    y = m.y
    if len(np.unique(y)) < 2:
        raise OneClassOnly("screening needs both outcome classes")
    selected, pvalues, flagged = [], {}, {}
    for j, name in enumerate(m.columns):
        try:
            f = fit_logistic(m.X[:, j], y, [name])
        except (RankDeficient, ValueError) as exc:
            flagged[name] = f"fit failed: {exc}"
            log.warning("screening skipped %s: %s", name, exc)
            continue
        pvalues[name] = f.terms[0].p
        if not f.converged:
            flagged[name] = "NonConverged"
            continue
        if f.terms[0].p < alpha:
            selected.append(name)
    return ScreenResult(selected, pvalues, flagged)
