"""Random-intercept linear mixed model fit by profiled maximum likelihood.

The only variance component besides the residual is the per-user intercept,
so the variance ratio gamma = sigma_u^2 / sigma_e^2 is profiled out and
optimized by a coarse grid plus golden-section refinement.  Fixed effects
come from generalized least squares at the optimum; Wald p-values use the
normal reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

GAMMA_UPPER = 1e3
GAMMA_TOL = 1e-6
_GOLDEN = (math.sqrt(5) - 1) / 2


class LMMError(ValueError):
    pass


@dataclass(frozen=True)
class LMMFit:
    terms: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    sigma_u2: float
    sigma_e2: float
    loglik: float
    converged: bool
    gamma: float
    n_obs: int
    n_users: int
    reml: bool
    profile_trace: tuple[float, ...]  # best profiled loglik after each optimizer step

    def coef(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def stderr(self, term: str) -> float:
        return float(self.standard_errors[self.terms.index(term)])

    def p_value(self, term: str) -> float:
        return float(self.p_values[self.terms.index(term)])

    def conf_int(self, term: str, level: float = 0.9) -> tuple[float, float]:
        from .ttest import t_ppf  # normal is the t limit; reuse the quantile via large df
        z = t_ppf(1 - (1 - level) / 2, 1e7)
        i = self.terms.index(term)
        half = z * self.standard_errors[i]
        return float(self.coefficients[i] - half), float(self.coefficients[i] + half)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "term": list(self.terms),
            "coef": self.coefficients,
            "stderr": self.standard_errors,
            "pvalue": self.p_values,
        })


def _design(panel: pd.DataFrame, terms: Sequence[str]) -> np.ndarray:
    cols = []
    for term in terms:
        if term == "intercept":
            cols.append(np.ones(len(panel)))
        elif term in panel.columns:
            cols.append(panel[term].to_numpy(dtype=float))
        else:
            raise LMMError(f"term {term!r} not found in panel columns")
    return np.column_stack(cols)


def _check_rank(x: np.ndarray, terms: Sequence[str]) -> None:
    _, r = np.linalg.qr(x)
    diag = np.abs(np.diag(r))
    tol = max(x.shape) * np.finfo(float).eps * (diag.max() if diag.size else 1.0)
    bad = [terms[i] for i in range(len(terms)) if diag[i] <= tol]
    if bad:
        raise LMMError(f"design matrix is rank deficient; collinear terms: {bad}")


def _profile(gamma: float, groups: list[tuple[np.ndarray, np.ndarray]], n: int, p: int,
             reml: bool):
    """GLS fit and profiled log-likelihood at a fixed variance ratio."""
    a = np.zeros((p, p))
    rhs = np.zeros(p)
    logdet_v = 0.0
    for x_i, y_i in groups:
        n_i = len(y_i)
        c = gamma / (1.0 + gamma * n_i)
        xs = x_i.sum(axis=0)
        a += x_i.T @ x_i - c * np.outer(xs, xs)
        rhs += x_i.T @ y_i - c * xs * y_i.sum()
        logdet_v += math.log1p(gamma * n_i)
    beta = np.linalg.solve(a, rhs)
    rss = 0.0
    for x_i, y_i in groups:
        n_i = len(y_i)
        c = gamma / (1.0 + gamma * n_i)
        r = y_i - x_i @ beta
        rss += r @ r - c * r.sum() ** 2
    rss = max(rss, 1e-300)
    if reml:
        sigma2 = rss / (n - p)
        sign, logdet_a = np.linalg.slogdet(a)
        ll = (-0.5 * (n - p) * math.log(2 * math.pi * sigma2) - 0.5 * logdet_v
              - 0.5 * (logdet_a - p * math.log(sigma2)) - 0.5 * (n - p))
    else:
        sigma2 = rss / n
        ll = -0.5 * n * math.log(2 * math.pi * sigma2) - 0.5 * logdet_v - 0.5 * n
    return ll, beta, sigma2, a


def fit_lmm(panel: pd.DataFrame, terms: Sequence[str], response: str = "y",
            group: str = "user", reml: bool = False) -> LMMFit:
    """Fit the random-intercept model ``y = X beta + u_user + e``.

    ``panel`` holds one row per (user, time point) with named covariate
    columns; ``terms`` selects the fixed effects ("intercept" adds a
    constant column).
    """
    terms = tuple(terms)
    if not terms:
        raise LMMError("no fixed-effect terms")
    if group not in panel.columns or response not in panel.columns:
        raise LMMError(f"panel needs {group!r} and {response!r} columns")
    panel = panel.reset_index(drop=True)
    users = panel[group].unique()
    if len(users) < 2:
        raise LMMError("need at least 2 users")

    x = _design(panel, terms)
    _check_rank(x, terms)
    y = panel[response].to_numpy(dtype=float)
    n, p = x.shape

    groups = []
    for _, sub in panel.groupby(group, sort=False):
        idx = sub.index.to_numpy()
        groups.append((x[idx], y[idx]))

    def objective(g: float) -> float:
        return _profile(g, groups, n, p, reml)[0]

    # coarse grid, then golden-section refinement inside the bracketing cell
    grid = np.concatenate(([0.0], np.logspace(-4, math.log10(GAMMA_UPPER), 28)))
    lls = [objective(g) for g in grid]
    best = int(np.argmax(lls))
    trace = [max(lls[: i + 1]) for i in range(len(lls))]

    lo = grid[best - 1] if best > 0 else 0.0
    hi = grid[best + 1] if best < len(grid) - 1 else GAMMA_UPPER
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = objective(c), objective(d)
    iterations = 0
    while hi - lo > GAMMA_TOL and iterations < 200:
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = objective(d)
        trace.append(max(trace[-1], fc, fd))
        iterations += 1
    gamma = (lo + hi) / 2
    converged = hi - lo <= GAMMA_TOL

    ll, beta, sigma2, a = _profile(gamma, groups, n, p, reml)
    cov = sigma2 * np.linalg.inv(a)
    se = np.sqrt(np.diag(cov))
    z = np.where(se > 0, beta / se, np.inf)
    p_values = np.array([math.erfc(abs(zi) / math.sqrt(2.0)) for zi in z])

    return LMMFit(terms=terms, coefficients=beta, standard_errors=se, p_values=p_values,
                  sigma_u2=gamma * sigma2, sigma_e2=sigma2, loglik=ll, converged=converged,
                  gamma=gamma, n_obs=n, n_users=len(users), reml=reml,
                  profile_trace=tuple(trace))


def backward_eliminate(panel: pd.DataFrame, full_terms: Sequence[str], alpha: float = 0.1,
                       response: str = "y", group: str = "user",
                       reml: bool = False) -> LMMFit:
    """Drop the least significant fixed effect until every remaining p < alpha.

    The random intercept and the residual are never candidates; the fixed
    intercept is droppable like any other term.  Stops early rather than
    emptying the fixed part entirely.
    """
    terms = list(full_terms)
    fit = fit_lmm(panel, terms, response=response, group=group, reml=reml)
    while len(terms) > 1:
        worst = int(np.argmax(fit.p_values))
        if fit.p_values[worst] < alpha:
            break
        terms.pop(worst)
        fit = fit_lmm(panel, terms, response=response, group=group, reml=reml)
    return fit
