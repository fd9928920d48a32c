"""Welch unequal-variance t-test with effect size and non-central-t power.

The central t CDF is computed through the regularized incomplete beta
function; the non-central CDF integrates the conditional normal probability
over the chi-square mixing density, so nothing here depends on a packaged
t-test routine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import betainc, gammaln


class DegenerateSamplesError(ValueError):
    """Both samples constant (or too small): the test statistic is undefined."""


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    df: float
    p_value: float
    significant: bool
    effect_size: Optional[float]  # populated only when the null is rejected
    power: Optional[float]
    mean_diff: float
    se: float
    n_t: int
    n_c: int


def t_cdf(t: float, nu: float) -> float:
    """Central Student-t CDF via the regularized incomplete beta function."""
    if nu <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0:
        return 0.5
    x = nu / (nu + t * t)
    tail = 0.5 * betainc(nu / 2.0, 0.5, x)
    return tail if t < 0 else 1.0 - tail


def t_ppf(q: float, nu: float) -> float:
    """Central Student-t quantile by inverting :func:`t_cdf`."""
    if not 0 < q < 1:
        raise ValueError("q must be in (0, 1)")
    if q == 0.5:
        return 0.0
    hi = 1.0
    while t_cdf(hi, nu) < max(q, 1 - q):
        hi *= 2.0
    return brentq(lambda t: t_cdf(t, nu) - q, -hi, hi, xtol=1e-12)


def _chi2_logpdf(v: float, nu: float) -> float:
    return (nu / 2 - 1) * math.log(v) - v / 2 - gammaln(nu / 2) - (nu / 2) * math.log(2)


def _phi(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def noncentral_t_cdf(t: float, nu: float, delta: float) -> float:
    """P(T <= t) for non-central T = (Z + delta)/sqrt(V/nu), by quadrature over V."""

    def integrand(v: float) -> float:
        return _phi(t * math.sqrt(v / nu) - delta) * math.exp(_chi2_logpdf(v, nu))

    # split at the chi-square bulk so quad resolves both shoulders
    points = sorted({max(nu / 4, 1e-3), nu, nu * 2})
    total = 0.0
    prev = 0.0
    for p in points:
        part, _ = quad(integrand, prev, p, epsabs=1e-9, limit=200)
        total += part
        prev = p
    tail, _ = quad(integrand, prev, np.inf, epsabs=1e-9, limit=200)
    return min(max(total + tail, 0.0), 1.0)


def power_noncentral_t(delta: float, nu: float, alpha: float) -> float:
    """Two-sided rejection probability when the shift is ``delta`` effect units."""
    if nu <= 0:
        raise ValueError("degrees of freedom must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    t_crit = t_ppf(1 - alpha / 2, nu)
    upper = 1.0 - noncentral_t_cdf(t_crit, nu, delta)
    lower = noncentral_t_cdf(-t_crit, nu, delta)
    return min(max(upper + lower, 0.0), 1.0)


def _moments(xs: Sequence[float]) -> tuple[float, float, int]:
    arr = np.asarray(xs, dtype=float)
    n = arr.size
    if n < 2:
        raise DegenerateSamplesError("each sample needs at least 2 observations")
    return float(arr.mean()), float(arr.var(ddof=1)), n


def cohens_d(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Mean difference scaled by sqrt(var_t/n_t + var_c/n_c)."""
    mu_t, var_t, n_t = _moments(xs)
    mu_c, var_c, n_c = _moments(ys)
    sigma_p = math.sqrt(var_t / n_t + var_c / n_c)
    if sigma_p == 0:
        raise DegenerateSamplesError("zero pooled scale")
    return (mu_t - mu_c) / sigma_p


def welch_t_test(xs: Sequence[float], ys: Sequence[float], alpha: float = 0.1) -> TTestResult:
    """Two-sided Welch test of treatment ``xs`` vs control ``ys``.

    Effect size and power are reported only when the null is rejected.
    """
    mu_t, var_t, n_t = _moments(xs)
    mu_c, var_c, n_c = _moments(ys)
    if var_t == 0 and var_c == 0:
        raise DegenerateSamplesError("both sample variances are zero")

    se2 = var_t / n_t + var_c / n_c
    t_stat = (mu_t - mu_c) / math.sqrt(se2)
    nu = se2**2 / ((var_t / n_t) ** 2 / (n_t - 1) + (var_c / n_c) ** 2 / (n_c - 1))
    p = 2.0 * t_cdf(-abs(t_stat), nu)
    significant = p < alpha

    effect = power = None
    if significant:
        effect = cohens_d(xs, ys)
        power = power_noncentral_t(effect, nu, alpha)
    return TTestResult(t_stat=t_stat, df=nu, p_value=p, significant=significant,
                       effect_size=effect, power=power, mean_diff=mu_t - mu_c,
                       se=math.sqrt(se2), n_t=n_t, n_c=n_c)
