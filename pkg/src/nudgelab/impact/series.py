"""Daily and accumulated expenditure test series with Table-style summaries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .ttest import DegenerateSamplesError, TTestResult, t_ppf, welch_t_test


def daily_expenditure_panel(purchases, users: Sequence[str], start_day: int,
                            end_day: int) -> pd.DataFrame:
    """User x day matrix of daily expenditure over [start_day, end_day].

    Days without any order are zero expenditure, not missing data.
    """
    if end_day < start_day:
        raise ValueError("end_day before start_day")
    days = range(start_day, end_day + 1)
    panel = pd.DataFrame(0.0, index=sorted(set(users)), columns=list(days))
    for e in purchases:
        if e.user_id in panel.index and start_day <= e.day <= end_day:
            panel.at[e.user_id, e.day] += e.revenue
    return panel


def _untestable(n_t: int, n_c: int, mean_diff: float) -> TTestResult:
    # a day where both groups are constant carries no evidence either way
    return TTestResult(t_stat=0.0, df=float(n_t + n_c - 2), p_value=1.0, significant=False,
                       effect_size=None, power=None, mean_diff=mean_diff, se=0.0,
                       n_t=n_t, n_c=n_c)


def _test_series(values: pd.DataFrame, treat: list[str], control: list[str],
                 alpha: float) -> list[TTestResult]:
    out = []
    for day in values.columns:
        xs = values.loc[treat, day].to_numpy()
        ys = values.loc[control, day].to_numpy()
        try:
            out.append(welch_t_test(xs, ys, alpha=alpha))
        except DegenerateSamplesError:
            out.append(_untestable(len(xs), len(ys), float(xs.mean() - ys.mean())))
    return out


@dataclass(frozen=True)
class SeriesSummary:
    pct_significant_days: float
    largest_effect: Optional[float]
    largest_power: Optional[float]
    average_effect: Optional[float]
    average_power: Optional[float]


@dataclass(frozen=True)
class DailySeriesResult:
    days: tuple[int, ...]
    daily: list[TTestResult]
    accumulated: list[TTestResult]
    ci_lower: np.ndarray   # accumulated mean-difference CI band
    ci_upper: np.ndarray
    alpha: float
    summary: SeriesSummary


def _summarize(tests: Sequence[TTestResult]) -> SeriesSummary:
    sig = [t for t in tests if t.significant]
    pct = len(sig) / len(tests) if tests else 0.0
    if not sig:
        return SeriesSummary(pct, None, None, None, None)
    effects = [t.effect_size for t in sig]
    powers = [t.power for t in sig]
    peak = max(effects, key=abs)
    return SeriesSummary(pct_significant_days=pct, largest_effect=peak,
                         largest_power=max(powers),
                         average_effect=float(np.mean(effects)),
                         average_power=float(np.mean(powers)))


def daily_series_tests(panel: pd.DataFrame, treat: Sequence[str], control: Sequence[str],
                       alpha: float = 0.1) -> DailySeriesResult:
    """Per-day and per-day-accumulated Welch tests of treatment vs pure control.

    The summary follows the accumulated series (the series the headline
    metrics are read off).
    """
    treat = [u for u in panel.index if u in set(treat)]
    control = [u for u in panel.index if u in set(control)]
    if len(treat) < 2 or len(control) < 2:
        raise ValueError("need at least 2 users per group")

    daily = _test_series(panel, treat, control, alpha)
    acc_panel = panel.cumsum(axis=1)
    accumulated = _test_series(acc_panel, treat, control, alpha)

    lower = np.empty(len(accumulated))
    upper = np.empty(len(accumulated))
    for i, t in enumerate(accumulated):
        if t.se > 0:
            half = t_ppf(1 - alpha / 2, t.df) * t.se
        else:
            half = 0.0
        lower[i] = t.mean_diff - half
        upper[i] = t.mean_diff + half

    return DailySeriesResult(days=tuple(int(d) for d in panel.columns), daily=daily,
                             accumulated=accumulated, ci_lower=lower, ci_upper=upper,
                             alpha=alpha, summary=_summarize(accumulated))


def stratified_tests(panel: pd.DataFrame, treat: Sequence[str], control: Sequence[str],
                     strata: dict[str, str], alpha: float = 0.1) -> dict[str, Optional[DailySeriesResult]]:
    """Independent test series per stratum; tiny strata come back as None."""
    users = set(panel.index)
    missing = users - set(strata)
    if missing:
        raise ValueError(f"users missing from the stratum map: {sorted(missing)[:5]}")

    out: dict[str, Optional[DailySeriesResult]] = {}
    for stratum in sorted(set(strata.values())):
        members = {u for u, s in strata.items() if s == stratum}
        t_users = [u for u in treat if u in members]
        c_users = [u for u in control if u in members]
        if len(t_users) < 2 or len(c_users) < 2:
            out[stratum] = None  # untestable, not an error
            continue
        out[stratum] = daily_series_tests(panel.loc[sorted(members & users)], t_users,
                                          c_users, alpha=alpha)
    return out
