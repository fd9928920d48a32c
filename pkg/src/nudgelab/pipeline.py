"""Glue between raw logs and the impact report: panel construction and the
full analysis run used by both the simulator and the CLI."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import bandit as bd
from .impact import (ImpactReport, assignment_metrics, backward_eliminate,
                     daily_expenditure_panel, daily_series_tests, fit_lmm,
                     stratified_tests, success_analysis)
from .traits import LogBundle, PurchaseIndex

NUDGE_ARMS = {"personalized", "random"}


def build_weekly_panel(bundle: LogBundle, groups: dict[str, str], start_day: int,
                       end_day: int, baseline_window_days: int = 90) -> pd.DataFrame:
    """One row per (user, week): weekly expenditure plus the model covariates.

    The baseline is trailing expenditure before the experiment start, min-max
    normalized to [0, 1] over the panel's users.  Week numbers are 1-based.
    """
    users = sorted(groups)
    n_weeks = max((end_day - start_day) // 7, 0)
    index = PurchaseIndex(bundle.purchases)

    baseline_raw = np.array([index.revenue_between(u, start_day - baseline_window_days,
                                                   start_day) for u in users])
    span = baseline_raw.max() - baseline_raw.min()
    baseline = (baseline_raw - baseline_raw.min()) / span if span > 0 else np.zeros(len(users))

    # nudged-that-week covariates track the adaptive group only; the non-adaptive
    # group indicator already absorbs its (constant) weekly nudging
    nudged_weeks: dict[tuple[str, int, str], bool] = {}
    for e in bundle.nudges:
        if e.pair is None or not (start_day <= e.day < end_day):
            continue
        if groups.get(e.user_id) != "adaptive":
            continue
        week = (e.day - start_day) // 7
        nudged_weeks[(e.user_id, week, e.arm_label)] = True

    rows = []
    for i, user in enumerate(users):
        group = groups[user]
        for week in range(n_weeks):
            w_start = start_day + 7 * week
            y = index.revenue_between(user, w_start - 1, w_start + 6)  # days [w_start, w_start+6]
            in_adaptive = 1.0 if group == "adaptive" else 0.0
            rows.append({
                "user": user,
                "y": y,
                "baseline": baseline[i],
                "intervention": in_adaptive,
                "nonadaptive": 1.0 if group == "non_adaptive" else 0.0,
                "nudged": 1.0 if any(nudged_weeks.get((user, week, a)) for a in NUDGE_ARMS) else 0.0,
                "nudged_personalized": 1.0 if nudged_weeks.get((user, week, "personalized")) else 0.0,
                "nudged_random": 1.0 if nudged_weeks.get((user, week, "random")) else 0.0,
                "week": float(week + 1),
                "intervention_week": in_adaptive * (week + 1),
            })
    return pd.DataFrame(rows)


def _lmm_terms(panel: pd.DataFrame, groups: dict[str, str]) -> list[str]:
    arms_present = {a for a in ("personalized", "random")
                    if panel[f"nudged_{a}"].any()}
    terms = ["intercept", "baseline", "intervention"]
    if any(g == "non_adaptive" for g in groups.values()):
        terms.append("nonadaptive")
    if arms_present == {"personalized", "random"}:
        terms += ["nudged_personalized", "nudged_random"]
    elif panel["nudged"].any():
        terms.append("nudged")
    terms += ["week", "intervention_week"]
    # all-zero columns cannot be estimated; drop them rather than fail on rank
    return [t for t in terms if t == "intercept" or panel[t].any()]


def spending_strata(bundle: LogBundle, users: Sequence[str], start_day: int,
                    window_days: int = 90) -> dict[str, str]:
    """Median split on trailing expenditure before the experiment start."""
    index = PurchaseIndex(bundle.purchases)
    spend = {u: index.revenue_between(u, start_day - window_days, start_day) for u in users}
    cut = float(np.median(list(spend.values())))
    return {u: ("top50" if spend[u] > cut else "bottom50") for u in users}


def analyze_logs(bundle: LogBundle, groups: dict[str, str], start_day: int, end_day: int,
                 alpha: float = 0.1,
                 decisions: Optional[Sequence[bd.Decision]] = None,
                 model: Optional[bd.BanditModel] = None,
                 contexts: Optional[dict] = None,
                 rng: Optional[np.random.Generator] = None,
                 with_lmm: bool = True,
                 with_strata: bool = True) -> ImpactReport:
    """Full analysis of one experiment's logs."""
    report = ImpactReport(alpha=alpha)
    by_group: dict[str, list[str]] = {}
    for user, g in groups.items():
        by_group.setdefault(g, []).append(user)
    control = sorted(by_group.get("pure_control", []))

    if end_day > start_day and len(control) >= 2:
        panel = daily_expenditure_panel(bundle.purchases, sorted(groups), start_day, end_day - 1)
        for g in ("adaptive", "non_adaptive"):
            treat = sorted(by_group.get(g, []))
            if len(treat) >= 2:
                report.ttest[g] = daily_series_tests(panel, treat, control, alpha=alpha)
                if with_strata:
                    strata = spending_strata(bundle, treat + control, start_day)
                    sub = panel.loc[treat + control]
                    report.stratified[g] = stratified_tests(sub, treat, control, strata,
                                                            alpha=alpha)

    if with_lmm and end_day - start_day >= 14 and len(groups) >= 2:
        weekly = build_weekly_panel(bundle, groups, start_day, end_day)
        if not weekly.empty and weekly["y"].var() > 0:
            terms = _lmm_terms(weekly, groups)
            report.lmm_full = fit_lmm(weekly, terms)
            report.lmm_reduced = backward_eliminate(weekly, terms, alpha=alpha)

    nudges_in = [e for e in bundle.nudges if start_day <= e.day < end_day]
    if nudges_in:
        report.success = success_analysis(nudges_in, bundle.purchases, horizon_end=end_day)

    if decisions:
        report.assignment = assignment_metrics(decisions, NUDGE_ARMS)

    if model is not None and contexts:
        ctx_list = [contexts[u] for u in sorted(contexts)]
        if len(ctx_list) >= 2:
            report.sensitivity = bd.sensitivity(model, ctx_list)
        if rng is None:
            rng = np.random.default_rng(0)
        pairs = bd.best_arm_confidence(model, ctx_list, rng=rng)
        report.best_arm = [
            (u, arm, conf, contexts[u].as_dict())
            for u, (arm, conf) in zip(sorted(contexts), pairs)
        ]
    return report


def analyze_sim_result(result, alpha: float = 0.1, rng: Optional[np.random.Generator] = None,
                       **kwargs) -> ImpactReport:
    return analyze_logs(result.bundle(), result.groups, result.start_day, result.end_day,
                        alpha=alpha, decisions=result.decisions, model=result.model,
                        contexts=result.last_contexts, rng=rng, **kwargs)


# ---------------------------------------------------------------------------
# group-assignment CSV

GROUPS_HEADER = ["user_id", "group"]


def write_groups(path, groups: dict[str, str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(GROUPS_HEADER)
        for user in sorted(groups):
            writer.writerow([user, groups[user]])


def read_groups(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        return {row["user_id"]: row["group"] for row in csv.DictReader(fh)}
