"""Recommendation success breakdowns and bandit assignment metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..events import INTERACTIONS, NudgeEvent
from ..traits import _as_index


@dataclass(frozen=True)
class InteractionStats:
    n_messages: int
    n_successes: int

    @property
    def success_rate(self) -> float:
        return self.n_successes / self.n_messages if self.n_messages else 0.0


@dataclass(frozen=True)
class SuccessBreakdown:
    n_messages: int
    n_successes: int
    per_interaction: dict[str, InteractionStats]
    by_arm: dict[str, "SuccessBreakdown"] = field(default_factory=dict)

    @property
    def overall_success_rate(self) -> float:
        return self.n_successes / self.n_messages if self.n_messages else 0.0

    def share_of_successes(self, interaction: str) -> float:
        if self.n_successes == 0:
            return 0.0
        return self.per_interaction[interaction].n_successes / self.n_successes


def _breakdown(rows: Sequence[tuple[NudgeEvent, bool]]) -> SuccessBreakdown:
    per = {}
    for interaction in INTERACTIONS:
        sub = [(e, s) for e, s in rows if e.interaction == interaction]
        per[interaction] = InteractionStats(n_messages=len(sub),
                                            n_successes=sum(1 for _, s in sub if s))
    return SuccessBreakdown(n_messages=len(rows),
                            n_successes=sum(1 for _, s in rows if s),
                            per_interaction=per)


def success_analysis(nudges: Sequence[NudgeEvent], log, horizon_end: int) -> SuccessBreakdown:
    """Share of messages whose infrequent item got purchased later on.

    A message succeeds when its user buys the infrequent item after the nudge
    day and before ``horizon_end`` (exclusive).  Control decisions carry no
    message and are excluded.
    """
    index = _as_index(log)
    rows: list[tuple[NudgeEvent, bool]] = []
    for e in nudges:
        if e.pair is None:
            continue
        item = e.infrequent_item
        days = index.purchase_days(e.user_id, item)
        success = any(e.day < d < horizon_end for d in days)
        rows.append((e, success))

    top = _breakdown(rows)
    by_arm = {}
    for arm in sorted({e.arm_label for e, _ in rows}):
        by_arm[arm] = _breakdown([(e, s) for e, s in rows if e.arm_label == arm])
    return SuccessBreakdown(n_messages=top.n_messages, n_successes=top.n_successes,
                            per_interaction=top.per_interaction, by_arm=by_arm)


@dataclass(frozen=True)
class AssignmentMetrics:
    avg_fraction_nudged: float
    weeks_majority_nudged: tuple[int, int]  # (k, n) decision points with fraction > 0.5
    weekly_fractions: dict[int, dict[str, float]]  # day -> arm -> fraction

    @property
    def majority_label(self) -> str:
        k, n = self.weeks_majority_nudged
        return f"{k}/{n}"


def assignment_metrics(decisions: Sequence, nudge_arms: set[str]) -> AssignmentMetrics:
    """Average nudge fraction per decision point and majority-nudged week count."""
    by_day: dict[int, list] = {}
    for d in decisions:
        by_day.setdefault(d.day, []).append(d)

    weekly: dict[int, dict[str, float]] = {}
    nudged_fractions = []
    majority = 0
    for day in sorted(by_day):
        rows = by_day[day]
        arms = [r.chosen_arm for r in rows]
        fractions = {arm: arms.count(arm) / len(arms) for arm in sorted(set(arms))}
        weekly[day] = fractions
        frac_nudged = sum(f for arm, f in fractions.items() if arm in nudge_arms)
        nudged_fractions.append(frac_nudged)
        if frac_nudged > 0.5:
            majority += 1

    avg = sum(nudged_fractions) / len(nudged_fractions) if nudged_fractions else 0.0
    return AssignmentMetrics(avg_fraction_nudged=avg,
                             weeks_majority_nudged=(majority, len(nudged_fractions)),
                             weekly_fractions=weekly)
