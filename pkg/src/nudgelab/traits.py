"""Dynamic behavioral traits computed from purchase, nudge, and login logs.

The traits defined here feed every other part of the engine: they make up
the per-user context vectors of the decision policy, the reward signal, and
the cohort eligibility rules of the experiment designs.
"""

from __future__ import annotations

import hashlib
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .events import LoginEvent, NudgeEvent, PurchaseEvent, RewardObservation

DAYS_PER_MONTH = 30  # months are 30 days wherever a period is stated in months


class TraitConfigError(ValueError):
    """Raised for unknown trait names or inconsistent context specs."""


@dataclass(frozen=True)
class ContextVector:
    user_id: str
    day: int
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise TraitConfigError("trait names and values length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise TraitConfigError(f"non-finite trait value for user {self.user_id}")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, (float(v) for v in self.values)))


@dataclass
class LogBundle:
    """All behavioral logs of one experiment or analysis window."""

    purchases: list[PurchaseEvent] = field(default_factory=list)
    nudges: list[NudgeEvent] = field(default_factory=list)
    logins: list[LoginEvent] = field(default_factory=list)


class PurchaseIndex:
    """Sorted per-user / per-(user, item) day lookups over a purchase log."""

    def __init__(self, events: Sequence[PurchaseEvent]):
        self.events = list(events)
        self._item_days: dict[tuple[str, str], list[int]] = {}
        self._user_day_revenue: dict[str, list[tuple[int, float]]] = {}
        by_item: dict[tuple[str, str], set[int]] = {}
        by_user: dict[str, dict[int, float]] = {}
        for e in self.events:
            by_item.setdefault((e.user_id, e.item_id), set()).add(e.day)
            by_user.setdefault(e.user_id, {})
            by_user[e.user_id][e.day] = by_user[e.user_id].get(e.day, 0.0) + e.revenue
        for key, days in by_item.items():
            self._item_days[key] = sorted(days)
        for user, day_rev in by_user.items():
            self._user_day_revenue[user] = sorted(day_rev.items())

    def users(self) -> set[str]:
        return set(self._user_day_revenue)

    def purchase_days(self, user: str, item: str) -> list[int]:
        return self._item_days.get((user, item), [])

    def revenue_between(self, user: str, start_excl: int, end_incl: int) -> float:
        rows = self._user_day_revenue.get(user, [])
        return sum(rev for day, rev in rows if start_excl < day <= end_incl)

    def order_days_between(self, user: str, start_excl: int, end_incl: int) -> int:
        rows = self._user_day_revenue.get(user, [])
        return sum(1 for day, _ in rows if start_excl < day <= end_incl)


def _as_index(log) -> PurchaseIndex:
    return log if isinstance(log, PurchaseIndex) else PurchaseIndex(log)


def days_since_last_purchase(log, user: str, item: str, t: int) -> int:
    """Days between ``t`` and the latest purchase of ``item`` at or before ``t``.

    Returns -1 when the user never purchased the item by day ``t``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    days = _as_index(log).purchase_days(user, item)
    pos = bisect_right(days, t)
    if pos == 0:
        return -1
    return t - days[pos - 1]


def avg_interpurchase_days(log, user: str, item: str, t: int, t_months: int = 3) -> Optional[float]:
    """Mean gap between consecutive purchase days of ``item`` in the trailing window.

    The window is ``(t - 30*t_months, t]``.  Returns None when fewer than two
    purchase days fall inside it (no defined cadence).
    """
    if t_months < 1:
        raise ValueError("t_months must be >= 1")
    start = t - DAYS_PER_MONTH * t_months
    days = [d for d in _as_index(log).purchase_days(user, item) if start < d <= t]
    if len(days) < 2:
        return None
    gaps = [b - a for a, b in zip(days, days[1:])]
    return sum(gaps) / len(gaps)


def compute_reward(log, user: str, decision_day: int, window_days: int = 7) -> RewardObservation:
    """Log-transformed total expenditure in the window after a decision point."""
    if window_days < 1:
        raise ValueError("window_days must be >= 1")
    spend = _as_index(log).revenue_between(user, decision_day, decision_day + window_days)
    return RewardObservation(user_id=user, decision_day=decision_day, reward=math.log1p(spend))


# ---------------------------------------------------------------------------
# Cohort eligibility


@dataclass(frozen=True)
class CohortRules:
    login_recency_days: int = 40
    login_freq_window_days: int = 60
    min_login_count: float = 60 / 7  # "at least once a week on average" over two months
    spend_window_days: int = 90
    exclude_top_spender_pct: float = 0.2


def eligible_cohort(log, logins: Sequence[LoginEvent], t: int, rules: CohortRules) -> set[str]:
    """Users passing the login-recency, login-frequency, and top-spender rules at day ``t``."""
    index = _as_index(log)
    login_days: dict[str, list[int]] = {}
    for e in logins:
        login_days.setdefault(e.user_id, []).append(e.day)

    passing = []
    for user, days in login_days.items():
        recent = [d for d in days if t - rules.login_recency_days < d <= t]
        if not recent:
            continue
        freq = sum(1 for d in days if t - rules.login_freq_window_days < d <= t)
        if freq < rules.min_login_count:
            continue
        passing.append(user)

    pct = rules.exclude_top_spender_pct
    if pct <= 0 or not passing:
        return set(passing)
    spend = {u: index.revenue_between(u, t - rules.spend_window_days, t) for u in passing}
    n_cut = int(len(passing) * pct)
    # stable cut: highest spend first, user id as deterministic tie-break
    ranked = sorted(passing, key=lambda u: (-spend[u], u))
    return set(ranked[n_cut:])


# ---------------------------------------------------------------------------
# Context vectors


@dataclass(frozen=True)
class TraitSpec:
    name: str
    window_days: Optional[int] = None
    label: Optional[str] = None

    @property
    def display(self) -> str:
        return self.label or self.name


@dataclass(frozen=True)
class ContextSpec:
    traits: tuple[TraitSpec, ...]
    horizon_days: int = 70  # cap for "days since" traits of users without the event

    @staticmethod
    def of(*names: str, horizon_days: int = 70) -> "ContextSpec":
        return ContextSpec(tuple(TraitSpec(n) for n in names), horizon_days=horizon_days)


_DEFAULT_WINDOWS = {
    "purchase_frequency": 90,
    "baseline_expenditure": 90,
    "login_frequency": 60,
    "in_app_time": 30,
    "opened_nudges": 14,
}


def _noise_value(user: str, day: int, salt: str) -> float:
    # deterministic pseudo-uniform in [0, 1); keeps contexts a pure function of inputs
    digest = hashlib.sha256(f"{salt}|{user}|{day}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _raw_trait(spec: TraitSpec, index: PurchaseIndex, nudge_rows: dict[str, list[NudgeEvent]],
               login_rows: dict[str, list[LoginEvent]], user: str, t: int, horizon: int) -> float:
    name = spec.name
    window = spec.window_days or _DEFAULT_WINDOWS.get(name, 0)
    if name == "days_since_last_nudge":
        days = [e.day for e in nudge_rows.get(user, []) if e.day < t]
        raw = t - max(days) if days else horizon
        return float(min(raw, horizon))
    if name == "purchase_frequency":
        return float(index.order_days_between(user, t - window, t))
    if name == "baseline_expenditure":
        return index.revenue_between(user, t - window, t)
    if name == "login_frequency":
        return float(sum(1 for e in login_rows.get(user, []) if t - window < e.day <= t))
    if name == "in_app_time":
        return float(sum(e.session_seconds for e in login_rows.get(user, []) if t - window < e.day <= t))
    if name == "days_since_first_login":
        days = [e.day for e in login_rows.get(user, []) if e.day <= t]
        return float(min(t - min(days), horizon)) if days else float(horizon)
    if name == "opened_nudges":
        return float(sum(1 for e in nudge_rows.get(user, [])
                         if t - window < e.day <= t and e.interaction == "opened"))
    if name.startswith("noise"):
        return _noise_value(user, t, name)
    raise TraitConfigError(f"unknown trait name {name!r}")


def compute_contexts(bundle: LogBundle, cohort: set[str], t: int,
                     context_spec: ContextSpec) -> dict[str, ContextVector]:
    """Context vectors for every cohort member at day ``t``.

    Each trait is min-max normalized over the cohort at this decision point;
    a zero-range trait maps everyone to 0.
    """
    if not cohort:
        return {}
    index = _as_index(bundle.purchases)
    nudge_rows: dict[str, list[NudgeEvent]] = {}
    for e in bundle.nudges:
        nudge_rows.setdefault(e.user_id, []).append(e)
    login_rows: dict[str, list[LoginEvent]] = {}
    for e in bundle.logins:
        login_rows.setdefault(e.user_id, []).append(e)

    users = sorted(cohort)
    raw = np.zeros((len(users), len(context_spec.traits)))
    for j, spec in enumerate(context_spec.traits):
        for i, user in enumerate(users):
            raw[i, j] = _raw_trait(spec, index, nudge_rows, login_rows, user, t,
                                   context_spec.horizon_days)

    lo = raw.min(axis=0)
    span = raw.max(axis=0) - lo
    normed = np.where(span > 0, (raw - lo) / np.where(span > 0, span, 1.0), 0.0)

    names = tuple(s.display for s in context_spec.traits)
    return {
        user: ContextVector(user_id=user, day=t, names=names, values=normed[i].copy())
        for i, user in enumerate(users)
    }


def compute_context(bundle: LogBundle, user: str, t: int, context_spec: ContextSpec,
                    cohort: set[str]) -> ContextVector:
    """Single-user view of :func:`compute_contexts` (normalization still uses the cohort)."""
    if user not in cohort:
        raise ValueError(f"user {user!r} not in cohort")
    return compute_contexts(bundle, cohort, t, context_spec)[user]
