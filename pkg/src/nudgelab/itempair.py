"""Two-step item-pair recommendation.

Step one ranks the catalog's co-purchased pairs (same user, same day) over a
trailing window and keeps the top slice with both items in stock.  Step two
filters that list per user, looking for pairs where one item is bought on the
user's usual cadence while the other is new (or off-cadence) to them, and
picks one of the surviving pairs at random.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .traits import DAYS_PER_MONTH, PurchaseIndex, _as_index, avg_interpurchase_days, days_since_last_purchase

DEFAULT_TOP_N = 100
_GAP_TOL = 1e-9


@dataclass(frozen=True)
class ItemPair:
    item_i: str
    item_j: str
    co_purchase_count: int = 0
    co_purchase_revenue: float = 0.0

    def __post_init__(self):
        if self.item_i == self.item_j:
            raise ValueError("pair items must differ")

    @property
    def key(self) -> tuple[str, str]:
        return (self.item_i, self.item_j) if self.item_i < self.item_j else (self.item_j, self.item_i)


@dataclass(frozen=True)
class CandidateList:
    as_of_day: int
    ranking_mode: str  # "count" or "revenue"
    pairs: tuple[ItemPair, ...]


@dataclass(frozen=True)
class Recommendation:
    user_id: str
    day: int
    pair: ItemPair
    frequent_item: str
    infrequent_item: str


def generate_candidate_pairs(log, stock: dict[str, bool], t: int, t_months: int = 3,
                             mode: str = "revenue", top_n: int = DEFAULT_TOP_N) -> CandidateList:
    """Top co-purchased in-stock pairs over the trailing ``t_months`` window."""
    if t_months < 1:
        raise ValueError("t_months must be >= 1")
    if mode not in ("count", "revenue"):
        raise ValueError(f"unknown ranking mode {mode!r}")
    index = _as_index(log)
    start = t - DAYS_PER_MONTH * t_months

    # basket = (user, day); collect each basket's items with their revenue
    baskets: dict[tuple[str, int], dict[str, float]] = {}
    for e in index.events:
        if start < e.day <= t:
            basket = baskets.setdefault((e.user_id, e.day), {})
            basket[e.item_id] = basket.get(e.item_id, 0.0) + e.revenue

    counts: dict[tuple[str, str], int] = {}
    revenues: dict[tuple[str, str], float] = {}
    for basket in baskets.values():
        items = sorted(basket)
        for a in range(len(items)):
            for b in range(a + 1, len(items)):
                key = (items[a], items[b])
                counts[key] = counts.get(key, 0) + 1
                revenues[key] = revenues.get(key, 0.0) + basket[items[a]] + basket[items[b]]

    pairs = [
        ItemPair(i, j, co_purchase_count=counts[(i, j)], co_purchase_revenue=revenues[(i, j)])
        for (i, j) in counts
        if stock.get(i, False) and stock.get(j, False)
    ]
    if mode == "revenue":
        rank_key = lambda p: (-p.co_purchase_revenue, -p.co_purchase_count, p.item_i, p.item_j)
    else:
        rank_key = lambda p: (-p.co_purchase_count, -p.co_purchase_revenue, p.item_i, p.item_j)
    pairs.sort(key=rank_key)
    return CandidateList(as_of_day=t, ranking_mode=mode, pairs=tuple(pairs[:top_n]))


def _recency_ratio(index: PurchaseIndex, user: str, item: str, t: int,
                   t_months: int) -> tuple[int, Optional[float]]:
    """(days since last purchase, ratio to average cadence or None when undefined)."""
    d = days_since_last_purchase(index, user, item, t)
    if d < 0:
        return d, None
    mean_gap = avg_interpurchase_days(index, user, item, t, t_months)
    if mean_gap is None or mean_gap <= 0:
        return d, None
    return d, d / mean_gap


def filter_pairs_for_user(candidates: CandidateList, log, user: str, t: int,
                          t_months: int = 3) -> list[Recommendation]:
    """Per-user filtering of the candidate list.

    Keeps pairs where one item is on-cadence (recency ratio strictly inside
    (0, 1)) and the other is never-purchased or off-cadence.  Pairs whose
    other item was never purchased take precedence; otherwise the pairs with
    the largest recency-ratio gap are kept.
    """
    index = _as_index(log)
    ratio_cache: dict[str, tuple[int, Optional[float]]] = {}

    def info(item: str) -> tuple[int, Optional[float]]:
        if item not in ratio_cache:
            ratio_cache[item] = _recency_ratio(index, user, item, t, t_months)
        return ratio_cache[item]

    def on_cadence(item: str) -> bool:
        _, ratio = info(item)
        return ratio is not None and 0 < ratio < 1

    retained: list[Recommendation] = []
    for pair in candidates.pairs:
        for frequent, other in ((pair.item_i, pair.item_j), (pair.item_j, pair.item_i)):
            if not on_cadence(frequent):
                continue
            d_other, _ = info(other)
            if d_other == -1 or not on_cadence(other):
                retained.append(Recommendation(user_id=user, day=t, pair=pair,
                                               frequent_item=frequent, infrequent_item=other))
                break  # one orientation per pair

    never = [r for r in retained if info(r.infrequent_item)[0] == -1]
    if never:
        return never
    if not retained:
        return []

    def gap(rec: Recommendation) -> float:
        _, r_freq = info(rec.frequent_item)
        _, r_other = info(rec.infrequent_item)
        # purchased item with undefined cadence: recency relative to cadence is
        # unknown, treat as maximally different from the on-cadence item
        if r_other is None:
            return float("inf")
        return abs(r_freq - r_other)

    best = max(gap(r) for r in retained)
    if best == float("inf"):
        return [r for r in retained if gap(r) == float("inf")]
    return [r for r in retained if gap(r) >= best - _GAP_TOL]


def recommend(candidates: CandidateList, log, user: str, t: int,
              rng: np.random.Generator, t_months: int = 3) -> Optional[Recommendation]:
    """Uniform random choice among the user's filtered pairs; None when empty."""
    filtered = filter_pairs_for_user(candidates, log, user, t, t_months)
    if not filtered:
        return None
    return filtered[rng.integers(len(filtered))]


def random_pair(catalog: Sequence[str], stock: dict[str, bool], rng: np.random.Generator) -> ItemPair:
    """Two distinct in-stock items drawn uniformly without replacement."""
    in_stock = sorted(item for item in catalog if stock.get(item, False))
    if len(in_stock) < 2:
        raise ValueError("need at least 2 in-stock items")
    i, j = rng.choice(len(in_stock), size=2, replace=False)
    return ItemPair(in_stock[i], in_stock[j])


# ---------------------------------------------------------------------------
# CSV interchange

RECOMMENDATION_HEADER = ["user_id", "day", "item_i", "item_j", "infrequent_item"]


def write_recommendations(path, recs: Sequence[Recommendation]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECOMMENDATION_HEADER)
        for r in recs:
            writer.writerow([r.user_id, r.day, r.pair.item_i, r.pair.item_j, r.infrequent_item])


MESSAGE_TEMPLATE = "Pharmacies in your area typically purchase {a} and {b}. Click here to order now!"


def render_message(rec: Recommendation) -> str:
    return MESSAGE_TEMPLATE.format(a=rec.pair.item_i, b=rec.pair.item_j)
