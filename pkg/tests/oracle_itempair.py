"""Independent brute-force reference for the per-user pair filter.

Written directly from the two-step procedure description with plain scans
over the raw purchase rows, sharing no code with the package implementation.
"""

from __future__ import annotations


def _last_purchase_gap(purchases, user, item, t):
    """Days since the latest purchase of item at or before t; -1 if none."""
    days = [e.day for e in purchases if e.user_id == user and e.item_id == item and e.day <= t]
    if not days:
        return -1
    return t - max(days)


def _mean_cadence(purchases, user, item, t, t_months):
    """Average gap between consecutive purchase days inside (t - 30*T, t]."""
    window = [e.day for e in purchases
              if e.user_id == user and e.item_id == item and t - 30 * t_months < e.day <= t]
    days = sorted(set(window))
    if len(days) < 2:
        return None
    total = days[-1] - days[0]
    return total / (len(days) - 1)


def brute_force_filter(candidate_pairs, purchases, user, t, t_months=3):
    """Set of (frequent_item, infrequent_item) tuples the procedure retains.

    Step (a): keep orientations where one item's recency ratio lies strictly
    in (0, 1).  Step (b): the other item must be never-purchased (d = -1) or
    off-cadence (ratio outside (0, 1), including undefined).  Step (c):
    never-purchased pairs take precedence; otherwise keep the pairs with the
    maximal ratio gap, treating an undefined other-ratio as an infinite gap.
    """
    survivors = []
    for item_a, item_b in candidate_pairs:
        for freq, other in ((item_a, item_b), (item_b, item_a)):
            d_f = _last_purchase_gap(purchases, user, freq, t)
            if d_f < 0:
                continue
            cad_f = _mean_cadence(purchases, user, freq, t, t_months)
            if cad_f is None or cad_f <= 0:
                continue
            ratio_f = d_f / cad_f
            if not (0 < ratio_f < 1):
                continue
            d_o = _last_purchase_gap(purchases, user, other, t)
            if d_o == -1:
                survivors.append((freq, other, ratio_f, None, True))
                break
            cad_o = _mean_cadence(purchases, user, other, t, t_months)
            ratio_o = d_o / cad_o if cad_o is not None and cad_o > 0 else None
            if ratio_o is None or not (0 < ratio_o < 1):
                survivors.append((freq, other, ratio_f, ratio_o, False))
                break

    never = [(f, o) for f, o, _, _, is_never in survivors if is_never]
    if never:
        return set(never)
    if not survivors:
        return set()

    def gap(entry):
        _, _, ratio_f, ratio_o, _ = entry
        if ratio_o is None:
            return float("inf")
        return abs(ratio_f - ratio_o)

    best = max(gap(s) for s in survivors)
    return {(f, o) for f, o, *_ in survivors
            if gap(next(s for s in survivors if s[0] == f and s[1] == o)) >= best - 1e-9}
