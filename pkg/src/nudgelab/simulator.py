"""Synthetic pharmacy populations and end-to-end experiment execution.

The simulator produces the purchase/login/nudge/decision logs the rest of
the engine consumes, with a known ground-truth effect model so analysis
results can be checked against what was actually injected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import bandit as bd
from . import itempair
from .events import LoginEvent, NudgeEvent, PurchaseEvent
from .traits import (CohortRules, ContextSpec, LogBundle, PurchaseIndex, compute_contexts,
                     compute_reward, eligible_cohort)

GROUPS = ("pure_control", "adaptive", "non_adaptive")


class SimConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PopulationSpec:
    n_users: int
    n_items: int
    baseline_spend_mu: float = 3.5     # log-normal parameters of per-order spend
    baseline_spend_sigma: float = 0.5
    pair_affinity: float = 0.0         # chance the partner item joins the basket
    n_affine_pairs: int = 0
    weekly_purchase_rate: float = 2.0  # expected order days per week
    login_rate: float = 0.5            # per-day login probability
    stockout_probability: float = 0.0  # per item, per decision point
    extra_item_probability: float = 0.3
    session_seconds_mean: float = 300.0

    def validate(self) -> None:
        if self.n_users < 2 or self.n_items < 2:
            raise SimConfigError("need at least 2 users and 2 items")
        for name in ("pair_affinity", "weekly_purchase_rate", "login_rate",
                     "stockout_probability", "extra_item_probability"):
            if getattr(self, name) < 0:
                raise SimConfigError(f"{name} must be non-negative")
        if self.baseline_spend_sigma < 0:
            raise SimConfigError("baseline_spend_sigma must be non-negative")
        if self.n_affine_pairs * 2 > self.n_items:
            raise SimConfigError("too many affine pairs for the catalog size")


@dataclass(frozen=True)
class TraitModulation:
    trait: str
    floor: float = 0.0
    slope: float = 1.0


@dataclass(frozen=True)
class EffectModel:
    immediate_uplift: float = 0.0      # extra expenditure per adopted nudge
    adopt_probability: float = 0.0
    delay_weeks_probs: tuple[float, ...] = (1.0,)  # index = weeks until adoption
    novelty_decay: float = 1.0         # multiplicative per prior exposure
    interaction_probs: dict[str, float] = field(default_factory=lambda: {
        "ignored": 0.55, "closed": 0.35, "opened": 0.10})
    interaction_multipliers: dict[str, float] = field(default_factory=lambda: {
        "ignored": 0.8, "closed": 1.2, "opened": 1.5})
    trait_modulation: Optional[TraitModulation] = None

    def validate(self) -> None:
        if not 0 <= self.adopt_probability <= 1:
            raise SimConfigError("adopt_probability must be in [0, 1]")
        if not 0 < self.novelty_decay <= 1:
            raise SimConfigError("novelty_decay must be in (0, 1]")
        if abs(sum(self.interaction_probs.values()) - 1) > 1e-9:
            raise SimConfigError("interaction probabilities must sum to 1")
        if abs(sum(self.delay_weeks_probs) - 1) > 1e-9:
            raise SimConfigError("delay distribution must sum to 1")


@dataclass(frozen=True)
class ExperimentDesign:
    weeks: int
    context_spec: ContextSpec
    splits: dict[str, float] = field(default_factory=lambda: {
        "pure_control": 0.35, "adaptive": 0.60, "non_adaptive": 0.05})
    adaptive_arms: tuple[str, ...] = ("control", "personalized")
    assignment_scheme: str = "adaptive"   # adaptive | pure_random | micro_randomized
    micro_p: float = 0.5
    decision_weekday: int = 0
    decision_weekday_switch: Optional[tuple[int, int]] = None  # (week, new weekday)
    cohort_rules: CohortRules = field(default_factory=CohortRules)
    burnin_weeks: int = 12
    candidate_months: int = 3
    ranking_mode: str = "revenue"
    top_n_pairs: int = 100
    reward_window_days: int = 7
    sampling_method: str = "two_step"

    def validate(self) -> None:
        if self.weeks < 0:
            raise SimConfigError("weeks must be non-negative")
        if abs(sum(self.splits.values()) - 1) > 1e-9:
            raise SimConfigError("group splits must sum to 1")
        if set(self.splits) - set(GROUPS):
            raise SimConfigError(f"unknown groups {set(self.splits) - set(GROUPS)}")
        if "control" not in self.adaptive_arms:
            raise SimConfigError("adaptive arms must include the control (no-nudge) arm")
        if self.assignment_scheme not in ("adaptive", "pure_random", "micro_randomized"):
            raise SimConfigError(f"unknown assignment scheme {self.assignment_scheme!r}")
        if not 0 <= self.decision_weekday <= 6:
            raise SimConfigError("decision_weekday must be in 0..6")


@dataclass
class Population:
    spec: PopulationSpec
    users: list[str]
    items: list[str]
    order_spend: dict[str, float]          # per-user mean spend per order day
    prefs: np.ndarray                      # n_users x n_items item-choice weights
    affine_partner: dict[str, str]


@dataclass
class SimState:
    population: Population
    day: int = 0
    purchases: list[PurchaseEvent] = field(default_factory=list)
    logins: list[LoginEvent] = field(default_factory=list)
    nudges: list[NudgeEvent] = field(default_factory=list)
    exposures: dict[str, int] = field(default_factory=dict)
    pending: list[tuple[int, str, str, float]] = field(default_factory=list)  # (day, user, item, value)


@dataclass
class NudgePlan:
    user: str
    arm_label: str
    pair: itempair.ItemPair
    infrequent_item: str
    modulation_value: float = 1.0


@dataclass
class SimResult:
    purchases: list[PurchaseEvent]
    logins: list[LoginEvent]
    nudges: list[NudgeEvent]
    decisions: list[bd.Decision]
    decision_rewards: list[tuple[str, int, str, float]]
    groups: dict[str, str]
    start_day: int
    end_day: int  # exclusive
    ground_truth: EffectModel
    seed: Optional[int]
    model: Optional[bd.BanditModel]
    last_contexts: dict[str, "object"]

    def bundle(self) -> LogBundle:
        return LogBundle(purchases=self.purchases, nudges=self.nudges, logins=self.logins)


def synth_population(spec: PopulationSpec, rng: np.random.Generator) -> Population:
    spec.validate()
    width = max(4, len(str(spec.n_users)))
    users = [f"u{n:0{width}d}" for n in range(spec.n_users)]
    items = [f"i{n:03d}" for n in range(spec.n_items)]
    spend = np.exp(rng.normal(spec.baseline_spend_mu, spec.baseline_spend_sigma, spec.n_users))
    prefs = rng.dirichlet(np.full(spec.n_items, 0.8), size=spec.n_users)
    partner: dict[str, str] = {}
    order = rng.permutation(spec.n_items)
    for p in range(spec.n_affine_pairs):
        a, b = items[order[2 * p]], items[order[2 * p + 1]]
        partner[a] = b
        partner[b] = a
    return Population(spec=spec, users=users, items=items,
                      order_spend=dict(zip(users, spend.tolist())),
                      prefs=prefs, affine_partner=partner)


def _simulate_day(state: SimState, rng: np.random.Generator) -> None:
    pop = state.population
    spec = pop.spec
    day = state.day
    p_order = min(spec.weekly_purchase_rate / 7.0, 1.0)
    for u_idx, user in enumerate(pop.users):
        if rng.random() < spec.login_rate:
            state.logins.append(LoginEvent(user_id=user, day=day,
                                           session_seconds=float(rng.exponential(spec.session_seconds_mean))))
        if rng.random() < p_order:
            basket = {pop.items[int(rng.choice(spec.n_items, p=pop.prefs[u_idx]))]}
            primary = next(iter(basket))
            if primary in pop.affine_partner and rng.random() < spec.pair_affinity:
                basket.add(pop.affine_partner[primary])
            if rng.random() < spec.extra_item_probability:
                basket.add(pop.items[int(rng.choice(spec.n_items, p=pop.prefs[u_idx]))])
            value = pop.order_spend[user] * float(rng.lognormal(0.0, 0.25))
            share = value / len(basket)
            for item in sorted(basket):
                state.purchases.append(PurchaseEvent(user_id=user, item_id=item, day=day,
                                                     quantity=1, unit_price=share, revenue=share))
    # adoptions scheduled for today land as ordinary purchases
    due = [p for p in state.pending if p[0] == day]
    if due:
        state.pending = [p for p in state.pending if p[0] != day]
        for _, user, item, value in due:
            state.purchases.append(PurchaseEvent(user_id=user, item_id=item, day=day,
                                                 quantity=1, unit_price=value, revenue=value))
    state.day += 1


def step_week(state: SimState, nudge_plans: Sequence[NudgePlan], effect: EffectModel,
              rng: np.random.Generator) -> list[NudgeEvent]:
    """Apply one week's nudges and simulate its 7 days of behavior."""
    effect.validate()
    week_start = state.day
    events: list[NudgeEvent] = []
    interactions = list(effect.interaction_probs)
    probs = np.array([effect.interaction_probs[i] for i in interactions])
    delays = np.array(effect.delay_weeks_probs)
    for plan in nudge_plans:
        interaction = interactions[int(rng.choice(len(interactions), p=probs))]
        exposures = state.exposures.get(plan.user, 0)
        p_adopt = (effect.adopt_probability
                   * effect.interaction_multipliers.get(interaction, 1.0)
                   * effect.novelty_decay**exposures)
        if effect.trait_modulation is not None:
            mod = effect.trait_modulation
            p_adopt *= mod.floor + mod.slope * plan.modulation_value
        p_adopt = min(max(p_adopt, 0.0), 1.0)
        if rng.random() < p_adopt:
            delay = int(rng.choice(len(delays), p=delays))
            land = week_start + 7 * delay + int(rng.integers(7))
            state.pending.append((land, plan.user, plan.infrequent_item, effect.immediate_uplift))
        state.exposures[plan.user] = exposures + 1
        event = NudgeEvent(user_id=plan.user, day=week_start,
                           pair=(plan.pair.item_i, plan.pair.item_j) if plan.pair else None,
                           arm_label=plan.arm_label, interaction=interaction)
        state.nudges.append(event)
        events.append(event)
    for _ in range(7):
        _simulate_day(state, rng)
    return events


def split_groups(users: Sequence[str], splits: dict[str, float],
                 rng: np.random.Generator) -> dict[str, str]:
    """Largest-remainder assignment of users to experiment groups."""
    users = list(users)
    shuffled = [users[i] for i in rng.permutation(len(users))]
    n = len(users)
    quotas = {g: splits.get(g, 0.0) * n for g in GROUPS}
    counts = {g: int(q) for g, q in quotas.items()}
    leftover = n - sum(counts.values())
    by_remainder = sorted(GROUPS, key=lambda g: -(quotas[g] - counts[g]))
    for g in by_remainder[:leftover]:
        counts[g] += 1
    assignment = {}
    pos = 0
    for g in GROUPS:
        for user in shuffled[pos:pos + counts[g]]:
            assignment[user] = g
        pos += counts[g]
    return assignment


def run_experiment(design: ExperimentDesign, population: Population, effect: EffectModel,
                   rng: np.random.Generator, prior: Optional[bd.Prior] = None,
                   seed: Optional[int] = None) -> SimResult:
    design.validate()
    effect.validate()
    state = SimState(population=population)

    for _ in range(design.burnin_weeks * 7):
        _simulate_day(state, rng)
    start = state.day

    cohort = eligible_cohort(state.purchases, state.logins, start, design.cohort_rules)
    if len(cohort) < 3 and design.weeks > 0:
        raise SimConfigError(f"eligible cohort too small ({len(cohort)} users); "
                             "extend the burn-in or relax the rules")
    groups = split_groups(sorted(cohort), design.splits, rng)
    adaptive_users = sorted(u for u, g in groups.items() if g == "adaptive")
    nonadaptive_users = sorted(u for u, g in groups.items() if g == "non_adaptive")

    d = len(design.context_spec.traits)
    model = bd.init_model(design.adaptive_arms, d, prior=prior)
    nudge_arm_labels = [a for a in design.adaptive_arms if a != "control"]

    decisions: list[bd.Decision] = []
    decision_rewards: list[tuple[str, int, str, float]] = []
    pending_updates: list[tuple[int, str, str, object]] = []  # (due day, user, arm, x)
    last_contexts: dict[str, object] = {}
    mod_trait = effect.trait_modulation.trait if effect.trait_modulation else None

    for week in range(design.weeks):
        weekday = design.decision_weekday
        if design.decision_weekday_switch and week >= design.decision_weekday_switch[0]:
            weekday = design.decision_weekday_switch[1]
        # align to this week's decision day; a backward weekday switch lands a
        # day late once rather than rewinding time
        target = start + 7 * week + weekday
        while state.day < target:
            _simulate_day(state, rng)
        t = state.day

        bundle = LogBundle(purchases=state.purchases, nudges=state.nudges, logins=state.logins)
        intervention_users = adaptive_users + nonadaptive_users
        contexts = compute_contexts(bundle, set(intervention_users), t, design.context_spec) \
            if intervention_users else {}
        last_contexts = {u: c for u, c in contexts.items() if u in set(adaptive_users)}

        stock = {item: rng.random() >= population.spec.stockout_probability
                 for item in population.items}
        index = PurchaseIndex(state.purchases)
        candidates = itempair.generate_candidate_pairs(
            index, stock, t, t_months=design.candidate_months,
            mode=design.ranking_mode, top_n=design.top_n_pairs)

        def modulation_value(user: str) -> float:
            if mod_trait is None:
                return 1.0
            ctx = contexts.get(user)
            return ctx.as_dict().get(mod_trait, 1.0) if ctx is not None else 1.0

        plans: list[NudgePlan] = []

        def plan_nudge(user: str, arm: str) -> bool:
            """True when a message actually goes out for this user and arm."""
            if arm == "personalized":
                rec = itempair.recommend(candidates, index, user, t, rng,
                                         t_months=design.candidate_months)
                if rec is None:
                    return False
                pair = itempair.ItemPair(rec.frequent_item, rec.infrequent_item)
                plans.append(NudgePlan(user=user, arm_label=arm, pair=pair,
                                       infrequent_item=rec.infrequent_item,
                                       modulation_value=modulation_value(user)))
                return True
            if arm == "random":
                if sum(stock.values()) < 2:
                    return False
                pair = itempair.random_pair(population.items, stock, rng)
                plans.append(NudgePlan(user=user, arm_label=arm, pair=pair,
                                       infrequent_item=pair.item_j,
                                       modulation_value=modulation_value(user)))
                return True
            return False

        for user in adaptive_users:
            x = contexts[user].values
            if design.assignment_scheme == "adaptive":
                decision = bd.thompson_sample_arm(model, x, rng, method=design.sampling_method,
                                                  user_id=user, day=t)
            elif design.assignment_scheme == "pure_random":
                arm = design.adaptive_arms[int(rng.integers(len(design.adaptive_arms)))]
                decision = bd.Decision(user_id=user, day=t, chosen_arm=arm,
                                       sampled_scores=np.zeros(model.k))
            else:  # micro_randomized
                if rng.random() < design.micro_p and nudge_arm_labels:
                    arm = nudge_arm_labels[int(rng.integers(len(nudge_arm_labels)))]
                else:
                    arm = "control"
                decision = bd.Decision(user_id=user, day=t, chosen_arm=arm,
                                       sampled_scores=np.zeros(model.k))
            decisions.append(decision)
            if decision.chosen_arm != "control":
                plan_nudge(user, decision.chosen_arm)
            pending_updates.append((t + design.reward_window_days, user, decision.chosen_arm, x))

        for user in nonadaptive_users:  # nudged every week with random pairs
            plan_nudge(user, "random")

        step_week(state, plans, effect, rng)

        index = PurchaseIndex(state.purchases)
        due = [p for p in pending_updates if p[0] <= state.day]
        pending_updates = [p for p in pending_updates if p[0] > state.day]
        for due_day, user, arm, x in due:
            obs = compute_reward(index, user, due_day - design.reward_window_days,
                                 window_days=design.reward_window_days)
            model = bd.update(model, arm, x, obs.reward)
            decision_rewards.append((user, obs.decision_day, arm, obs.reward))

    end = state.day  # exclusive experiment horizon

    # settle reward windows that extend past the last simulated week
    for _ in range(design.reward_window_days):
        if not pending_updates:
            break
        _simulate_day(state, rng)
    index = PurchaseIndex(state.purchases)
    for due_day, user, arm, x in pending_updates:
        obs = compute_reward(index, user, due_day - design.reward_window_days,
                             window_days=design.reward_window_days)
        model = bd.update(model, arm, x, obs.reward)
        decision_rewards.append((user, obs.decision_day, arm, obs.reward))

    return SimResult(purchases=state.purchases, logins=state.logins, nudges=state.nudges,
                     decisions=decisions, decision_rewards=decision_rewards, groups=groups,
                     start_day=start, end_day=end, ground_truth=effect, seed=seed,
                     model=model, last_contexts=last_contexts)


def replicate(design: ExperimentDesign, population_spec: PopulationSpec, effect: EffectModel,
              n_reps: int, base_seed: int, analyze=None) -> list:
    """Independent seeded runs; each analyzed by ``analyze`` (defaults to the
    full impact pipeline)."""
    if n_reps < 1:
        raise SimConfigError("n_reps must be >= 1")
    if analyze is None:
        from .pipeline import analyze_sim_result
        analyze = analyze_sim_result
    out = []
    for rep in range(n_reps):
        rng = np.random.default_rng(np.random.SeedSequence([base_seed, rep]))
        population = synth_population(population_spec, rng)
        result = run_experiment(design, population, effect, rng, seed=base_seed)
        out.append(analyze(result))
    return out
