"""Adaptive nudge engine for pharmacy e-commerce.

Builds behavioral traits from purchase, login, and nudge logs, recommends
item pairs, assigns nudges with a conjugate linear Thompson-sampling bandit,
and measures impact with t-test series, a random-intercept mixed model, and
sensitivity analysis.  A simulator with known ground-truth effects ties the
pieces together for end-to-end experiments.
"""

from .bandit import (BanditModel, Decision, Prior, init_model, sensitivity,
                     thompson_sample_arm, ucb_select, update)
from .events import (LoginEvent, NudgeEvent, PurchaseEvent, read_login_log,
                     read_nudge_log, read_purchase_log)
from .itempair import (ItemPair, Recommendation, generate_candidate_pairs,
                       recommend, render_message)
from .pipeline import analyze_logs, analyze_sim_result, build_weekly_panel
from .simulator import (EffectModel, ExperimentDesign, PopulationSpec,
                        run_experiment, synth_population)
from .traits import (CohortRules, ContextSpec, ContextVector, LogBundle,
                     TraitSpec, compute_context, compute_contexts,
                     compute_reward, eligible_cohort)

__version__ = "0.1.0"

__all__ = [
    "BanditModel", "Decision", "Prior", "init_model", "sensitivity",
    "thompson_sample_arm", "ucb_select", "update",
    "LoginEvent", "NudgeEvent", "PurchaseEvent",
    "read_login_log", "read_nudge_log", "read_purchase_log",
    "ItemPair", "Recommendation", "generate_candidate_pairs", "recommend",
    "render_message",
    "analyze_logs", "analyze_sim_result", "build_weekly_panel",
    "EffectModel", "ExperimentDesign", "PopulationSpec", "run_experiment",
    "synth_population",
    "CohortRules", "ContextSpec", "ContextVector", "LogBundle", "TraitSpec",
    "compute_context", "compute_contexts", "compute_reward", "eligible_cohort",
]
