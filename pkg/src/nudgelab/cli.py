"""Batch command-line entry point.

Subcommands: simulate | recommend | assign | analyze | report.  All inputs
come from a YAML config plus a handful of flags; every run is a pure
function of (config, input files, seed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bandit as bd
from . import events, itempair, pipeline, simulator
from .impact import render_summary_markdown, write_report_files
from .impact.lmm import LMMError
from .traits import (CohortRules, ContextSpec, LogBundle, TraitSpec, compute_contexts,
                     eligible_cohort)

ENV_PREFIX = "NUDGELAB_"

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_CONFIG = 2

# named sub-streams derived from the single config seed
STREAM_SIMULATE = 0
STREAM_RECOMMEND = 1
STREAM_ASSIGN = 2
STREAM_ANALYZE = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


def _load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    try:
        cfg = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise CliError(f"config parse error in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError(f"config root must be a mapping: {path}")
    return cfg


def _require_file(cfg: dict, key: str) -> Path:
    value = cfg.get(key)
    if not value:
        raise CliError(f"config key {key!r} is required")
    path = Path(value)
    if not path.exists():
        raise CliError(f"input file not found: {path}")
    return path


def _context_spec(cfg: dict) -> ContextSpec:
    traits = []
    for entry in cfg.get("traits", []):
        if isinstance(entry, str):
            traits.append(TraitSpec(entry))
        else:
            traits.append(TraitSpec(entry["name"], window_days=entry.get("window_days"),
                                    label=entry.get("label")))
    if not traits:
        raise CliError("context spec needs at least one trait")
    return ContextSpec(tuple(traits), horizon_days=int(cfg.get("horizon_days", 70)))


def _cohort_rules(cfg: dict) -> CohortRules:
    return CohortRules(
        login_recency_days=int(cfg.get("login_recency_days", 40)),
        login_freq_window_days=int(cfg.get("login_freq_window_days", 60)),
        min_login_count=float(cfg.get("min_login_count", 60 / 7)),
        spend_window_days=int(cfg.get("spend_window_days", 90)),
        exclude_top_spender_pct=float(cfg.get("exclude_top_spender_pct", 0.2)),
    )


def _effect(cfg: dict) -> simulator.EffectModel:
    mod = cfg.get("trait_modulation")
    modulation = None
    if mod:
        modulation = simulator.TraitModulation(trait=mod["trait"],
                                               floor=float(mod.get("floor", 0.0)),
                                               slope=float(mod.get("slope", 1.0)))
    kwargs = dict(
        immediate_uplift=float(cfg.get("immediate_uplift", 0.0)),
        adopt_probability=float(cfg.get("adopt_probability", 0.0)),
        delay_weeks_probs=tuple(cfg.get("delay_weeks_probs", [1.0])),
        novelty_decay=float(cfg.get("novelty_decay", 1.0)),
        trait_modulation=modulation,
    )
    if "interaction_probs" in cfg:
        kwargs["interaction_probs"] = {k: float(v) for k, v in cfg["interaction_probs"].items()}
    if "interaction_multipliers" in cfg:
        kwargs["interaction_multipliers"] = {k: float(v)
                                             for k, v in cfg["interaction_multipliers"].items()}
    return simulator.EffectModel(**kwargs)


def _design(cfg: dict) -> simulator.ExperimentDesign:
    switch = cfg.get("decision_weekday_switch")
    return simulator.ExperimentDesign(
        weeks=int(cfg["weeks"]),
        context_spec=_context_spec(cfg.get("context", {})),
        splits={k: float(v) for k, v in cfg.get("splits", {
            "pure_control": 0.35, "adaptive": 0.60, "non_adaptive": 0.05}).items()},
        adaptive_arms=tuple(cfg.get("adaptive_arms", ["control", "personalized"])),
        assignment_scheme=cfg.get("assignment_scheme", "adaptive"),
        micro_p=float(cfg.get("micro_p", 0.5)),
        decision_weekday=int(cfg.get("decision_weekday", 0)),
        decision_weekday_switch=tuple(switch) if switch else None,
        cohort_rules=_cohort_rules(cfg.get("cohort", {})),
        burnin_weeks=int(cfg.get("burnin_weeks", 12)),
        candidate_months=int(cfg.get("candidate_months", 3)),
        ranking_mode=cfg.get("ranking_mode", "revenue"),
        top_n_pairs=int(cfg.get("top_n_pairs", 100)),
        sampling_method=cfg.get("sampling_method", "two_step"),
    )


def _population_spec(cfg: dict) -> simulator.PopulationSpec:
    return simulator.PopulationSpec(
        n_users=int(cfg["n_users"]),
        n_items=int(cfg["n_items"]),
        baseline_spend_mu=float(cfg.get("baseline_spend_mu", 3.5)),
        baseline_spend_sigma=float(cfg.get("baseline_spend_sigma", 0.5)),
        pair_affinity=float(cfg.get("pair_affinity", 0.0)),
        n_affine_pairs=int(cfg.get("n_affine_pairs", 0)),
        weekly_purchase_rate=float(cfg.get("weekly_purchase_rate", 2.0)),
        login_rate=float(cfg.get("login_rate", 0.5)),
        stockout_probability=float(cfg.get("stockout_probability", 0.0)),
    )


def _write_meta(outdir: Path, result: simulator.SimResult) -> None:
    meta = {"start_day": result.start_day, "end_day": result.end_day, "seed": result.seed}
    (outdir / "run_meta.json").write_text(json.dumps(meta), encoding="utf-8")


def cmd_simulate(cfg: dict, out: Path, seed: int, alpha: float) -> int:
    design = _design(cfg.get("design", {}))
    spec = _population_spec(cfg.get("population", {}))
    effect = _effect(cfg.get("effect", {}))
    rng = _rng(seed, STREAM_SIMULATE)
    population = simulator.synth_population(spec, rng)
    result = simulator.run_experiment(design, population, effect, rng, seed=seed)

    out.mkdir(parents=True, exist_ok=True)
    events.write_purchase_log(out / "purchase_log.csv", result.purchases)
    events.write_login_log(out / "login_log.csv", result.logins)
    events.write_nudge_log(out / "nudge_log.csv", result.nudges)
    bd.write_decision_log(out / "decisions.csv", result.decisions)
    bd.save_snapshot(result.model, out / "model.json")
    pipeline.write_groups(out / "groups.csv", result.groups)
    _write_meta(out, result)

    report = pipeline.analyze_sim_result(result, alpha=alpha, rng=_rng(seed, STREAM_ANALYZE))
    write_report_files(report, out, plots=bool(cfg.get("analysis", {}).get("plots", True)))
    return EXIT_OK


def cmd_recommend(cfg: dict, out: Path, seed: int, alpha: float) -> int:
    purchases = events.read_purchase_log(_require_file(cfg, "purchase_log"))
    stock = events.read_stock_file(_require_file(cfg, "stock_file"))
    t = int(cfg.get("day", max((e.day for e in purchases), default=0)))
    months = int(cfg.get("candidate_months", 3))
    mode = cfg.get("ranking_mode", "revenue")
    top_n = int(cfg.get("top_n_pairs", itempair.DEFAULT_TOP_N))

    if cfg.get("login_log"):
        logins = events.read_login_log(_require_file(cfg, "login_log"))
        users = sorted(eligible_cohort(purchases, logins, t, _cohort_rules(cfg.get("cohort", {}))))
    else:
        users = sorted({e.user_id for e in purchases})

    rng = _rng(seed, STREAM_RECOMMEND)
    candidates = itempair.generate_candidate_pairs(purchases, stock, t, t_months=months,
                                                   mode=mode, top_n=top_n)
    rows = []
    for user in users:
        rec = itempair.recommend(candidates, purchases, user, t, rng, t_months=months)
        if rec is not None:
            rows.append(rec)

    out.mkdir(parents=True, exist_ok=True)
    path = out / "recommendations.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow(itempair.RECOMMENDATION_HEADER + ["message"])
        for r in rows:
            writer.writerow([r.user_id, r.day, r.pair.item_i, r.pair.item_j,
                             r.infrequent_item, itempair.render_message(r)])
    return EXIT_OK


def _load_bundle(cfg: dict, require_nudges: bool = False) -> tuple[LogBundle, bool]:
    purchases = events.read_purchase_log(_require_file(cfg, "purchase_log"))
    logins = events.read_login_log(_require_file(cfg, "login_log")) if cfg.get("login_log") else []
    nudges = []
    have_nudges = bool(cfg.get("nudge_log"))
    if have_nudges:
        nudges = events.read_nudge_log(_require_file(cfg, "nudge_log"))
    elif require_nudges:
        raise CliError("config key 'nudge_log' is required")
    return LogBundle(purchases=purchases, nudges=nudges, logins=logins), have_nudges


def cmd_assign(cfg: dict, out: Path, seed: int, alpha: float) -> int:
    bundle, _ = _load_bundle(cfg)
    groups = pipeline.read_groups(_require_file(cfg, "groups"))
    t = int(cfg["day"])
    spec = _context_spec(cfg.get("context", {}))
    arms = tuple(cfg.get("adaptive_arms", ["control", "personalized"]))

    if cfg.get("model"):
        model = bd.load_snapshot(_require_file(cfg, "model"))
    else:
        model = bd.init_model(arms, len(spec.traits))

    adaptive = sorted(u for u, g in groups.items() if g == "adaptive")
    if not adaptive:
        raise CliError("no adaptive users in the groups file", code=EXIT_INFEASIBLE)
    contexts = compute_contexts(bundle, set(adaptive), t, spec)

    rng = _rng(seed, STREAM_ASSIGN)
    method = cfg.get("sampling_method", "two_step")
    decisions = []
    for user in adaptive:
        if cfg.get("policy", "thompson") == "ucb":
            decisions.append(bd.ucb_select(model, contexts[user].values,
                                           alpha=float(cfg.get("ucb_alpha", 1.0)),
                                           user_id=user, day=t))
        else:
            decisions.append(bd.thompson_sample_arm(model, contexts[user].values, rng,
                                                    method=method, user_id=user, day=t))

    out.mkdir(parents=True, exist_ok=True)
    bd.write_decision_log(out / "decisions.csv", decisions)
    bd.save_snapshot(model, out / "model.json")
    return EXIT_OK


def _run_analysis(cfg: dict, seed: int, alpha: float):
    bundle, have_nudges = _load_bundle(cfg)
    groups = pipeline.read_groups(_require_file(cfg, "groups"))
    meta = cfg.get("meta")
    if meta:
        meta_data = json.loads(_require_file(cfg, "meta").read_text(encoding="utf-8"))
        start_day, end_day = int(meta_data["start_day"]), int(meta_data["end_day"])
    else:
        start_day = int(cfg["start_day"])
        end_day = int(cfg["end_day"])

    decisions = None
    if cfg.get("decisions"):
        decisions = read_decision_log(_require_file(cfg, "decisions"))
    model = bd.load_snapshot(_require_file(cfg, "model")) if cfg.get("model") else None
    contexts = None
    if model is not None:
        adaptive = {u for u, g in groups.items() if g == "adaptive"}
        spec_cfg = cfg.get("context")
        if spec_cfg and adaptive:
            contexts = compute_contexts(bundle, adaptive, end_day - 1, _context_spec(spec_cfg))

    if not have_nudges:
        print("warning: no nudge log provided; success analysis skipped", file=sys.stderr)

    try:
        report = pipeline.analyze_logs(bundle, groups, start_day, end_day, alpha=alpha,
                                       decisions=decisions, model=model, contexts=contexts,
                                       rng=_rng(seed, STREAM_ANALYZE))
    except (LMMError, ValueError) as exc:
        raise CliError(f"analysis infeasible: {exc}", code=EXIT_INFEASIBLE) from exc
    return report


def cmd_analyze(cfg: dict, out: Path, seed: int, alpha: float) -> int:
    report = _run_analysis(cfg, seed, alpha)
    out.mkdir(parents=True, exist_ok=True)
    write_report_files(report, out, plots=bool(cfg.get("plots", True)))
    return EXIT_OK


def cmd_report(cfg: dict, out: Path, seed: int, alpha: float) -> int:
    report = _run_analysis(cfg, seed, alpha)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.md").write_text(render_summary_markdown(report), encoding="utf-8")
    return EXIT_OK


def read_decision_log(path) -> list[bd.Decision]:
    import csv as _csv
    decisions = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            scores = [float(v) for k, v in row.items() if k.startswith("score_")]
            decisions.append(bd.Decision(user_id=row["user_id"], day=int(row["day"]),
                                         chosen_arm=row["arm"],
                                         sampled_scores=np.array(scores or [0.0])))
    return decisions


COMMANDS = {
    "simulate": cmd_simulate,
    "recommend": cmd_recommend,
    "assign": cmd_assign,
    "analyze": cmd_analyze,
    "report": cmd_report,
}


def _env_default(name: str, fallback=None):
    return os.environ.get(ENV_PREFIX + name.upper(), fallback)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nudgelab",
                                     description="adaptive nudge engine batch commands")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=_env_default("config"), help="YAML config path")
    parser.add_argument("--out", default=_env_default("out", "out"), help="output directory")
    parser.add_argument("--seed", type=int,
                        default=(lambda v: int(v) if v is not None else None)(_env_default("seed")))
    parser.add_argument("--alpha", type=float,
                        default=float(_env_default("alpha", "0.1")))
    args = parser.parse_args(argv)

    try:
        if not args.config:
            raise CliError("--config is required (or set NUDGELAB_CONFIG)")
        cfg = _load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed")
        if seed is None:
            raise CliError("a seed is required: pass --seed or set 'seed' in the config")
        return COMMANDS[args.command](cfg, Path(args.out), int(seed), args.alpha)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
