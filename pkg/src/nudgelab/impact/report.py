"""Impact report assembly: the summary table, CSV exports, and SVG series plots."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..bandit import SensitivityReport
from .lmm import LMMFit
from .series import DailySeriesResult
from .success import AssignmentMetrics, SuccessBreakdown

TABLE_ROW_LABELS = [
    "T-test: days with significant effect",
    "T-test: largest effect",
    "T-test: largest statistical power",
    "T-test: average effect",
    "T-test: average statistical power",
    "LMM: nudged that week",
    "LMM: baseline expenditure",
    "Bandit: assigned to nudge",
    "Bandit: majority assigned to nudge",
    "Successful recommendations",
]

LMM_TERM_DISPLAY = {
    "intercept": "Intercept",
    "baseline": "Baseline expenditure",
    "intervention": "Adaptive intervention",
    "nonadaptive": "Non-adaptive intervention",
    "nudged": "Nudged that week",
    "nudged_personalized": "Nudged that week (personalized)",
    "nudged_random": "Nudged that week (random)",
    "week": "Week number",
    "intervention_week": "Week number in intervention",
}


@dataclass
class ImpactReport:
    alpha: float
    ttest: dict[str, DailySeriesResult] = field(default_factory=dict)
    stratified: dict[str, dict[str, Optional[DailySeriesResult]]] = field(default_factory=dict)
    lmm_full: Optional[LMMFit] = None
    lmm_reduced: Optional[LMMFit] = None
    sensitivity: Optional[SensitivityReport] = None
    success: Optional[SuccessBreakdown] = None
    assignment: Optional[AssignmentMetrics] = None
    best_arm: list[tuple[str, str, float, dict[str, float]]] = field(default_factory=list)


def _fmt(value, pct: bool = False) -> str:
    if value is None:
        return "-"
    if pct:
        return f"{100 * value:.0f}%"
    return f"{value:.2f}"


def _lmm_value(fit: Optional[LMMFit], term: str) -> Optional[float]:
    if fit is None or term not in fit.terms:
        return None
    return fit.coef(term)


def render_summary_markdown(report: ImpactReport) -> str:
    """Markdown summary table with one column per compared intervention group."""
    groups = list(report.ttest) or ["all"]
    lines = ["# Impact summary", ""]
    lines.append("| Metric | " + " | ".join(groups) + " |")
    lines.append("|" + " --- |" * (len(groups) + 1))

    def row(label: str, values: list[str]) -> None:
        lines.append("| " + label + " | " + " | ".join(values) + " |")

    def per_group(fn) -> list[str]:
        return [fn(report.ttest.get(g)) for g in groups]

    row(TABLE_ROW_LABELS[0], per_group(lambda s: _fmt(s.summary.pct_significant_days, pct=True) if s else "-"))
    row(TABLE_ROW_LABELS[1], per_group(lambda s: _fmt(s.summary.largest_effect) if s else "-"))
    row(TABLE_ROW_LABELS[2], per_group(lambda s: _fmt(s.summary.largest_power) if s else "-"))
    row(TABLE_ROW_LABELS[3], per_group(lambda s: _fmt(s.summary.average_effect) if s else "-"))
    row(TABLE_ROW_LABELS[4], per_group(lambda s: _fmt(s.summary.average_power) if s else "-"))

    reduced = report.lmm_reduced
    nudged = (_lmm_value(reduced, "nudged")
              if reduced and "nudged" in reduced.terms
              else _lmm_value(reduced, "nudged_personalized"))
    span = [""] * (len(groups) - 1)
    row(TABLE_ROW_LABELS[5], [_fmt(nudged)] + span)
    row(TABLE_ROW_LABELS[6], [_fmt(_lmm_value(reduced, "baseline"))] + span)

    if report.assignment is not None:
        row(TABLE_ROW_LABELS[7], [_fmt(report.assignment.avg_fraction_nudged, pct=True)] + span)
        row(TABLE_ROW_LABELS[8], [report.assignment.majority_label] + span)
    else:
        row(TABLE_ROW_LABELS[7], ["-"] + span)
        row(TABLE_ROW_LABELS[8], ["-"] + span)

    if report.success is not None:
        row(TABLE_ROW_LABELS[9], [f"{100 * report.success.overall_success_rate:.1f}%"] + span)
    else:
        row(TABLE_ROW_LABELS[9], ["-"] + span)

    if report.lmm_full is not None:
        lines += ["", "## LMM (all terms)", ""] + _lmm_markdown(report.lmm_full)
    if reduced is not None:
        lines += ["", "## LMM (only significant terms)", ""] + _lmm_markdown(reduced)
    if report.sensitivity is not None:
        lines += ["", "## Sensitivity to context", ""] + _sensitivity_markdown(report.sensitivity)
    if report.success is not None:
        lines += ["", "## Recommendation success", ""] + _success_markdown(report.success)
    return "\n".join(lines) + "\n"


def _lmm_markdown(fit: LMMFit) -> list[str]:
    lines = ["| | Coef. | Std.Err. | p-value |", "| --- | --- | --- | --- |"]
    for i, term in enumerate(fit.terms):
        display = LMM_TERM_DISPLAY.get(term, term)
        lines.append(f"| {display} | {fit.coefficients[i]:.3f} | "
                     f"{fit.standard_errors[i]:.3f} | {fit.p_values[i]:.3f} |")
    return lines


def _sensitivity_markdown(rep: SensitivityReport) -> list[str]:
    header = "| Trait | " + " | ".join(rep.arm_labels) + " |"
    lines = [header, "|" + " --- |" * (len(rep.arm_labels) + 1)]
    for b, trait in enumerate(rep.trait_names):
        cells = [rep.categories[k][b] for k in range(len(rep.arm_labels))]
        lines.append("| " + trait + " | " + " | ".join(c if c != "negligible" else "" for c in cells) + " |")
    return lines


def _success_markdown(s: SuccessBreakdown) -> list[str]:
    lines = ["| Interaction | Messages | Successes | Share of successes | Success rate |",
             "| --- | --- | --- | --- | --- |"]
    for interaction, stats in s.per_interaction.items():
        lines.append(f"| {interaction} | {stats.n_messages} | {stats.n_successes} | "
                     f"{100 * s.share_of_successes(interaction):.1f}% | "
                     f"{100 * stats.success_rate:.1f}% |")
    return lines


# ---------------------------------------------------------------------------
# File emission


def _write_series_csv(path, result: DailySeriesResult, which: str) -> None:
    tests = result.daily if which == "daily" else result.accumulated
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "t_stat", "df", "p_value", "significant", "mean_diff",
                         "ci_lower", "ci_upper"])
        for i, t in enumerate(tests):
            lo = result.ci_lower[i] if which == "accumulated" else ""
            hi = result.ci_upper[i] if which == "accumulated" else ""
            writer.writerow([result.days[i], f"{t.t_stat:.6g}", f"{t.df:.6g}",
                             f"{t.p_value:.6g}", int(t.significant), f"{t.mean_diff:.6g}",
                             lo if lo == "" else f"{lo:.6g}", hi if hi == "" else f"{hi:.6g}"])


def _write_lmm_csv(path, fit: LMMFit) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["term", "coef", "stderr", "pvalue"])
        for i, term in enumerate(fit.terms):
            writer.writerow([term, f"{fit.coefficients[i]:.10g}",
                             f"{fit.standard_errors[i]:.10g}", f"{fit.p_values[i]:.10g}"])


def _write_sensitivity_csv(path, rep: SensitivityReport) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "trait", "raw_mean", "soft_mean", "normalized", "category"])
        for k, arm in enumerate(rep.arm_labels):
            for b, trait in enumerate(rep.trait_names):
                writer.writerow([arm, trait, f"{rep.raw_mean[k, b]:.10g}",
                                 f"{rep.soft_mean[k, b]:.10g}",
                                 f"{rep.normalized[k, b]:.10g}", rep.categories[k][b]])


def _write_success_csv(path, s: SuccessBreakdown) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "interaction", "n_messages", "n_successes",
                         "share_of_successes", "success_rate"])
        scopes = [("all", s)] + sorted(s.by_arm.items())
        for arm, scope in scopes:
            for interaction, stats in scope.per_interaction.items():
                writer.writerow([arm, interaction, stats.n_messages, stats.n_successes,
                                 f"{scope.share_of_successes(interaction):.6g}",
                                 f"{stats.success_rate:.6g}"])


def _write_best_arm_csv(path, rows) -> None:
    trait_names = sorted({name for _, _, _, traits in rows for name in traits})
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "best_arm", "confidence"] + trait_names)
        for user, arm, conf, traits in rows:
            writer.writerow([user, arm, f"{conf:.6g}"] + [f"{traits.get(n, 0.0):.6g}" for n in trait_names])


def write_svg_series(path, days, diff, lower, upper, width: int = 640, height: int = 320) -> None:
    """Minimal difference-in-means plot: CI band polygon plus series polyline."""
    days = np.asarray(days, dtype=float)
    diff = np.asarray(diff, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    pad = 30
    lo = min(lower.min(), 0.0)
    hi = max(upper.max(), 0.0)
    span = hi - lo or 1.0

    def sx(d):
        return pad + (d - days[0]) / max(days[-1] - days[0], 1) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - lo) / span * (height - 2 * pad)

    band = " ".join(f"{sx(d):.1f},{sy(u):.1f}" for d, u in zip(days, upper))
    band += " " + " ".join(f"{sx(d):.1f},{sy(l):.1f}" for d, l in zip(days[::-1], lower[::-1]))
    line = " ".join(f"{sx(d):.1f},{sy(v):.1f}" for d, v in zip(days, diff))
    zero = f'<line x1="{pad}" y1="{sy(0):.1f}" x2="{width - pad}" y2="{sy(0):.1f}" stroke="black"/>'
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
           f'<polygon points="{band}" fill="lightblue" opacity="0.6"/>'
           f'{zero}<polyline points="{line}" fill="none" stroke="steelblue" stroke-width="2"/></svg>')
    Path(path).write_text(svg, encoding="utf-8")


def write_report_files(report: ImpactReport, outdir, plots: bool = True) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    summary = outdir / "summary.md"
    summary.write_text(render_summary_markdown(report), encoding="utf-8")
    written.append(summary)

    for group, series in report.ttest.items():
        for which in ("daily", "accumulated"):
            path = outdir / f"ttest_{which}_{group}.csv"
            _write_series_csv(path, series, which)
            written.append(path)
        if plots:
            path = outdir / f"diff_in_means_{group}.svg"
            diff = [t.mean_diff for t in series.accumulated]
            write_svg_series(path, series.days, diff, series.ci_lower, series.ci_upper)
            written.append(path)

    if report.lmm_full is not None:
        _write_lmm_csv(outdir / "lmm_full.csv", report.lmm_full)
        written.append(outdir / "lmm_full.csv")
    if report.lmm_reduced is not None:
        _write_lmm_csv(outdir / "lmm_reduced.csv", report.lmm_reduced)
        written.append(outdir / "lmm_reduced.csv")
    if report.sensitivity is not None:
        _write_sensitivity_csv(outdir / "sensitivity.csv", report.sensitivity)
        written.append(outdir / "sensitivity.csv")
    if report.success is not None:
        _write_success_csv(outdir / "success.csv", report.success)
        written.append(outdir / "success.csv")
    if report.best_arm:
        _write_best_arm_csv(outdir / "best_arm.csv", report.best_arm)
        written.append(outdir / "best_arm.csv")
    if report.assignment is not None:
        path = outdir / "assignment.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            arms = sorted({a for f in report.assignment.weekly_fractions.values() for a in f})
            writer.writerow(["day"] + arms)
            for day, fracs in sorted(report.assignment.weekly_fractions.items()):
                writer.writerow([day] + [f"{fracs.get(a, 0.0):.6g}" for a in arms])
        written.append(path)
    return written
