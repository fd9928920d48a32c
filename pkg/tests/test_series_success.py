import numpy as np
import pytest

from nudgelab.impact import (ImpactReport, assignment_metrics, daily_expenditure_panel,
                             daily_series_tests, render_summary_markdown, stratified_tests,
                             success_analysis, write_report_files)
from nudgelab.bandit import Decision
from nudgelab.impact.report import TABLE_ROW_LABELS

from helpers import buy, nudge


def test_daily_panel_zero_fills():
    log = [buy("u1", "a", 2, price=4.0), buy("u1", "b", 2, price=6.0), buy("u2", "a", 3)]
    panel = daily_expenditure_panel(log, ["u1", "u2"], 0, 4)
    assert panel.shape == (2, 5)
    assert panel.at["u1", 2] == 10.0
    assert panel.at["u1", 3] == 0.0
    assert panel.at["u2", 3] == 10.0
    with pytest.raises(ValueError):
        daily_expenditure_panel(log, ["u1"], 5, 4)


def _separated_log(n=8, days=10, gap=50.0):
    rng = np.random.default_rng(0)
    log = []
    for i in range(n):
        for d in range(days):
            log.append(buy(f"t{i}", "a", d, price=gap + float(rng.normal(0, 2))))
            log.append(buy(f"c{i}", "a", d, price=10.0 + float(rng.normal(0, 2))))
    return log, [f"t{i}" for i in range(n)], [f"c{i}" for i in range(n)]


def test_daily_series_detects_separation():
    log, treat, control = _separated_log()
    panel = daily_expenditure_panel(log, treat + control, 0, 9)
    res = daily_series_tests(panel, treat, control, alpha=0.1)
    assert res.summary.pct_significant_days == 1.0
    assert res.summary.largest_effect > 0
    assert 0 < res.summary.average_power <= 1
    assert len(res.daily) == len(res.accumulated) == 10
    # accumulated CI contains the true accumulated difference
    true_diff = 40.0 * np.arange(1, 11)
    assert np.all(res.ci_lower <= true_diff + 15)
    assert np.all(res.ci_upper >= true_diff - 15)


def test_degenerate_day_is_untestable_not_fatal():
    log = [buy(u, "a", 1, price=5.0) for u in ("t1", "t2", "c1", "c2")]
    panel = daily_expenditure_panel(log, ["t1", "t2", "c1", "c2"], 0, 1)
    res = daily_series_tests(panel, ["t1", "t2"], ["c1", "c2"], alpha=0.1)
    day0 = res.daily[0]
    assert day0.p_value == 1.0 and not day0.significant
    with pytest.raises(ValueError):
        daily_series_tests(panel, ["t1"], ["c1", "c2"])


def test_stratified_tests():
    log, treat, control = _separated_log()
    panel = daily_expenditure_panel(log, treat + control, 0, 9)
    strata = {u: ("top50" if int(u[1:]) < 4 else "bottom50") for u in treat + control}
    out = stratified_tests(panel, treat, control, strata, alpha=0.1)
    assert set(out) == {"bottom50", "top50"}
    assert out["top50"].summary.pct_significant_days == 1.0
    with pytest.raises(ValueError):
        stratified_tests(panel, treat, control, {"t0": "top50"})
    # a stratum with fewer than 2 users per group is untestable, not an error
    tiny = dict(strata)
    tiny[treat[0]] = "solo"
    assert stratified_tests(panel, treat, control, tiny)["solo"] is None


def test_success_analysis_hand_case():
    nudges = [
        nudge("u1", 10, pair=("a", "b"), arm="personalized", interaction="opened"),
        nudge("u2", 10, pair=("a", "c"), arm="random", interaction="ignored"),
        nudge("u3", 10, pair=("a", "d"), arm="personalized", interaction="closed"),
        nudge("u4", 10, pair=None, arm="control", interaction="ignored"),
    ]
    purchases = [
        buy("u1", "b", 12),   # success: strictly inside (10, 20)
        buy("u2", "c", 10),   # same-day purchase does not count
        buy("u3", "d", 20),   # horizon_end is exclusive
        buy("u3", "a", 15),   # frequent item does not count
    ]
    s = success_analysis(nudges, purchases, horizon_end=20)
    assert s.n_messages == 3          # control decision excluded
    assert s.n_successes == 1
    assert s.per_interaction["opened"].n_successes == 1
    assert s.share_of_successes("opened") == 1.0
    assert s.share_of_successes("ignored") == 0.0
    assert s.overall_success_rate == pytest.approx(1 / 3)
    assert set(s.by_arm) == {"personalized", "random"}
    assert s.by_arm["personalized"].n_messages == 2
    # shares across interactions partition the successes
    total = sum(s.share_of_successes(i) for i in ("opened", "closed", "ignored"))
    assert total == pytest.approx(1.0)


def test_assignment_metrics():
    decisions = (
        [Decision("u%d" % i, 0, "personalized", np.zeros(2)) for i in range(3)]
        + [Decision("u3", 0, "control", np.zeros(2))]
        + [Decision("u%d" % i, 7, "control", np.zeros(2)) for i in range(4)]
    )
    m = assignment_metrics(decisions, {"personalized", "random"})
    assert m.weekly_fractions[0]["personalized"] == 0.75
    assert m.avg_fraction_nudged == pytest.approx((0.75 + 0.0) / 2)
    assert m.weeks_majority_nudged == (1, 2)
    assert m.majority_label == "1/2"


def test_report_rendering_and_files(tmp_path):
    log, treat, control = _separated_log()
    panel = daily_expenditure_panel(log, treat + control, 0, 9)
    report = ImpactReport(alpha=0.1)
    report.ttest["adaptive"] = daily_series_tests(panel, treat, control, alpha=0.1)
    md = render_summary_markdown(report)
    for label in TABLE_ROW_LABELS:
        assert label in md
    files = write_report_files(report, tmp_path)
    names = {f.name for f in files}
    assert {"summary.md", "ttest_daily_adaptive.csv", "ttest_accumulated_adaptive.csv",
            "diff_in_means_adaptive.svg"} <= names
    svg = (tmp_path / "diff_in_means_adaptive.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    header = (tmp_path / "ttest_daily_adaptive.csv").read_text().splitlines()[0]
    assert header == "day,t_stat,df,p_value,significant,mean_diff,ci_lower,ci_upper"
