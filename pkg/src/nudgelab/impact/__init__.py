"""Impact-analysis toolkit: Welch t-tests with power, daily/accumulated test
series, random-intercept mixed models with backward elimination, nudge
success breakdowns, and assignment metrics."""

from .ttest import TTestResult, welch_t_test, cohens_d, power_noncentral_t, t_cdf, t_ppf
from .series import DailySeriesResult, SeriesSummary, daily_expenditure_panel, daily_series_tests, stratified_tests
from .lmm import LMMFit, LMMError, fit_lmm, backward_eliminate
from .success import SuccessBreakdown, AssignmentMetrics, success_analysis, assignment_metrics
from .report import ImpactReport, render_summary_markdown, write_report_files, TABLE_ROW_LABELS

__all__ = [
    "TTestResult", "welch_t_test", "cohens_d", "power_noncentral_t", "t_cdf", "t_ppf",
    "DailySeriesResult", "SeriesSummary", "daily_expenditure_panel",
    "daily_series_tests", "stratified_tests",
    "LMMFit", "LMMError", "fit_lmm", "backward_eliminate",
    "SuccessBreakdown", "AssignmentMetrics", "success_analysis", "assignment_metrics",
    "ImpactReport", "render_summary_markdown", "write_report_files", "TABLE_ROW_LABELS",
]
