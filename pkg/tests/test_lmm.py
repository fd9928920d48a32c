import numpy as np
import pandas as pd
import pytest
import scipy.stats
from statsmodels.regression.mixed_linear_model import MixedLM

from nudgelab.impact.lmm import LMMError, backward_eliminate, fit_lmm


def _panel(n_users=50, n_weeks=8, sigma_u=2.0, sigma_e=1.0, beta=(2.0, 3.0, -1.5),
           seed=0, center_noise=False, extra_noise_col=False):
    rng = np.random.default_rng(seed)
    rows = []
    u_eff = rng.normal(0, sigma_u, n_users)
    eps = rng.normal(0, sigma_e, (n_users, n_weeks))
    if center_noise:
        eps -= eps.mean(axis=1, keepdims=True)
    x1 = rng.random((n_users, n_weeks))
    x2 = rng.random((n_users, n_weeks))
    noise_col = rng.random((n_users, n_weeks))
    for i in range(n_users):
        for w in range(n_weeks):
            y = beta[0] + beta[1] * x1[i, w] + beta[2] * x2[i, w] + u_eff[i] + eps[i, w]
            rows.append({"user": f"u{i}", "y": y, "x1": x1[i, w], "x2": x2[i, w],
                         "junk": noise_col[i, w]})
    return pd.DataFrame(rows)


def test_fit_matches_statsmodels_ml():
    panel = _panel()
    fit = fit_lmm(panel, ["intercept", "x1", "x2"])
    exog = np.column_stack([np.ones(len(panel)), panel["x1"], panel["x2"]])
    ref = MixedLM(panel["y"].to_numpy(), exog, groups=panel["user"]).fit(reml=False)
    assert np.allclose(fit.coefficients, ref.fe_params, atol=1e-4)
    assert np.allclose(fit.standard_errors, ref.bse[:3], atol=1e-4)
    assert fit.sigma_e2 == pytest.approx(ref.scale, rel=1e-3)
    assert fit.sigma_u2 == pytest.approx(float(np.asarray(ref.cov_re).ravel()[0]), rel=1e-2)
    assert fit.loglik == pytest.approx(ref.llf, abs=1e-4)
    assert fit.converged


def test_fit_matches_statsmodels_reml():
    panel = _panel(seed=3)
    fit = fit_lmm(panel, ["intercept", "x1", "x2"], reml=True)
    exog = np.column_stack([np.ones(len(panel)), panel["x1"], panel["x2"]])
    ref = MixedLM(panel["y"].to_numpy(), exog, groups=panel["user"]).fit(reml=True)
    assert np.allclose(fit.coefficients, ref.fe_params, atol=1e-4)
    assert fit.sigma_u2 == pytest.approx(float(np.asarray(ref.cov_re).ravel()[0]), rel=1e-2)


def test_zero_user_variance_reduces_to_ols():
    # residual means are exactly zero within each user, so gamma-hat is 0
    panel = _panel(sigma_u=0.0, center_noise=True, seed=1)
    fit = fit_lmm(panel, ["intercept", "x1", "x2"])
    x = np.column_stack([np.ones(len(panel)), panel["x1"], panel["x2"]])
    beta_ols = np.linalg.lstsq(x, panel["y"].to_numpy(), rcond=None)[0]
    assert np.allclose(fit.coefficients, beta_ols, atol=1e-6)
    assert fit.sigma_u2 < 1e-4


def test_wald_p_values_use_normal_reference():
    panel = _panel(seed=2)
    fit = fit_lmm(panel, ["intercept", "x1", "x2"])
    for i in range(3):
        z = fit.coefficients[i] / fit.standard_errors[i]
        want = 2 * (1 - scipy.stats.norm.cdf(abs(z)))
        assert fit.p_values[i] == pytest.approx(want, abs=1e-12)


def test_profile_trace_monotone():
    fit = fit_lmm(_panel(seed=5), ["intercept", "x1"])
    trace = np.array(fit.profile_trace)
    assert np.all(np.diff(trace) >= -1e-12)


def test_confidence_interval_and_table():
    fit = fit_lmm(_panel(seed=6), ["intercept", "x1", "x2"])
    lo, hi = fit.conf_int("x1", level=0.9)
    z = scipy.stats.norm.ppf(0.95)
    assert lo == pytest.approx(fit.coef("x1") - z * fit.stderr("x1"), abs=1e-4)
    assert hi == pytest.approx(fit.coef("x1") + z * fit.stderr("x1"), abs=1e-4)
    table = fit.table()
    assert list(table.columns) == ["term", "coef", "stderr", "pvalue"]
    assert len(table) == 3


def test_backward_elimination_drops_noise_term():
    panel = _panel(seed=7)
    fit = backward_eliminate(panel, ["intercept", "x1", "x2", "junk"], alpha=0.1)
    assert "junk" not in fit.terms
    assert {"intercept", "x1", "x2"} <= set(fit.terms)
    assert np.all(fit.p_values < 0.1)


def test_rank_deficiency_names_offender():
    panel = _panel(seed=8)
    panel["dup"] = panel["x1"]
    with pytest.raises(LMMError, match="dup"):
        fit_lmm(panel, ["intercept", "x1", "dup"])


def test_input_validation():
    panel = _panel(n_users=1)
    with pytest.raises(LMMError):
        fit_lmm(panel, ["intercept", "x1"])
    panel2 = _panel(n_users=4, n_weeks=2)
    with pytest.raises(LMMError):
        fit_lmm(panel2, [])
    with pytest.raises(LMMError):
        fit_lmm(panel2, ["intercept", "ghost_column"])
    with pytest.raises(LMMError):
        fit_lmm(panel2.drop(columns=["user"]), ["intercept", "x1"])


def test_unbalanced_groups():
    panel = _panel(seed=9)
    panel = panel[~((panel["user"] == "u0") & (panel.index % 3 == 0))].copy()
    fit = fit_lmm(panel, ["intercept", "x1", "x2"])
    exog = np.column_stack([np.ones(len(panel)), panel["x1"], panel["x2"]])
    ref = MixedLM(panel["y"].to_numpy(), exog, groups=panel["user"]).fit(reml=False)
    assert np.allclose(fit.coefficients, ref.fe_params, atol=1e-4)
