import numpy as np
import pytest

from inattention.estimators import (EstimationError, attention_ratio,
                                    attention_volatility_regression, consensus_ols,
                                    fixed_effects_system_gmm, newey_west_cov, pooled_ols,
                                    rolling_attention, time_fe_attention, time_fe_from_panel)
from inattention.panelsim import (PanelConfig, PanelData, PanelFormatError, load_panel_csv,
                                  optimal_attention_regimes, save_panel_csv, simulate_inflation,
                                  simulate_panel)


def noiseless(**kw):
    base = dict(true_gamma=0.4, rho=0.9, c_sd=0.0, report_sd=0.0, signal_noise=False, N=20, T=60)
    base.update(kw)
    return simulate_panel(PanelConfig(**base))


def test_panel_shape_and_sorting():
    panel = simulate_panel(PanelConfig(N=7, T=30, drop_initial=4))
    assert len(panel) == 7 * 26
    assert np.all(np.diff(panel.forecaster_id) >= 0)
    periods, pi = panel.realized_series()
    assert periods.tolist() == list(range(4, 30))


def test_inflation_process_is_ar1():
    pi = simulate_inflation(0.9, 1.0, 0.0, 20, seed=1, pi0=3.0)
    assert np.allclose(pi, 1.0 + 2.0 * 0.9 ** np.arange(20))


def test_noiseless_ols_recovers_attention_exactly():
    res = pooled_ols(noiseless())
    assert res.gamma_hat == pytest.approx(0.4, abs=1e-10)
    assert res.rho_hat == pytest.approx(0.9, abs=1e-10)


def test_consensus_recovers_attention_without_noise():
    panel = noiseless(N=1, T=80)
    _, mean, pi = panel.consensus()
    assert consensus_ols(mean, pi).gamma_hat == pytest.approx(0.4, abs=1e-10)


def test_attention_ratio_delta_method():
    cov = np.array([[0.01, 0.002], [0.002, 0.04]])
    g, se = attention_ratio(0.8, 0.4, cov)
    grad = np.array([-0.4 / 0.64, 1 / 0.8])
    assert g == pytest.approx(0.5)
    assert se == pytest.approx(np.sqrt(grad @ cov @ grad))


def test_newey_west_with_zero_lag_is_white():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(50), rng.normal(size=50)])
    e = rng.normal(size=50)
    bread = np.linalg.inv(X.T @ X)
    white = bread @ (X.T * e ** 2) @ X @ bread
    assert np.allclose(newey_west_cov(X, e, 0), white, rtol=1e-12)


def test_gmm_close_to_truth_on_noisy_panels():
    est = [fixed_effects_system_gmm(simulate_panel(PanelConfig(seed=s))).gamma_hat
           for s in range(5)]
    assert abs(np.median(est) - 0.70) < 0.10


def test_time_effects_absorb_common_shocks():
    panel = simulate_panel(PanelConfig(common_shock_sd=0.3, seed=3))
    rho = pooled_ols(panel).rho_hat
    g, se = time_fe_attention(panel, rho)
    assert abs(g - 0.70) < abs(pooled_ols(panel).gamma_hat - 0.70)
    assert se > 0
    assert time_fe_from_panel(panel).gamma_hat == pytest.approx(g)


def test_rolling_window_count():
    panel = simulate_panel(PanelConfig(N=20, T=160, drop_initial=0))
    path = rolling_attention(panel, 40)
    assert len(path) == 121


def test_attention_volatility_regression_recovers_slope():
    sig = np.linspace(0.1, 1.0, 40)
    g = 0.2 + 0.5 * sig + 0.01 * np.sin(np.arange(40))
    out = attention_volatility_regression((g, sig))
    assert out["slope"] == pytest.approx(0.5, abs=0.02)
    assert out["p"] < 0.05
    with pytest.raises(EstimationError):
        attention_volatility_regression((g[:5], sig[:5]))


def test_regime_attention_follows_the_closed_form():
    regimes = optimal_attention_regimes([10, 10], [0.15, 0.35], 0.93, 0.2)
    assert regimes[0][2] < regimes[1][2]
    assert sum(n for n, _, _ in regimes) == 20


def test_csv_round_trip(tmp_path):
    panel = simulate_panel(PanelConfig(N=3, T=12))
    f = tmp_path / "panel.csv"
    save_panel_csv(panel, f)
    back = load_panel_csv(f)
    assert np.array_equal(back.expectation, panel.expectation)
    assert np.array_equal(back.t, panel.t)


def test_malformed_csv_names_the_line(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("forecaster_id,t,expectation,realized\n1,1,2.0,1.0\n1,2,oops,1.0\n")
    with pytest.raises(PanelFormatError, match="line 3"):
        load_panel_csv(f)
    g = tmp_path / "cols.csv"
    g.write_text("id,t,x\n")
    with pytest.raises(PanelFormatError, match="missing columns"):
        load_panel_csv(g)


def test_inconsistent_realized_inflation_is_rejected():
    with pytest.raises(PanelFormatError):
        PanelData([1, 2], [0, 0], [1.0, 1.0], [2.0, 2.5])
    with pytest.raises(PanelFormatError):
        PanelData([1, 1], [0, 0], [1.0, 1.0], [2.0, 2.0])


def test_short_forecasters_are_dropped():
    panel = simulate_panel(PanelConfig(N=4, T=20, drop_initial=0))
    keep = ~((panel.forecaster_id == 0) & (panel.t > 5))
    short = panel.subset(keep)
    assert short.flagged == [0]
    full = pooled_ols(panel.subset(panel.forecaster_id != 0))
    assert pooled_ols(short).gamma_hat == pytest.approx(full.gamma_hat)
