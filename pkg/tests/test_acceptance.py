"""End-to-end acceptance checks; one summary line per criterion is printed
at the end of the pytest run. Criteria that the model does not meet are
marked as strict expected failures so that a change in outcome is noticed."""
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import cached_policy, record_criterion
from inattention.attention import (BeliefParams, attention_from_noise, optimal_attention,
                                   optimal_attention_grid, stationary_prior_variance)
from inattention.estimators import (attention_volatility_regression, fixed_effects_system_gmm,
                                    pooled_ols, rolling_attention)
from inattention.nkmodel import (ConvergenceError, Expectations, ModelParams, Shock,
                                 elb_spell_stats, forecast_error_irf, perfect_foresight_irf,
                                 phillips_coefficients, stochastic_simulate)
from inattention.panelsim import PanelConfig, optimal_attention_regimes, simulate_panel
from inattention.ramsey import ergodic_stats, simulate_ramsey, target_rule_residual

P = ModelParams()
GAMMAS = (0.05, 0.1, 0.2, 0.3)


def summarize(checks: dict) -> str:
    return "; ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())


def test_closed_form_attention_matches_grid_search():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for lam, rho, s2 in zip(rng.uniform(0, 4, 100), rng.uniform(0.1, 1, 100), rng.uniform(0.1, 4, 100)):
        p = BeliefParams(rho=rho, lambda_tilde=lam)
        worst = max(worst, abs(optimal_attention(p, s2) - optimal_attention_grid(p, s2, step=1e-4)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 2e-3 and elapsed < 5
    record_criterion(1, ok, f"max |closed form - grid argmax| {worst:.1e} in {elapsed:.2f} s")
    assert ok


def test_attention_depends_only_on_signal_to_noise():
    worst = 0.0
    for rho, nu2, eps2 in [(0.93, 0.05, 0.2), (0.5, 1.0, 0.1), (0.99, 0.3, 3.0)]:
        base = attention_from_noise(stationary_prior_variance(rho, nu2), eps2)
        for k in (0.1, 1.0, 10.0):
            g = attention_from_noise(stationary_prior_variance(rho, k * nu2), k * eps2)
            worst = max(worst, abs(g - base))
    ok = worst <= 1e-12
    record_criterion(2, ok, f"max change in attention under joint scaling {worst:.1e}")
    assert ok


def test_system_gmm_recovers_attention_and_ols_is_attenuated():
    t0 = time.perf_counter()
    gmm, ols = [], []
    for seed in range(50):
        panel = simulate_panel(PanelConfig(true_gamma=0.70, rho=0.93, N=100, T=88, seed=seed))
        gmm.append(fixed_effects_system_gmm(panel).gamma_hat)
        ols.append(pooled_ols(panel).gamma_hat)
    elapsed = time.perf_counter() - t0
    med_gmm, med_ols = np.median(gmm), np.median(ols)
    checks = {"GMM median within 0.10": abs(med_gmm - 0.70) <= 0.10,
              "OLS below GMM": med_ols < med_gmm, "runtime < 2 min": elapsed < 120}
    record_criterion(3, all(checks.values()),
                     f"median GMM {med_gmm:.3f}, median OLS {med_ols:.3f}, {elapsed:.0f} s; "
                     + summarize(checks))
    assert all(checks.values())


def test_attention_rises_with_inflation_volatility():
    regimes = optimal_attention_regimes([64, 60, 60, 60], [0.15, 0.35, 0.15, 0.35], 0.93, 0.2)
    hits = 0
    for seed in range(50):
        panel = simulate_panel(PanelConfig(N=50, T=244, regimes=regimes, seed=seed))
        fit = attention_volatility_regression(rolling_attention(panel, 40))
        hits += fit["slope"] > 0 and fit["p"] < 0.05
    ok = hits >= 45
    record_criterion(4, ok, f"positive slope significant at 5% in {hits}/50 seeds")
    assert ok


def test_phillips_curve_regression_recovers_reduced_form():
    g = 0.3
    sim = stochastic_simulate(replace(P, elb=False), Expectations.limited(g), 4000, seed=1,
                              burn_in=100)
    X = np.column_stack([sim.pi_e_prior, sim.ygap, sim.u])
    coef = np.linalg.lstsq(X, sim.pi, rcond=None)[0]
    want = phillips_coefficients(P, g)
    err = np.max(np.abs(coef - [want["prior"], want["output"], want["shock"]]))
    ok = err <= 1e-6
    record_criterion(5, ok, f"max coefficient error {err:.1e}")
    assert ok


def trap_checks():
    shock = Shock("natural_rate", 3.0, -1)
    fire = perfect_foresight_irf(P, Expectations.fire(), shock, horizon=60)
    fire_spell = elb_spell_stats(fire)["longest"]
    checks = {"FIRE spell 5 +- 1": abs(fire_spell - 5) <= 1}
    detail = f"FIRE spell {fire_spell}"
    try:
        lim = perfect_foresight_irf(P, Expectations.limited(0.3), shock, horizon=60)
    except ConvergenceError as err:
        for k in ("attention spell >= 2x FIRE", "inflation at t=20 in [-0.35,-0.10]",
                  "shallower trough"):
            checks[k] = False
        return checks, detail + f"; attention 0.3: {err}"
    spell = elb_spell_stats(lim)["longest"]
    pi20 = 4 * lim.pi[20]
    checks["attention spell >= 2x FIRE"] = spell >= 2 * fire_spell
    checks["inflation at t=20 in [-0.35,-0.10]"] = -0.35 <= pi20 <= -0.10
    checks["shallower trough"] = lim.pi.min() > fire.pi.min()
    return checks, detail + f"; attention 0.3 spell {spell}, inflation at t=20 {pi20:.3f}"


@pytest.mark.xfail(strict=True, reason="no bounded perfect-foresight path exists at attention "
                   "0.3 after a -3 SD natural-rate shock under the stated calibration")
def test_inflation_attention_trap():
    checks, detail = trap_checks()
    record_criterion(6, all(checks.values()), detail + "; " + summarize(checks))
    assert all(checks.values())


def sign_flip(fe, tiny=1e-10):
    s = np.sign(np.where(np.abs(fe) < tiny, 0.0, fe))
    changes = [k for k in range(1, len(s)) if s[k] * s[k - 1] < 0]
    return changes


@pytest.mark.xfail(strict=True, reason="the -3 SD path at attention 0.3 does not exist")
def test_forecast_errors_change_sign_once():
    checks, notes = {}, []
    for sign in (1, -1):
        label = f"{'+' if sign > 0 else '-'}3 SD"
        try:
            path = perfect_foresight_irf(P, Expectations.limited(0.3),
                                         Shock("natural_rate", 3.0, sign), horizon=60)
        except ConvergenceError:
            checks[label] = False
            notes.append(f"{label}: no bounded path")
            continue
        changes = sign_flip(forecast_error_irf(path))
        checks[label] = len(changes) == 1 and 3 <= changes[0] <= 8
        notes.append(f"{label}: sign changes at {changes}")
    record_criterion(7, all(checks.values()), ", ".join(notes) + "; " + summarize(checks))
    assert all(checks.values())


@pytest.mark.slow
def test_ramsey_solver_is_accurate():
    checks, notes = {}, []
    for g in (0.05, 0.3):
        for elb_on in (True, False):
            sol = cached_policy(g, elb_on)
            path = simulate_ramsey(sol, 2000, burn_in=200, seed=5)
            node = sol.policy["node_residual_max"]
            eq = max(np.max(np.abs(path.info["res_pc"])), np.max(np.abs(path.info["res_euler"])))
            secs = sol.policy["solve_seconds"]
            tag = f"{g:g}/{'on' if elb_on else 'off'}"
            checks[tag] = sol.converged and node <= 1e-6 and eq <= 1e-5 and secs < 1800
            notes.append(f"{tag}: node {node:.0e}, path {eq:.0e}, {secs:.0f} s")
    record_criterion(8, all(checks.values()), ", ".join(notes))
    assert all(checks.values())


def monotone(x, increasing=True):
    d = np.diff(x)
    return bool(np.all(d > 0) if increasing else np.all(d < 0))


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="under the stated calibration the bound binds about 70% "
                   "of the time and the optimal mean inflation rises with attention")
def test_ramsey_moments_follow_attention():
    on = [ergodic_stats(cached_policy(g, True)) for g in GAMMAS]
    off = [ergodic_stats(cached_policy(g, False)) for g in GAMMAS]
    mean = np.array([s.mean_pi for s in on])
    std = np.array([s.std_pi for s in on])
    freq = {g: s.elb_frequency for g, s in zip(GAMMAS, on)}
    loss_on = np.array([-s.welfare for s in on])
    loss_off = np.array([-s.welfare for s in off])
    ratio = loss_on / loss_off
    checks = {
        "ELB frequency at 0.3 in 22% +- 6pp": abs(freq[0.3] - 0.22) <= 0.06,
        "ELB frequency at 0.05 in 1.4% +- 2pp": abs(freq[0.05] - 0.014) <= 0.02,
        "mean inflation falling in attention": monotone(mean, False) and mean[0] - mean[-1] >= 1,
        "inflation std rising in attention": monotone(std),
        "loss with bound falling in attention": monotone(loss_on, False),
        "loss without bound rising in attention": monotone(loss_off),
        "loss ratio rising as attention falls": monotone(ratio, False),
    }
    detail = (f"ELB freq {[round(s.elb_frequency, 3) for s in on]}, mean pi {np.round(mean, 3).tolist()}, "
              f"std pi {np.round(std, 3).tolist()}, loss ratio {np.round(ratio, 2).tolist()}; "
              + summarize(checks))
    record_criterion(9, all(checks.values()), detail)
    assert all(checks.values())


@pytest.mark.slow
def test_full_attention_without_bound_is_discretion():
    sol = cached_policy(0.0, False)
    path = simulate_ramsey(sol, 2000, burn_in=100, seed=9)
    worst = target_rule_residual(path, P, 0.0)["without_bound_max_abs"]
    ok = worst <= 1e-8
    record_criterion(10, ok, f"max |pi + (chi/kappa) y| {worst:.1e}")
    assert ok
