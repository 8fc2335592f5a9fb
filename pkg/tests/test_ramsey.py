import numpy as np
import pytest
from dataclasses import replace

from inattention.nkmodel import ModelParams
from inattention.ramsey import (ERGODIC_COLUMNS, GridSpec, RamseyState, build_grids,
                                commitment_path, ergodic_stats, node_saddle, ramsey_irf,
                                ramsey_path_rows, risky_steady_state, simulate_ramsey,
                                solve_policy, target_rule_residual, zero_fields)

P = ModelParams()


def test_zero_state_without_continuation_is_at_rest():
    sol = node_saddle(RamseyState(0, 0, 0, 0), zero_fields(P, 0.0), P, 0.0, elb_on=False)
    assert max(abs(sol.pi), abs(sol.ygap), abs(sol.mu1), abs(sol.mu2)) < 1e-12
    assert sol.branch == "interior"


def test_cost_push_node_satisfies_the_targeting_rule():
    sol = node_saddle(RamseyState(0, 0.1, 0, 0), zero_fields(P, 0.0), P, 0.0, elb_on=False)
    assert sol.pi > 0 and sol.ygap < 0
    assert sol.pi + P.chi / P.kappa * sol.ygap == pytest.approx(0, abs=1e-10)


def test_deep_negative_natural_rate_selects_the_bound():
    sol = node_saddle(RamseyState(0, 0, -1.5, 0), zero_fields(P, 0.3), P, 0.3)
    assert sol.branch == "bound"
    assert sol.i == pytest.approx(-P.ibar)
    assert sol.phi_elb > 0


def test_zeta_grid_ends_at_zero_and_is_packed():
    grids = build_grids(P, 0.3, GridSpec())
    gz = grids[0]
    assert gz[-1] == 0 and gz[0] < 0
    steps = np.diff(gz)
    assert steps[-1] < steps[0]
    with pytest.raises(ValueError):
        build_grids(P, 0.3, GridSpec(zeta_power=0.5))


def test_invalid_solver_arguments():
    with pytest.raises(ValueError):
        solve_policy(P, 0.3, tol=0)
    with pytest.raises(ValueError):
        solve_policy(P, 0.3, carry="other")


def test_commitment_path_without_bound_obeys_the_targeting_rule():
    g = 0.3
    r = -3 * P.sigma_r * P.rho_r ** np.arange(120)
    path = commitment_path(P, g, r, elb_on=False)
    res = target_rule_residual(path, P, g)
    # with limited attention the rule is only approximate; it is reported
    assert res["without_bound_max_abs"] > 0
    assert np.all(path.info["phi_elb"] == 0)
    assert np.max(np.abs(path.pi - P.beta * path.pi_e - P.kappa * path.ygap - path.u)) < 1e-10


def test_commitment_path_with_bound_is_complementary():
    r = -2 * P.sigma_r * P.rho_r ** np.arange(120)
    path = commitment_path(P, 0.05, r)
    phi = np.asarray(path.info["phi_elb"])
    assert np.all(path.i >= -P.ibar - 1e-10) and np.all(phi >= -1e-10)
    assert np.max(np.abs(phi * (path.i + P.ibar))) < 1e-10
    assert path.elb_flag[0]


def test_commitment_rule_with_bound_holds_under_full_attention():
    r = -2 * P.sigma_r * P.rho_r ** np.arange(120)
    path = commitment_path(P, 0.0, r)
    assert path.elb_flag.any()
    assert target_rule_residual(path, P, 0.0)["with_bound_max_abs"] < 1e-8


def test_unbounded_policy_has_no_bound_multiplier(policy):
    sol = policy(0.3, False, True)
    assert sol.converged and sol.policy["node_residual_max"] < 1e-8
    assert np.all(sol.policy["phi_elb"] == 0) and not np.any(sol.policy["bounded"])
    assert np.max(np.abs(sol.policy["mu2"])) < 1e-10
    assert np.allclose(risky_steady_state(sol), 0, atol=1e-8)


def test_unbounded_response_equals_the_commitment_path(policy):
    sol = policy(0.3, False, True)
    irf = ramsey_irf(sol, size_sd=1.0, horizon=30)
    ref = commitment_path(P, 0.3, -P.sigma_r * P.rho_r ** np.arange(400), elb_on=False)
    assert np.max(np.abs(irf.pi - ref.pi[:30])) < 1e-6
    assert np.max(np.abs(irf.ygap - ref.ygap[:30])) < 1e-6


def test_bounded_policy_is_complementary(policy):
    sol = policy(0.3, True, True)
    pol = sol.policy
    assert sol.converged and pol["node_residual_max"] < 1e-8
    assert np.all(pol["i"] >= -P.ibar - 1e-10)
    assert np.all(pol["phi_elb"] >= -1e-10)
    assert np.max(np.abs(pol["phi_elb"] * (pol["i"] + P.ibar))) < 1e-8
    assert np.all(pol["zeta_next"] <= 1e-12)


def test_simulated_paths_satisfy_the_structural_equations(policy):
    sol = policy(0.3, True, True)
    path = simulate_ramsey(sol, 300, burn_in=50, seed=2)
    assert np.max(np.abs(path.info["res_pc"])) < 1e-8
    assert np.max(np.abs(path.info["res_euler"])) < 1e-8
    again = simulate_ramsey(sol, 300, burn_in=50, seed=2)
    assert np.array_equal(path.pi, again.pi)
    rows = ramsey_path_rows(path)
    assert len(rows[0]) == 12


def test_ergodic_moments_invariants(policy):
    on = ergodic_stats(policy(0.3, True, True), T=20000, burn_in=4000, n_chains=100)
    off = ergodic_stats(policy(0.3, False, True), T=20000, burn_in=4000, n_chains=100)
    assert 0 <= on.elb_frequency <= 1 and off.elb_frequency == 0
    assert on.welfare <= 0 and off.welfare <= 0
    assert on.welfare < off.welfare
    assert len(on.row()) == len(ERGODIC_COLUMNS)


def test_full_attention_with_bound_off_matches_discretion(policy):
    sol = solve_policy(P, 0.0, GridSpec(n_knots=5, n_quad=3), elb_on=False,
                       coverage_check=False)
    path = simulate_ramsey(sol, 200, seed=1)
    assert np.max(np.abs(path.pi + P.chi / P.kappa * path.ygap)) < 1e-8


def test_without_shocks_the_zero_state_is_at_rest():
    calm = replace(P, sigma_r=0.0, sigma_u=0.0)
    sol = solve_policy(calm, 0.3, GridSpec(n_knots=5, n_quad=3), elb_on=False,
                       coverage_check=False)
    assert sol.value(np.zeros((1, 4)))[0] == pytest.approx(0, abs=1e-14)
    rest = node_saddle(RamseyState(0, 0, 0, 0), sol.fields, calm, 0.3, elb_on=False)
    assert max(abs(rest.pi), abs(rest.ygap), abs(rest.i)) < 1e-14
