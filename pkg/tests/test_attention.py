import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inattention.attention import (BeliefParams, UndefinedVarianceError, attention_from_noise,
                                   attention_from_snr, attention_objective, noise_from_attention,
                                   optimal_attention, optimal_attention_grid, snr_for_attention,
                                   stationary_prior_variance, update_forecast,
                                   update_forecast_demeaned)


def test_unit_case_gives_one_half():
    assert optimal_attention(BeliefParams(rho=1.0, lambda_tilde=1.0), 1.0) == 0.5


def test_free_information_gives_full_attention():
    assert optimal_attention(BeliefParams(rho=0.9, lambda_tilde=0.0), 2.0) == 1.0


def test_expensive_information_gives_zero_attention():
    assert optimal_attention(BeliefParams(rho=0.5, lambda_tilde=10.0), 0.1) == 0.0


def test_stakes_and_cost_enter_as_a_ratio():
    a = optimal_attention(BeliefParams(rho=0.8, r=2.0, lam=1.0), 1.5)
    b = optimal_attention(BeliefParams(rho=0.8, lambda_tilde=0.5), 1.5)
    assert a == b
    with pytest.raises(ValueError):
        BeliefParams(r=2.0, lam=1.0, lambda_tilde=0.3)


@settings(max_examples=200, deadline=None)
@given(lam=st.floats(0.0, 4.0), rho=st.floats(0.1, 1.0), s2=st.floats(0.1, 4.0))
def test_closed_form_is_the_objective_argmax(lam, rho, s2):
    p = BeliefParams(rho=rho, lambda_tilde=lam)
    g = optimal_attention(p, s2)
    # brute-force search on a fine grid; the grid cannot represent gamma = 1
    assert min(g, 0.999) == pytest.approx(optimal_attention_grid(p, s2), abs=2e-3)
    # first-order condition in the interior
    if 1e-6 < g < 1 - 1e-6:
        h = 1e-3 * min(g, 1 - g)
        d = (attention_objective(g + h, p, s2) - attention_objective(g - h, p, s2)) / (2 * h)
        assert abs(d) < 1e-4 * max(1.0, lam / (1 - g))


def test_objective_is_minus_infinity_at_full_attention_with_costly_information():
    p = BeliefParams(rho=1.0, lambda_tilde=1.0)
    assert attention_objective(1.0, p, 1.0) == -math.inf


@pytest.mark.parametrize("k", [0.1, 1.0, 10.0])
def test_attention_depends_on_signal_to_noise_only(k):
    rho, nu2, eps2 = 0.9, 0.3, 0.7
    base = attention_from_noise(stationary_prior_variance(rho, nu2), eps2)
    scaled = attention_from_noise(stationary_prior_variance(rho, k * nu2), k * eps2)
    assert abs(base - scaled) <= 1e-12


def test_snr_round_trip_and_random_walk_error():
    for g in (0.0, 0.1, 0.5, 0.93):
        assert attention_from_snr(snr_for_attention(g, 0.8), 0.8) == pytest.approx(g, abs=1e-14)
    with pytest.raises(UndefinedVarianceError):
        snr_for_attention(0.5, 1.0)
    with pytest.raises(UndefinedVarianceError):
        stationary_prior_variance(1.0, 1.0)


def test_noise_and_attention_are_inverse():
    assert attention_from_noise(2.0, noise_from_attention(0.3, 2.0)) == pytest.approx(0.3)
    assert attention_from_noise(1.0, math.inf) == 0.0
    with pytest.raises(ValueError):
        noise_from_attention(0.0, 1.0)


def test_updating_rules():
    p = BeliefParams(rho=1.0)
    assert update_forecast(1.0, 3.0, p, 0.25) == pytest.approx(1.5)
    # zero attention keeps the prior, full attention jumps to the observation
    assert update_forecast(1.0, 3.0, p, 0.0) == 1.0
    assert update_forecast(1.0, 3.0, p, 1.0) == 3.0
    q = BeliefParams(rho=0.5, c=2.0)
    assert update_forecast(2.0, 2.0, q, 0.7) == pytest.approx(2.0)
    assert update_forecast_demeaned(1.0, 2.0, 0.5, 0.5) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        update_forecast(0.0, 1.0, p, 1.5)


def test_vectorised_objective():
    p = BeliefParams(rho=1.0, lambda_tilde=1.0)
    grid = np.array([0.0, 0.25, 0.5])
    vals = attention_objective(grid, p, 1.0)
    assert vals.shape == (3,)
    assert vals[0] == pytest.approx(-1.0)
