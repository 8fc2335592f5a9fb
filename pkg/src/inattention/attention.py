"""Optimal attention to inflation and the implied belief updating.

An agent who perceives inflation as an AR(1) with persistence ``rho`` and
innovation variance ``sigma_nu2`` pays a cost proportional to mutual
information for a Gaussian signal. Attention ``gamma`` is the weight on the
signal in the steady-state Kalman update.

Rates are quarterly percent throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UndefinedVarianceError(ValueError):
    """Random-walk beliefs have no stationary variance."""


@dataclass(frozen=True)
class BeliefParams:
    rho: float = 1.0
    c: float = 0.0
    sigma_nu2: float = 1.0
    lambda_tilde: float | None = None
    r: float | None = None
    lam: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"perceived persistence must lie in [0, 1], got {self.rho}")
        if self.sigma_nu2 < 0:
            raise ValueError("innovation variance must be non-negative")
        if (self.r is None) != (self.lam is None):
            raise ValueError("stakes r and cost lambda must be given together")
        if self.r is not None:
            if self.r <= 0 or self.lam < 0:
                raise ValueError("stakes must be positive and cost non-negative")
            implied = self.lam / self.r
            if self.lambda_tilde is None:
                object.__setattr__(self, "lambda_tilde", implied)
            elif abs(self.lambda_tilde - implied) > 1e-12:
                raise ValueError("lambda_tilde inconsistent with lambda / r")
        if self.lambda_tilde is None:
            object.__setattr__(self, "lambda_tilde", 0.0)
        if self.lambda_tilde < 0:
            raise ValueError("relative information cost must be non-negative")

    @property
    def stakes(self) -> float:
        return 1.0 if self.r is None else self.r

    @property
    def cost(self) -> float:
        return self.lambda_tilde if self.lam is None else self.lam


@dataclass(frozen=True)
class BeliefState:
    prior_mean: float
    prior_var: float
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("attention must lie in [0, 1]")
        if self.prior_var < 0:
            raise ValueError("prior variance must be non-negative")

    @property
    def sigma_eps2(self) -> float:
        """Signal-noise variance; ``inf`` when attention is zero."""
        if self.gamma == 0.0:
            return math.inf
        return noise_from_attention(self.gamma, self.prior_var)

    @classmethod
    def from_noise(cls, prior_mean, prior_var, sigma_eps2):
        return cls(prior_mean, prior_var, attention_from_noise(prior_var, sigma_eps2))


def stationary_prior_variance(rho: float, sigma_nu2: float) -> float:
    if rho >= 1.0:
        raise UndefinedVarianceError("rho = 1: supply the prior variance explicitly")
    return sigma_nu2 / (1.0 - rho * rho)


def attention_objective(gamma, params: BeliefParams, sigma_pi2: float):
    """Expected forecast loss net of information cost at attention ``gamma``."""
    g = np.asarray(gamma, dtype=float)
    r, lam, rho = params.stakes, params.cost, params.rho
    loss = -r * rho ** 2 * (1.0 - g) * sigma_pi2
    with np.errstate(divide="ignore", invalid="ignore"):
        info = np.where(g < 1.0, -np.log1p(-np.minimum(g, 1.0)), np.inf)
        cost = np.where(lam == 0.0, 0.0, 0.5 * lam * info)
    out = loss - cost
    return float(out) if out.ndim == 0 else out


def optimal_attention(params: BeliefParams, sigma_pi2: float) -> float:
    """Closed-form attention ``max(0, 1 - lambda_tilde / (2 rho^2 sigma_pi2))``.

    With free information (``lambda_tilde == 0``) the limit ``gamma = 1`` is
    returned.
    """
    scale = 2.0 * params.rho ** 2 * sigma_pi2
    if params.lambda_tilde == 0.0:
        return 1.0 if scale > 0 else 0.0
    if scale <= 0.0:
        return 0.0
    return max(0.0, 1.0 - params.lambda_tilde / scale)


def optimal_attention_grid(params: BeliefParams, sigma_pi2: float, step: float = 1e-3) -> float:
    """Brute-force argmax of the attention objective on {0, step, ..., < 1}."""
    grid = np.arange(0.0, 1.0, step)
    return float(grid[np.argmax(attention_objective(grid, params, sigma_pi2))])


def noise_from_attention(gamma: float, sigma_pi2: float) -> float:
    """Signal-noise variance implying attention ``gamma``."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("zero attention corresponds to an infinitely noisy signal")
    return sigma_pi2 * (1.0 - gamma) / gamma


def attention_from_noise(sigma_pi2: float, sigma_eps2: float) -> float:
    if math.isinf(sigma_eps2):
        return 0.0
    total = sigma_pi2 + sigma_eps2
    return 1.0 if total == 0.0 else sigma_pi2 / total


def update_forecast(prior_forecast, observed, params: BeliefParams, gamma: float):
    """One-step-ahead forecast after observing inflation (or a signal of it).

    ``(1 - rho) c + rho * prior + rho * gamma * (observed - prior)``; with
    ``rho = 1`` this is the constant-gain rule ``prior + gamma (observed - prior)``.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("attention must lie in [0, 1]")
    rho = params.rho
    return (1.0 - rho) * params.c + rho * prior_forecast + rho * gamma * (observed - prior_forecast)


def update_forecast_demeaned(prior_mean, signal, rho: float, gamma: float):
    """Forecast of demeaned inflation, ``rho ((1 - gamma) prior + gamma s)``."""
    return rho * ((1.0 - gamma) * prior_mean + gamma * signal)


def snr_for_attention(gamma: float, rho: float) -> float:
    """Signal-to-noise ratio ``sigma_nu2 / sigma_eps2`` that yields ``gamma``.

    Uses the stationary prior variance ``sigma_nu2 / (1 - rho^2)``, so ``rho``
    must be below one.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("attention must lie in [0, 1) for a finite ratio")
    if rho >= 1.0:
        raise UndefinedVarianceError("rho = 1: the stationary prior variance is undefined")
    return (1.0 - rho * rho) * gamma / (1.0 - gamma)


def attention_from_snr(snr: float, rho: float) -> float:
    """Inverse of :func:`snr_for_attention`."""
    if snr < 0:
        raise ValueError("signal-to-noise ratio must be non-negative")
    if rho >= 1.0:
        raise UndefinedVarianceError("rho = 1: the stationary prior variance is undefined")
    x = snr / (1.0 - rho * rho)
    return x / (1.0 + x)
