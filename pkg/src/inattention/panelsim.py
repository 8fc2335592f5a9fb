"""Synthetic forecaster panels and a plain CSV panel format.

Every forecaster sees a noisy signal of a common AR(1) inflation series and
updates with the steady-state Kalman weight. Noise variances differ across
forecasters, but the signal-to-noise ratio is held fixed so that attention is
common. Reported forecasts carry i.i.d. disturbances.

Record convention: row ``(i, t)`` holds the forecast made in period ``t`` for
``t + 1`` together with realized inflation in ``t``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import (BeliefParams, optimal_attention, snr_for_attention,
                        stationary_prior_variance)
from .numerics import rng_stream

PANEL_COLUMNS = ("forecaster_id", "t", "expectation", "realized")
MIN_OBSERVATIONS = 8


class PanelFormatError(ValueError):
    pass


def simulate_inflation(rho: float, c: float, sigma_nu: float, T: int, seed: int,
                       pi0: float | None = None) -> np.ndarray:
    """AR(1) inflation ``(1 - rho) c + rho pi_{t-1} + nu_t`` of length ``T``.

    The first value comes from the stationary distribution when ``rho < 1``
    and equals ``c`` under a random walk, unless ``pi0`` is given.
    """
    if abs(rho) > 1:
        raise ValueError("|rho| must not exceed one")
    if sigma_nu < 0:
        raise ValueError("sigma_nu must be non-negative")
    z = rng_stream(seed).draw(T)
    pi = np.empty(T)
    if pi0 is not None:
        pi[0] = pi0
    elif abs(rho) < 1:
        pi[0] = c + sigma_nu / np.sqrt(1 - rho * rho) * z[0]
    else:
        pi[0] = c
    for t in range(1, T):
        pi[t] = (1 - rho) * c + rho * pi[t - 1] + sigma_nu * z[t]
    return pi


@dataclass(frozen=True)
class PanelConfig:
    """Data-generating process for a forecaster panel.

    ``noise_scale_sd`` is the log-dispersion of the signal-noise standard
    deviation across forecasters around the level implied by the actual
    innovation std. ``noise_mode`` places the disturbance on the reported
    forecast ("reporting") or inside the updating recursion ("structural").
    ``common_shock_sd`` adds a period effect to the recorded realized series
    that forecasters do not observe. ``regimes`` optionally replaces the
    constant ``(sigma_nu, true_gamma)`` by consecutive blocks
    ``(n_periods, sigma_nu, gamma)`` covering all ``T`` periods. With
    ``signal_noise=False`` forecasters update on inflation itself.
    """
    true_gamma: float = 0.70
    rho: float = 0.93
    c: float = 1.0
    sigma_nu: float = 0.22
    c_sd: float = 2.0
    noise_scale_sd: float = 0.3
    report_sd: float = 0.25
    noise_mode: str = "reporting"
    common_shock_sd: float = 0.0
    N: int = 100
    T: int = 88
    seed: int = 0
    drop_initial: int = 4
    regimes: tuple = ()
    signal_noise: bool = True

    def __post_init__(self):
        if self.N < 1 or self.T < 2:
            raise ValueError("need N >= 1 and T >= 2")
        if not 0.0 <= self.true_gamma <= 1.0:
            raise ValueError("attention must lie in [0, 1]")
        for name in ("sigma_nu", "c_sd", "noise_scale_sd", "report_sd", "common_shock_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.noise_mode not in ("reporting", "structural"):
            raise ValueError("noise_mode must be 'reporting' or 'structural'")
        if not 0 <= self.drop_initial < self.T:
            raise ValueError("drop_initial must lie in [0, T)")
        if self.regimes:
            if sum(int(n) for n, _, _ in self.regimes) != self.T:
                raise ValueError("regime lengths must add up to T")
            for _, sd, g in self.regimes:
                if sd < 0 or not 0.0 <= g <= 1.0:
                    raise ValueError("regimes need sigma_nu >= 0 and gamma in [0, 1]")

    def period_parameters(self):
        """Per-period innovation std and attention."""
        if not self.regimes:
            return np.full(self.T, self.sigma_nu), np.full(self.T, self.true_gamma)
        sd = np.concatenate([np.full(int(n), s) for n, s, _ in self.regimes])
        g = np.concatenate([np.full(int(n), g) for n, _, g in self.regimes])
        return sd, g


def optimal_attention_regimes(lengths, sigma_nus, rho: float, lambda_tilde: float) -> tuple:
    """Regime blocks whose attention is the optimal choice given each block's
    stationary inflation variance."""
    out = []
    for n, sd in zip(lengths, sigma_nus):
        var = stationary_prior_variance(rho, sd ** 2)
        g = optimal_attention(BeliefParams(rho=rho, lambda_tilde=lambda_tilde), var)
        out.append((int(n), float(sd), float(g)))
    return tuple(out)


@dataclass
class PanelData:
    forecaster_id: np.ndarray
    t: np.ndarray
    expectation: np.ndarray
    realized: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.forecaster_id = np.asarray(self.forecaster_id, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=np.int64)
        self.expectation = np.asarray(self.expectation, dtype=float)
        self.realized = np.asarray(self.realized, dtype=float)
        n = len(self.forecaster_id)
        if not (len(self.t) == len(self.expectation) == len(self.realized) == n):
            raise ValueError("panel columns differ in length")
        order = np.lexsort((self.t, self.forecaster_id))
        for name in ("forecaster_id", "t", "expectation", "realized"):
            setattr(self, name, getattr(self, name)[order])
        dup = np.flatnonzero((np.diff(self.forecaster_id) == 0) & (np.diff(self.t) == 0))
        if len(dup):
            k = dup[0]
            raise PanelFormatError(
                f"duplicate record for (forecaster_id={self.forecaster_id[k]}, t={self.t[k]})")
        self._check_realized()

    def _check_realized(self):
        periods, inv = np.unique(self.t, return_inverse=True)
        if not len(periods):
            return
        first = np.full(len(periods), np.nan)
        first[inv[::-1]] = self.realized[::-1]
        bad = np.flatnonzero(np.abs(self.realized - first[inv]) > 1e-12)
        if len(bad):
            raise PanelFormatError(f"realized inflation differs across forecasters at t={self.t[bad[0]]}")

    def __len__(self):
        return len(self.t)

    @property
    def forecasters(self) -> np.ndarray:
        return np.unique(self.forecaster_id)

    def counts(self) -> dict:
        ids, n = np.unique(self.forecaster_id, return_counts=True)
        return dict(zip(ids.tolist(), n.tolist()))

    @property
    def flagged(self) -> list:
        """Forecasters with fewer than eight observations."""
        return [i for i, n in self.counts().items() if n < MIN_OBSERVATIONS]

    def realized_series(self):
        """(periods, realized inflation) with one value per period."""
        periods, idx = np.unique(self.t, return_index=True)
        return periods, self.realized[idx]

    def subset(self, mask) -> "PanelData":
        mask = np.asarray(mask, dtype=bool)
        return PanelData(self.forecaster_id[mask], self.t[mask], self.expectation[mask],
                         self.realized[mask], dict(self.meta))

    def window(self, t_start: int, t_end: int) -> "PanelData":
        """Records with ``t_start <= t <= t_end``."""
        return self.subset((self.t >= t_start) & (self.t <= t_end))

    def consensus(self):
        """Cross-forecaster mean expectation by period: (periods, mean forecast, realized)."""
        periods, inv = np.unique(self.t, return_inverse=True)
        mean = np.bincount(inv, weights=self.expectation) / np.bincount(inv)
        return periods, mean, self.realized_series()[1]

    def scaled(self, k: float) -> "PanelData":
        return PanelData(self.forecaster_id, self.t, k * self.expectation, k * self.realized,
                         dict(self.meta))


def simulate_panel(cfg: PanelConfig) -> PanelData:
    rng = rng_stream(cfg.seed)
    N, T, rho = cfg.N, cfg.T, cfg.rho
    sd_t, g_t = cfg.period_parameters()
    z_pi = rng.draw(T)
    pi = np.empty(T)
    pi[0] = cfg.c + sd_t[0] / np.sqrt(1 - rho * rho) * z_pi[0] if rho < 1 else cfg.c
    for t in range(1, T):
        pi[t] = (1 - rho) * cfg.c + rho * pi[t - 1] + sd_t[t] * z_pi[t]

    c_i = cfg.c + cfg.c_sd * rng.draw(N)
    # a common signal-to-noise ratio per period keeps attention common;
    # forecasters differ only in the scale of their noise
    scale = np.exp(cfg.noise_scale_sd * rng.draw(N))
    snr = np.array([_snr(g, rho) for g in g_t])
    with np.errstate(divide="ignore", invalid="ignore"):
        base_eps2 = np.where(snr > 0, sd_t ** 2 / snr, 0.0)
    eps_sd = np.sqrt(base_eps2)[None, :] * scale[:, None]
    eps = eps_sd * rng.draw(N * T).reshape(N, T)
    if not cfg.signal_noise:
        eps[:] = 0.0
    noise = cfg.report_sd * rng.draw(N * T).reshape(N, T)
    common = cfg.common_shock_sd * rng.draw(T)

    belief = np.empty((N, T))
    prior = c_i.copy()
    structural = cfg.noise_mode == "structural"
    for t in range(T):
        signal = pi[t] + eps[:, t]
        prior = (1 - rho) * c_i + rho * prior + rho * g_t[t] * (signal - prior)
        if structural:
            prior = prior + noise[:, t]
        belief[:, t] = prior
    reported = belief if structural else belief + noise

    sigma_eps2 = base_eps2[cfg.drop_initial] * scale ** 2
    snr0 = snr[cfg.drop_initial]
    meta = {"c_i": c_i, "sigma_eps2": sigma_eps2,
            "sigma_nu2": snr0 * sigma_eps2 if np.isfinite(snr0) else np.full(N, np.inf),
            "snr": snr0, "gamma_t": g_t, "config": cfg, "inflation": pi}
    keep = slice(cfg.drop_initial, T)
    tt = np.arange(T)[keep]
    ids = np.repeat(np.arange(N), len(tt))
    return PanelData(ids, np.tile(tt, N), reported[:, keep].ravel(),
                     np.tile((pi + common)[keep], N), meta)


def _snr(gamma, rho):
    if gamma >= 1.0:
        return np.inf
    if rho >= 1.0:
        # random-walk perception: prior variance of one innovation
        return gamma / (1.0 - gamma)
    return snr_for_attention(gamma, rho)


def save_panel_csv(panel: PanelData, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PANEL_COLUMNS)
        for row in zip(panel.forecaster_id, panel.t, panel.expectation, panel.realized):
            w.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3]))])


def load_panel_csv(path) -> PanelData:
    """Read a panel written by :func:`save_panel_csv` (or any file in that schema)."""
    path = Path(path)
    ids, ts, ex, re = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file, header missing") from None
        header = [h.strip() for h in header]
        missing = [c for c in PANEL_COLUMNS if c not in header]
        if missing:
            raise PanelFormatError(f"{path}: missing columns {missing}")
        pos = [header.index(c) for c in PANEL_COLUMNS]
        for line, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != len(header):
                raise PanelFormatError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                ids.append(int(row[pos[0]]))
                ts.append(int(row[pos[1]]))
                ex.append(float(row[pos[2]]))
                re.append(float(row[pos[3]]))
            except ValueError as err:
                raise PanelFormatError(f"{path}, line {line}: {err}") from None
    return PanelData(ids, ts, ex, re, {"source": str(path)})
