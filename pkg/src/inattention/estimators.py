"""Attention estimates from forecast panels and consensus series.

All estimators fit the updating regression

    forecast_t = a_i + b1 * forecast_{t-1} + b2 * (inflation_t - forecast_{t-1}) + e

and report attention as ``b2 / b1`` with a delta-method standard error.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .panelsim import MIN_OBSERVATIONS, PanelData

GAMMA_TOL = 0.05


class EstimationError(ValueError):
    pass


@dataclass
class EstimationResult:
    estimator: str
    beta0_hat: float            # pooled intercept, nan under fixed effects
    beta1_hat: float
    beta2_hat: float
    cov: np.ndarray             # covariance of (beta1, beta2)
    n_obs: int
    gamma_hat: float = math.nan
    se_gamma: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gamma_hat, self.se_gamma = attention_ratio(self.beta1_hat, self.beta2_hat, self.cov)
        if np.isfinite(self.gamma_hat) and not 0.0 <= self.gamma_hat <= 1.0:
            self.diagnostics["gamma_outside_unit_interval"] = True

    @property
    def rho_hat(self) -> float:
        return self.beta1_hat

    @property
    def se_beta(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def attention_ratio(b1, b2, cov, tol=GAMMA_TOL):
    """``b2 / b1`` and its delta-method SE; missing when ``|b1| < tol``."""
    if not abs(b1) >= tol:
        return math.nan, math.nan
    grad = np.array([-b2 / b1 ** 2, 1.0 / b1])
    var = float(grad @ cov @ grad)
    return b2 / b1, math.sqrt(max(var, 0.0))


def default_nw_lag(T: int) -> int:
    return int(math.floor(4.0 * (T / 100.0) ** (2.0 / 9.0)))


# ---------------------------------------------------------------------------
# HAC covariance
# ---------------------------------------------------------------------------

def hac_meat(X, e, L: int, groups=None, time=None) -> np.ndarray:
    """Bartlett-kernel sum of score cross-products.

    With ``groups`` the lags are taken within each group only (clustering by
    group with serial correlation inside); ``time`` gives the period of each
    row so that gaps are respected.
    """
    X = np.asarray(X, dtype=float)
    e = np.asarray(e, dtype=float)
    if X.ndim != 2 or X.shape[0] != e.shape[0]:
        raise ValueError("design matrix and residuals do not conform")
    if L < 0:
        raise ValueError("lag truncation must be non-negative")
    s = X * e[:, None]
    if groups is None:
        groups = np.zeros(len(e), dtype=np.int64)
    if time is None:
        time = np.arange(len(e))
    groups = np.asarray(groups)
    time = np.asarray(time)
    order = np.lexsort((time, groups))
    s, g, tt = s[order], groups[order], time[order]
    S = s.T @ s
    for l in range(1, L + 1):
        w = 1.0 - l / (L + 1.0)
        # pair rows whose period differs by exactly l within a group
        idx = np.searchsorted(_key(g, tt), _key(g, tt - l))
        idx = np.minimum(idx, len(tt) - 1)
        ok = (g[idx] == g) & (tt[idx] == tt - l)
        if not ok.any():
            continue
        G = s[ok].T @ s[idx[ok]]
        S += w * (G + G.T)
    return S


def _key(g, t):
    # lexicographic key for sorted (group, time) pairs
    return g.astype(np.float64) * 1e9 + t.astype(np.float64)


def newey_west_cov(X, e, L: int, groups=None, time=None) -> np.ndarray:
    """Sandwich covariance ``(X'X)^-1 S (X'X)^-1`` with a Bartlett-kernel ``S``.

    ``L = 0`` gives the White covariance.
    """
    X = np.asarray(X, dtype=float)
    e = np.asarray(e, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(e):
        raise ValueError("design matrix and residuals do not conform")
    if not 0 <= L < max(len(e), 1):
        raise ValueError("lag truncation must satisfy 0 <= L < T")
    bread = np.linalg.inv(X.T @ X)
    V = bread @ hac_meat(X, e, L, groups, time) @ bread
    return 0.5 * (V + V.T)


def _ols(X, y):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise EstimationError("rank-deficient design")
    b, *_ = np.linalg.lstsq(X, y, rcond=None)
    return b, y - X @ b


# ---------------------------------------------------------------------------
# Regression data
# ---------------------------------------------------------------------------

@dataclass
class _Pairs:
    ids: np.ndarray
    t: np.ndarray
    y: np.ndarray        # forecast_t
    prior: np.ndarray    # forecast_{t-1}
    error: np.ndarray    # inflation_t - forecast_{t-1}
    realized: np.ndarray


def _pairs(panel: PanelData, drop_short: bool = True) -> _Pairs:
    keep = np.ones(len(panel), dtype=bool)
    if drop_short:
        short = panel.flagged
        if short:
            keep &= ~np.isin(panel.forecaster_id, short)
    ids, t, x, pi = (a[keep] for a in (panel.forecaster_id, panel.t, panel.expectation,
                                        panel.realized))
    # rows are sorted by (id, t)
    prev = np.flatnonzero((ids[1:] == ids[:-1]) & (t[1:] == t[:-1] + 1))
    cur = prev + 1
    return _Pairs(ids[cur], t[cur], x[cur], x[prev], pi[cur] - x[prev], pi[cur])


# ---------------------------------------------------------------------------
# Pooled OLS and consensus OLS
# ---------------------------------------------------------------------------

def pooled_ols(panel: PanelData, nw_lag: int | None = None) -> EstimationResult:
    """Pooled OLS with forecaster-clustered Newey-West standard errors."""
    d = _pairs(panel)
    if len(d.y) < 4:
        raise EstimationError("too few usable observations")
    X = np.column_stack([np.ones(len(d.y)), d.prior, d.error])
    b, e = _ols(X, d.y)
    per_unit = np.bincount(np.unique(d.ids, return_inverse=True)[1])
    L = default_nw_lag(int(np.median(per_unit))) if nw_lag is None else nw_lag
    V = newey_west_cov(X, e, L, groups=d.ids, time=d.t)
    return EstimationResult("pooled_ols", b[0], b[1], b[2], V[1:, 1:], len(d.y),
                            diagnostics={"nw_lag": L, "n_forecasters": len(per_unit)})


def consensus_ols(expectation, realized, nw_lag: int | None = None) -> EstimationResult:
    """Updating regression on a single aggregate forecast series.

    ``expectation[t]`` is the forecast made in ``t`` for ``t + 1`` and
    ``realized[t]`` is inflation in ``t``.
    """
    x = np.asarray(expectation, dtype=float)
    pi = np.asarray(realized, dtype=float)
    if x.shape != pi.shape:
        raise ValueError("series must be aligned")
    if len(x) < 10:
        raise EstimationError("consensus regression needs at least 10 periods")
    y, prior = x[1:], x[:-1]
    X = np.column_stack([np.ones(len(y)), prior, pi[1:] - prior])
    b, e = _ols(X, y)
    L = default_nw_lag(len(y)) if nw_lag is None else nw_lag
    V = newey_west_cov(X, e, L)
    return EstimationResult("consensus_ols", b[0], b[1], b[2], V[1:, 1:], len(y),
                            diagnostics={"nw_lag": L})


def consensus_from_panel(panel: PanelData, nw_lag: int | None = None) -> EstimationResult:
    periods, mean, realized = panel.consensus()
    if len(periods) and np.any(np.diff(periods) != 1):
        raise EstimationError("consensus series has gaps")
    return consensus_ols(mean, realized, nw_lag)


# ---------------------------------------------------------------------------
# System GMM
# ---------------------------------------------------------------------------

def fixed_effects_system_gmm(panel: PanelData, max_lags: int | str = "all",
                             first_lag: int = 3) -> EstimationResult:
    """One-step system GMM with collapsed instruments.

    The first-differenced equation uses the forecast level lagged
    ``first_lag`` .. ``first_lag + max_lags - 1`` periods (relative to the
    dependent variable) as instruments, one column per lag. The levels
    equation uses the difference lagged ``first_lag - 1`` periods. Inflation
    is treated as exogenous and instruments itself in both equations. Pass
    ``first_lag=3`` when the disturbance is MA(1), as with reporting noise.
    """
    if first_lag < 2:
        raise ValueError("first_lag must be at least 2")
    keep = ~np.isin(panel.forecaster_id, panel.flagged)
    ids_all, t_all = panel.forecaster_id[keep], panel.t[keep]
    x_all, pi_all = panel.expectation[keep], panel.realized[keep]
    units = np.unique(ids_all)
    if not len(units):
        raise EstimationError("no forecaster has enough observations")
    t0, t1 = t_all.min(), t_all.max()
    T = int(t1 - t0 + 1)
    if T < 4:
        raise EstimationError("system GMM needs at least four periods")
    # dense (unit, period) arrays with nan for gaps
    X = np.full((len(units), T), np.nan)
    P = np.full(T, np.nan)
    ui = np.searchsorted(units, ids_all)
    X[ui, t_all - t0] = x_all
    P[t_all - t0] = pi_all
    nlag = T if max_lags == "all" else int(max_lags)
    if nlag < 1:
        raise ValueError("max_lags must be positive or 'all'")

    # equations for t = 2..T-1 (differences need t-1 and t-2)
    ts = np.arange(2, T)
    n_t = len(ts)
    lag_cols = [k for k in range(first_lag, first_lag + nlag) if k <= T - 1]
    # instrument columns: [diff lags..., diff inflation, level lag-diff, level inflation, const]
    nz = len(lag_cols) + 4
    rows_y, rows_X, rows_Z, rows_unit, rows_eq = [], [], [], [], []
    for u in range(len(units)):
        x = X[u]
        y_d = x[ts] - x[ts - 1]
        prior_d = x[ts - 1] - x[ts - 2]
        err = P - np.concatenate([[np.nan], x[:-1]])
        err_d = err[ts] - err[ts - 1]
        dpi = P[ts] - P[ts - 1]
        Zd = np.zeros((n_t, nz))
        for j, k in enumerate(lag_cols):
            src = ts - k
            val = np.where(src >= 0, x[np.maximum(src, 0)], np.nan)
            Zd[:, j] = np.nan_to_num(val)
        Zd[:, len(lag_cols)] = np.nan_to_num(dpi)
        ok_d = np.isfinite(y_d) & np.isfinite(prior_d) & np.isfinite(err_d)

        y_l = x[ts]
        prior_l = x[ts - 1]
        err_l = err[ts]
        Zl = np.zeros((n_t, nz))
        src = ts - (first_lag - 1)
        dlag = np.where(src >= 1, x[np.maximum(src, 1)] - x[np.maximum(src, 1) - 1], np.nan)
        Zl[:, len(lag_cols) + 1] = np.nan_to_num(dlag)
        Zl[:, len(lag_cols) + 2] = np.nan_to_num(P[ts])
        Zl[:, len(lag_cols) + 3] = 1.0
        ok_l = np.isfinite(y_l) & np.isfinite(prior_l) & np.isfinite(err_l)

        yd = np.where(ok_d, y_d, 0.0)
        Xd = np.column_stack([np.where(ok_d, prior_d, 0.0), np.where(ok_d, err_d, 0.0),
                              np.zeros(n_t)])
        yl = np.where(ok_l, y_l, 0.0)
        Xl = np.column_stack([np.where(ok_l, prior_l, 0.0), np.where(ok_l, err_l, 0.0),
                              ok_l.astype(float)])
        rows_y.append(np.concatenate([yd, yl]))
        rows_X.append(np.vstack([Xd, Xl]))
        rows_Z.append(np.vstack([Zd * ok_d[:, None], Zl * ok_l[:, None]]))
        rows_unit.append(np.concatenate([ok_d, ok_l]))
    Y = np.stack(rows_y)            # units x 2n_t
    XX = np.stack(rows_X)           # units x 2n_t x 3
    Z = np.stack(rows_Z)            # units x 2n_t x nz
    used = np.stack(rows_unit)
    n_obs = int(used[:, n_t:].sum())
    # drop instrument columns that are identically zero
    live = np.abs(Z).sum(axis=(0, 1)) > 0
    Z = Z[:, :, live]
    nz = Z.shape[2]
    if nz >= n_obs:
        raise EstimationError("instrument count reaches the number of observations")

    # one-step weight: MA(1) structure of differenced errors, identity for levels
    Hd = 2 * np.eye(n_t) - np.eye(n_t, k=1) - np.eye(n_t, k=-1)
    H = np.zeros((2 * n_t, 2 * n_t))
    H[:n_t, :n_t] = Hd
    H[n_t:, n_t:] = np.eye(n_t)
    Zt = Z.transpose(0, 2, 1)
    A = (Zt @ (H @ Z)).sum(axis=0)
    try:
        W = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise EstimationError("singular weighting matrix") from None
    if not np.all(np.isfinite(W)) or np.linalg.cond(A) > 1e14:
        W = np.linalg.pinv(A)
    ZX = (Zt @ XX).sum(axis=0)
    Zy = (Zt @ Y[:, :, None]).sum(axis=0)[:, 0]
    M = ZX.T @ W @ ZX
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError:
        raise EstimationError("GMM normal equations are singular") from None
    b = Minv @ (ZX.T @ W @ Zy)
    R = Y - np.einsum("uil,l->ui", XX, b)
    R = R * used
    g = (Zt @ R[:, :, None])[:, :, 0]
    S = g.T @ g
    V = Minv @ ZX.T @ W @ S @ W @ ZX @ Minv
    V = 0.5 * (V + V.T)

    diag = {"n_instruments": nz, "n_forecasters": len(units), "first_lag": first_lag,
            "max_lags": max_lags, "weighting": "one-step, robust"}
    for m in (1, 2):
        z = _ab_test(R[:, :n_t], XX[:, :n_t, :], used[:, :n_t], Z, W, ZX, Minv, V, R, m)
        diag[f"ar{m}_z"] = z
        diag[f"ar{m}_p"] = float(2 * stats.norm.sf(abs(z))) if np.isfinite(z) else math.nan
    return EstimationResult("system_gmm_onestep", math.nan, b[0], b[1], V[:2, :2], n_obs,
                            diagnostics=diag)


def _ab_test(Rd, Xd, used_d, Z, W, ZX, Minv, V, R, m):
    """Arellano-Bond test for order-``m`` serial correlation of differenced residuals."""
    n_t = Rd.shape[1]
    if n_t <= m:
        return math.nan
    lagged = np.zeros_like(Rd)
    lagged[:, m:] = Rd[:, :-m]
    ok = used_d.copy()
    ok[:, m:] &= used_d[:, :-m]
    ok[:, :m] = False
    lagged *= ok
    r = Rd * ok
    w = np.einsum("ut,ut->u", lagged, r)
    num = w.sum()
    a = np.einsum("ut,utl->l", lagged, Xd * ok[:, :, None])
    zu = (Z.transpose(0, 2, 1) @ R[:, :, None])[:, :, 0]
    cross = (zu * w[:, None]).sum(axis=0)
    var = (w ** 2).sum() - 2.0 * a @ Minv @ ZX.T @ W @ cross + a @ V @ a
    if var <= 0:
        return math.nan
    return float(num / math.sqrt(var))


# ---------------------------------------------------------------------------
# Time fixed effects
# ---------------------------------------------------------------------------

def time_fe_attention(panel: PanelData, rho_hat: float):
    """Attention from the two-way fixed-effects regression of
    ``(forecast_t - rho_hat forecast_{t-1}) / rho_hat`` on the forecast error.

    Returns ``(gamma_hat, se)`` with forecaster-clustered standard errors.
    """
    if not 0.0 < rho_hat <= 1.0 or abs(rho_hat) < 1e-8:
        raise EstimationError("rho_hat must lie in (0, 1]")
    d = _pairs(panel)
    dep = (d.y - rho_hat * d.prior) / rho_hat
    ids = np.unique(d.ids, return_inverse=True)[1]
    tt = np.unique(d.t, return_inverse=True)[1]
    x = d.error
    # partial out both sets of dummies by alternating projections
    dep_r, x_r = _two_way_demean(dep, ids, tt), _two_way_demean(x, ids, tt)
    sxx = x_r @ x_r
    if sxx <= 1e-14 * max(1.0, x @ x):
        raise EstimationError("forecast error is collinear with the fixed effects")
    gamma = float(x_r @ dep_r / sxx)
    e = dep_r - gamma * x_r
    n, k = len(dep), 1 + ids.max() + tt.max() + 1
    score = np.bincount(ids, weights=x_r * e)
    G = len(score)
    adj = G / max(G - 1, 1) * (n - 1) / max(n - k, 1)
    se = math.sqrt(adj * (score @ score)) / sxx
    return gamma, se


def _two_way_demean(v, a, b, tol=1e-13, max_iter=10000):
    r = v - v.mean()
    na, nb = np.bincount(a), np.bincount(b)
    for _ in range(max_iter):
        r_prev = r
        r = r - (np.bincount(a, weights=r) / na)[a]
        r = r - (np.bincount(b, weights=r) / nb)[b]
        if np.max(np.abs(r - r_prev)) < tol:
            break
    return r


# ---------------------------------------------------------------------------
# Rolling windows and the attention-volatility regression
# ---------------------------------------------------------------------------

@dataclass
class WindowEstimate:
    window_start: int
    window_end: int
    result: EstimationResult
    sigma_pi_hat: float
    median_pi: float

    @property
    def gamma_hat(self):
        return self.result.gamma_hat

    @property
    def se_gamma(self):
        return self.result.se_gamma


@dataclass
class AttentionPath:
    windows: list
    skipped: list = field(default_factory=list)

    def __len__(self):
        return len(self.windows)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(w, name) for w in self.windows], dtype=float)


def time_fe_from_panel(panel: PanelData) -> EstimationResult:
    """Two-way fixed-effects attention with persistence from pooled OLS."""
    base = pooled_ols(panel)
    g, se = time_fe_attention(panel, base.rho_hat)
    res = EstimationResult("time_fe", base.beta0_hat, base.beta1_hat, base.beta2_hat, base.cov,
                           base.n_obs, diagnostics=dict(base.diagnostics))
    res.gamma_hat, res.se_gamma = g, se
    return res


ESTIMATORS = {
    "pooled_ols": pooled_ols,
    "system_gmm": lambda p: fixed_effects_system_gmm(p),
    "consensus_ols": consensus_from_panel,
    "time_fe": time_fe_from_panel,
}


def rolling_attention(panel: PanelData, window_length: int, step: int = 1,
                      estimator: str = "pooled_ols") -> AttentionPath:
    """Re-estimate attention on windows of ``window_length`` consecutive periods."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    fit = ESTIMATORS[estimator]
    periods = np.unique(panel.t)
    path = AttentionPath([])
    if window_length > len(periods):
        warnings.warn("window longer than the sample: no windows estimated")
        path.skipped.append((None, None, "window longer than sample"))
        return path
    for s in range(0, len(periods) - window_length + 1, step):
        lo, hi = periods[s], periods[s + window_length - 1]
        sub = panel.window(lo, hi)
        pi = sub.realized_series()[1]
        try:
            res = fit(sub)
        except EstimationError as err:
            warnings.warn(f"window {lo}-{hi} skipped: {err}")
            path.skipped.append((int(lo), int(hi), str(err)))
            continue
        path.windows.append(WindowEstimate(int(lo), int(hi), res, float(np.std(pi, ddof=1)),
                                           float(np.median(pi))))
    return path


def attention_volatility_regression(path, control_median_inflation: bool = False,
                                    subsample: str | None = None, nw_lag: int | None = None) -> dict:
    """OLS of window attention on window inflation volatility with Newey-West SEs.

    ``path`` is an :class:`AttentionPath` or a tuple ``(gamma, sigma[, median])``.
    ``subsample`` keeps the windows with volatility in the lower 50% or 90%
    ("lower50", "lower90").
    """
    if isinstance(path, AttentionPath):
        g, sig, med = path.column("gamma_hat"), path.column("sigma_pi_hat"), path.column("median_pi")
    else:
        g, sig = np.asarray(path[0], float), np.asarray(path[1], float)
        med = np.asarray(path[2], float) if len(path) > 2 else np.full(len(g), np.nan)
    ok = np.isfinite(g) & np.isfinite(sig)
    if control_median_inflation:
        ok &= np.isfinite(med)
    if subsample is not None:
        q = {"lower50": 0.5, "lower90": 0.9}.get(subsample)
        if q is None:
            raise ValueError(f"unknown subsample rule {subsample!r}")
        ok &= sig <= np.quantile(sig[ok], q)
    if ok.sum() < 8:
        raise EstimationError("attention-volatility regression needs at least 8 windows")
    cols = [np.ones(ok.sum()), sig[ok]]
    if control_median_inflation:
        cols.append(med[ok])
    X = np.column_stack(cols)
    b, e = _ols(X, g[ok])
    L = default_nw_lag(len(e)) if nw_lag is None else nw_lag
    V = newey_west_cov(X, e, L)
    se = math.sqrt(V[1, 1])
    tstat = b[1] / se if se > 0 else math.inf
    return {"intercept": float(b[0]), "slope": float(b[1]), "se": se, "t": float(tstat),
            "p": float(2 * stats.norm.sf(abs(tstat))), "n": int(ok.sum()), "nw_lag": L,
            "coef": b, "cov": V}


ESTIMATES_COLUMNS = ("window_start", "window_end", "estimator", "gamma_hat", "se_gamma",
                     "rho_hat", "sigma_pi_hat", "median_pi", "n_obs")


def estimates_rows(path: AttentionPath, annualize: bool = True) -> list:
    """Rows for ``estimates.csv``; inflation moments annualized when asked."""
    k = 4.0 if annualize else 1.0
    return [(w.window_start, w.window_end, w.result.estimator, w.gamma_hat, w.se_gamma,
             w.result.rho_hat, k * w.sigma_pi_hat, k * w.median_pi, w.result.n_obs)
            for w in path.windows]
