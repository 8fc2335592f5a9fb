"""New Keynesian economy with limited-attention inflation expectations and an
effective lower bound on the policy rate.

All variables are deviations from the zero-inflation steady state in quarterly
percent. The bound on the rate in deviations is ``-ibar`` where ``ibar`` is the
steady-state nominal rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .numerics import rng_stream


@dataclass(frozen=True)
class TaylorRule:
    rho_i: float = 0.7
    phi_pi: float = 2.0
    phi_y: float = 0.5


BASELINE_RULE = TaylorRule()
SIMPLE_RULE = TaylorRule(rho_i=0.0, phi_pi=1.5, phi_y=0.0)


@dataclass(frozen=True)
class ModelParams:
    beta: float = 0.9975
    kappa: float = 0.057
    phi: float = 1.0          # real-rate elasticity of the output gap
    chi: float = 0.007        # output-gap weight in the loss
    taylor: TaylorRule = BASELINE_RULE
    rho_r: float = 0.8
    sigma_r: float = 0.2940
    rho_u: float = 0.0
    sigma_u: float = 0.154
    ibar: float = 0.25
    elb: bool = True
    rho_belief: float = 1.0
    belief_mean: float = 0.0
    inertia: str = "actual"   # rule smooths the lagged "actual" or "shadow" rate

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.sigma_r < 0 or self.sigma_u < 0:
            raise ValueError("shock standard deviations must be non-negative")
        if not 0 <= self.rho_belief <= 1:
            raise ValueError("perceived persistence must lie in [0, 1]")
        if self.inertia not in ("actual", "shadow"):
            raise ValueError("inertia must be 'actual' or 'shadow'")

    @property
    def bound(self) -> float:
        return -self.ibar if self.elb else -np.inf


@dataclass(frozen=True)
class Expectations:
    """Inflation-expectation regime of firms and households.

    ``None`` means full-information rational expectations for that group,
    otherwise the attention parameter.
    """
    firms: float | None
    households: float | None

    def __post_init__(self):
        for g in (self.firms, self.households):
            if g is not None and not 0.0 <= g <= 1.0:
                raise ValueError("attention must lie in [0, 1]")

    @classmethod
    def limited(cls, gamma: float) -> "Expectations":
        return cls(gamma, gamma)

    @classmethod
    def fire(cls) -> "Expectations":
        return cls(None, None)

    @property
    def is_fire(self) -> bool:
        return self.firms is None and self.households is None


@dataclass(frozen=True)
class Shock:
    kind: str = "natural_rate"   # or "cost_push"
    size_sd: float = 3.0
    sign: int = -1

    def __post_init__(self):
        if self.kind not in ("natural_rate", "cost_push"):
            raise ValueError(f"unknown shock type {self.kind!r}")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")


@dataclass
class Path:
    i: np.ndarray
    i_shadow: np.ndarray
    pi: np.ndarray
    pi_e: np.ndarray
    ygap: np.ndarray
    r_n: np.ndarray
    u: np.ndarray
    elb_flag: np.ndarray
    pi_e_households: np.ndarray | None = None
    pi_e_prior: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.pi)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.pi))


class ConvergenceError(RuntimeError):
    pass


def phillips_coefficients(params: ModelParams, gamma: float) -> dict:
    """Reduced-form Phillips curve under constant-gain beliefs.

    Inflation = prior * beta (1 - g) / (1 - beta g) + ygap * kappa / (1 - beta g)
    + u / (1 - beta g).
    """
    b = params.beta
    d = 1.0 - b * gamma
    if d <= 0:
        raise ValueError("beta * gamma must be below one")
    return {"prior": b * (1.0 - gamma) / d, "output": params.kappa / d, "shock": 1.0 / d}


def taylor_rate(params: ModelParams, lagged_rate, pi, ygap):
    """Shadow rate from the inertial rule and the bounded actual rate.

    ``lagged_rate`` is last period's actual or shadow rate depending on
    ``params.inertia``; the caller supplies the matching one.
    """
    tr = params.taylor
    shadow = tr.rho_i * lagged_rate + (1.0 - tr.rho_i) * (tr.phi_pi * pi + tr.phi_y * ygap)
    return shadow, np.maximum(shadow, params.bound)


def _belief_coeffs(params: ModelParams, gamma: float):
    """e' = a e + b pi + k for the perceived law of motion."""
    rho = params.rho_belief
    return rho * (1.0 - gamma), rho * gamma, (1.0 - rho) * params.belief_mean


def _shock_paths(params: ModelParams, shock: Shock, H: int):
    t = np.arange(H)
    r = np.zeros(H)
    u = np.zeros(H)
    if shock.kind == "natural_rate":
        r = shock.sign * shock.size_sd * params.sigma_r * params.rho_r ** t
    else:
        u = shock.sign * shock.size_sd * params.sigma_u * params.rho_u ** t
    return r, u


def _stacked_system(p: ModelParams, expectations: Expectations, r, u, initial_belief):
    """Residual and sparse Jacobian of the stacked path equations.

    Unknowns are stacked as (pi, y, i, shadow, firm belief, household belief),
    each of length H; beliefs are pi^e_{t+1|t}.
    """
    H = len(r)
    tr = p.taylor
    I = sp.identity(H, format="csr")
    lead = sp.eye(H, k=1, format="csr")
    lag1 = sp.eye(H, k=-1, format="csr")
    on_actual = p.inertia == "actual"
    first = np.zeros(H)
    first[0] = 1.0

    def belief_rows(gamma):
        # FIRE: e_t = pi_{t+1}; otherwise e_t = a e_{t-1} + b pi_t + k
        if gamma is None:
            return -lead, I, np.zeros(H)
        a, b, k = _belief_coeffs(p, gamma)
        return -b * I, I - a * lag1, k + a * initial_belief * first

    bf_pi, bf_e, bf_c = belief_rows(expectations.firms)
    bh_pi, bh_e, bh_c = belief_rows(expectations.households)
    c = 1 - tr.rho_i
    lag_i = -tr.rho_i * lag1 if on_actual else None
    lag_s = I if on_actual else I - tr.rho_i * lag1

    def residual(x):
        pi, y, i, s, ef, eh = x.reshape(6, H)
        lagged = tr.rho_i * (lag1 @ (i if on_actual else s))
        return np.concatenate([
            pi - p.beta * ef - p.kappa * y - u,
            y - lead @ y + p.phi * (i - eh - r),
            s - lagged - c * (tr.phi_pi * pi + tr.phi_y * y),
            i - np.maximum(s, p.bound),
            bf_pi @ pi + bf_e @ ef - bf_c,
            bh_pi @ pi + bh_e @ eh - bh_c,
        ])

    def jacobian(x):
        s = x[3 * H:4 * H]
        D = sp.diags((s > p.bound).astype(float))
        return sp.bmat([
            [I, -p.kappa * I, None, None, -p.beta * I, None],
            [None, I - lead, p.phi * I, None, None, -p.phi * I],
            [-c * tr.phi_pi * I, -c * tr.phi_y * I, lag_i, lag_s, None, None],
            [None, None, I, -D, None, None],
            [bf_pi, None, None, None, bf_e, None],
            [bh_pi, None, None, None, None, bh_e],
        ], format="csc")

    return residual, jacobian


def _semismooth_newton(residual, jacobian, x, tol, max_iter):
    norm = np.inf
    for it in range(max_iter):
        R = residual(x)
        norm = np.max(np.abs(R))
        if not np.isfinite(norm):
            break
        if norm <= tol:
            return x, True, it, norm
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                x = x - spla.spsolve(jacobian(x), R)
            except (spla.MatrixRankWarning, RuntimeError):
                break
    return x, False, max_iter, norm


def _solve_path(p, expectations, shock, H, initial_belief, tol, max_iter, continuation_steps):
    r_full, u_full = _shock_paths(p, shock, H)

    def attempt(scale, x0):
        res, jac = _stacked_system(p, expectations, scale * r_full, scale * u_full, initial_belief)
        return _semismooth_newton(res, jac, x0, tol, max_iter)

    x, ok, it, norm = attempt(1.0, np.zeros(6 * H))
    if ok:
        return x, it, norm
    x = np.zeros(6 * H)
    reached, step = 0.0, 1.0 / continuation_steps
    while reached < 1.0:
        target = min(1.0, reached + step)
        xn, ok, it, norm = attempt(target, x)
        if ok:
            x, reached = xn, target
        elif step > 1e-3 / continuation_steps:
            step *= 0.5
        else:
            raise ConvergenceError(
                f"no bounded path beyond {reached * shock.size_sd:.3f} SD "
                f"(continuation folds; last residual {norm:.2e})")
    return x, it, norm


def perfect_foresight_irf(params: ModelParams, expectations: Expectations, shock: Shock,
                          horizon: int = 200, initial_belief: float = 0.0,
                          tol: float = 1e-10, max_iter: int = 60,
                          continuation_steps: int = 40, max_horizon: int = 6400) -> Path:
    """Deterministic nonlinear response to a one-time shock with the bound imposed.

    The path is the zero of the stacked Phillips-curve, Euler, rule, bound and
    belief equations, with the economy back at steady state after the last
    period. The max operator makes the system piecewise linear, so semismooth
    Newton terminates once the set of bound periods is right. When the full
    shock cannot be reached directly the shock is scaled up from zero, reusing
    each solution as the next guess; a fold along that continuation means no
    bounded path exists for the full shock, which raises ``ConvergenceError``.

    Slow belief dynamics can need more than ``horizon`` periods to settle, so
    the solve horizon is doubled until the last period is within 1e-8 of
    steady state and the first ``horizon`` periods are returned.
    """
    p = params
    H = int(horizon)
    n = H
    while True:
        x, it, norm = _solve_path(p, expectations, shock, n, initial_belief, tol, max_iter,
                                  continuation_steps)
        pi, y, i, shadow, ef, eh = x.reshape(6, n)
        i = np.maximum(shadow, p.bound)
        terminal = max(abs(pi[-1]), abs(y[-1]), abs(i[-1]), abs(ef[-1]))
        if terminal <= 1e-8:
            break
        if 2 * n > max_horizon:
            raise ConvergenceError(
                f"path not back at steady state after {n} periods (deviation {terminal:.2e})")
        n *= 2
    r, u = _shock_paths(p, shock, H)
    prior = np.concatenate([[0.0 if expectations.firms is None else initial_belief], ef[:H - 1]])
    return Path(i=i[:H], i_shadow=shadow[:H], pi=pi[:H], pi_e=ef[:H], ygap=y[:H], r_n=r, u=u,
                elb_flag=shadow[:H] < p.bound, pi_e_households=eh[:H], pi_e_prior=prior,
                info={"iterations": it, "residual": float(norm), "solve_horizon": n,
                      "pi_after": float(pi[H]) if n > H else 0.0,
                      "y_after": float(y[H]) if n > H else 0.0,
                      "expectations": expectations, "shock": shock})


def equation_residuals(params: ModelParams, path: Path):
    """Phillips-curve and Euler residuals along a deterministic path."""
    p = params
    y_next = np.append(path.ygap[1:], path.info.get("y_after", 0.0))
    eh = path.pi_e if path.pi_e_households is None else path.pi_e_households
    res_as = path.pi - p.beta * path.pi_e - p.kappa * path.ygap - path.u
    res_ad = path.ygap - y_next + p.phi * (path.i - eh - path.r_n)
    return res_as, res_ad


def elb_spell_stats(path_or_flags) -> dict:
    flags = np.asarray(getattr(path_or_flags, "elb_flag", path_or_flags), dtype=bool)
    spells = []
    starts = []
    run = 0
    for k, f in enumerate(flags):
        if f:
            if run == 0:
                starts.append(k)
            run += 1
        elif run:
            spells.append(run)
            run = 0
    if run:
        spells.append(run)
    out = {
        "spells": spells,
        "starts": starts,
        "frequency": float(flags.mean()) if len(flags) else 0.0,
        "longest": max(spells) if spells else 0,
    }
    pi = getattr(path_or_flags, "pi", None)
    if pi is not None:
        pi = np.asarray(pi)
        out["mean_pi_during"] = float(pi[flags].mean()) if flags.any() else float("nan")
        after = np.zeros_like(flags)
        for s, n in zip(starts, spells):
            after[s + n:s + n + 8] = True
        after &= ~flags
        out["mean_pi_after"] = float(pi[after].mean()) if after.any() else float("nan")
    return out


def forecast_error_irf(path: Path) -> np.ndarray:
    """pi_{t+1} - pi^e_{t+1|t}, with the steady state beyond the horizon."""
    pi_next = np.append(path.pi[1:], path.info.get("pi_after", 0.0))
    return pi_next - path.pi_e


# ---------------------------------------------------------------------------
# Stochastic simulation
# ---------------------------------------------------------------------------

@dataclass
class LinearRule:
    """Output gap and inflation as linear functions of the state
    (lagged policy rate, firm belief, household belief, natural rate, cost push)."""
    y: np.ndarray
    pi: np.ndarray


def _period_system(p: ModelParams, gf, gh):
    af, bf, kf = _belief_coeffs(p, gf)
    ah, bh, kh = _belief_coeffs(p, gh)
    return af, bf, kf, ah, bh, kh, p.taylor


def linear_decision_rule(params: ModelParams, expectations: Expectations,
                         tol: float = 1e-13, max_iter: int = 20000) -> LinearRule:
    """Bound-free rule with model-consistent output expectations, by time iteration."""
    if expectations.firms is None or expectations.households is None:
        raise ValueError("linear rule is defined for limited-attention expectations only")
    p = params
    af, bf, _, ah, bh, _, tr = _period_system(p, expectations.firms, expectations.households)
    n = 5
    E = np.eye(n)
    ay = np.zeros(n)
    for _ in range(max_iter):
        # unknowns z = (p_vec, q_vec), 2n
        # x' rows: shadow, ef', eh', r', u'
        # shadow = rho_i e0 + (1-rho_i)(phi_pi p + phi_y q)
        # ef' = af e1 + bf p ; eh' = ah e2 + bh p ; r' = rho_r e3 ; u' = rho_u e4
        # AS: p = beta ef' + kappa q + e4
        # AD: q = ay . x' - phi (shadow - eh' - e3)
        A = np.zeros((2 * n, 2 * n))
        b = np.zeros(2 * n)
        Ip = slice(0, n)
        Iq = slice(n, 2 * n)
        # AS
        A[Ip, Ip] = np.eye(n) * (1 - p.beta * bf)
        A[Ip, Iq] = -p.kappa * np.eye(n)
        bAS = p.beta * af * E[1] + E[4]
        # AD: q - ay0*shadow - ay1*ef' - ay2*eh' + phi*shadow - phi*eh' = ay3 rho_r e3 + ay4 rho_u e4 + phi e3
        cs = (1 - tr.rho_i)
        k_sh = p.phi - ay[0]
        A[Iq, Ip] = np.eye(n) * (k_sh * cs * tr.phi_pi - ay[1] * bf - (ay[2] + p.phi) * bh)
        A[Iq, Iq] = np.eye(n) * (1 + k_sh * cs * tr.phi_y)
        bAD = (-k_sh * tr.rho_i * E[0] + ay[1] * af * E[1] + (ay[2] + p.phi) * ah * E[2]
               + (ay[3] * p.rho_r + p.phi) * E[3] + ay[4] * p.rho_u * E[4])
        z = np.linalg.solve(A, np.concatenate([bAS, bAD]))
        p_vec, q_vec = z[Ip], z[Iq]
        if np.max(np.abs(q_vec - ay)) < tol:
            ay = q_vec
            break
        ay = q_vec
    else:
        raise ConvergenceError("time iteration for the linear rule did not converge")
    return LinearRule(y=ay, pi=p_vec)


def _solve_period(p: ModelParams, gf, gh, ay, x, bounded: bool):
    """(pi, y, shadow, i, ef', eh') for one period given state x."""
    af, bf, kf, ah, bh, kh, tr = _period_system(p, gf, gh)
    lag_sh, ef, eh, r, u = x
    cs = 1 - tr.rho_i
    # ef' = af ef + bf pi + kf ; eh' = ah eh + bh pi + kh
    # shadow = rho_i lag + cs (phi_pi pi + phi_y y)
    # E y' = ay0 shadow + ay1 ef' + ay2 eh' + ay3 rho_r r + ay4 rho_u u
    # AS: pi (1 - beta bf) - kappa y = beta (af ef + kf) + u
    # AD: y - Ey' + phi (i - eh' - r) = 0
    a11, a12 = 1 - p.beta * bf, -p.kappa
    b1 = p.beta * (af * ef + kf) + u
    const_ey = ay[1] * (af * ef + kf) + ay[2] * (ah * eh + kh) \
        + ay[3] * p.rho_r * r + ay[4] * p.rho_u * u
    # next period's lagged rate is the shadow rate unless the bound binds
    # and the rule smooths the actual rate
    rate_pinned = bounded and p.inertia == "actual"
    if rate_pinned:
        const_ey += ay[0] * p.bound
        a21, a22 = 0.0, 1.0
    else:
        const_ey += ay[0] * tr.rho_i * lag_sh
        a21 = -ay[0] * cs * tr.phi_pi
        a22 = 1 - ay[0] * cs * tr.phi_y
    # AD: y - Ey' + phi (i - eh' - r) = 0 with eh' = ah eh + bh pi + kh
    a21 += -ay[1] * bf - ay[2] * bh - p.phi * bh
    b2 = const_ey + p.phi * (ah * eh + kh) + p.phi * r
    if not bounded:
        a21 += p.phi * cs * tr.phi_pi
        a22 += p.phi * cs * tr.phi_y
        b2 -= p.phi * tr.rho_i * lag_sh
    else:
        b2 -= p.phi * p.bound
    det = a11 * a22 - a12 * a21
    pi = (b1 * a22 - a12 * b2) / det
    y = (a11 * b2 - a21 * b1) / det
    shadow = tr.rho_i * lag_sh + cs * (tr.phi_pi * pi + tr.phi_y * y)
    i = p.bound if bounded else shadow
    return pi, y, shadow, i, af * ef + bf * pi + kf, ah * eh + bh * pi + kh


def stochastic_simulate(params: ModelParams, expectations: Expectations, T: int, seed: int,
                        burn_in: int = 0, divergence_bound: float = 50.0) -> Path:
    """Simulated economy under shocks drawn from the seeded normal stream.

    Output-gap expectations come from the bound-free linear rule evaluated at
    next period's state; periods in which the bound binds are flagged in
    ``info['approximate']``.

    With adaptive beliefs the bound can start a self-reinforcing deflation.
    If inflation or beliefs leave ``[-divergence_bound, divergence_bound]``
    (quarterly percent) the run stops with ``ConvergenceError``.
    """
    if T <= burn_in:
        raise ValueError("T must exceed burn_in")
    if expectations.firms is None or expectations.households is None:
        raise ValueError("stochastic simulation requires limited-attention expectations")
    p = params
    rule = linear_decision_rule(p, expectations)
    stream = rng_stream(seed)
    eps = stream.draw(2 * T).reshape(T, 2)
    gf, gh = expectations.firms, expectations.households
    out = {k: np.empty(T) for k in ("pi", "y", "shadow", "i", "ef", "eh", "r", "u", "prior")}
    flags = np.zeros(T, dtype=bool)
    lag_sh = ef = eh = r = u = 0.0
    for t in range(T):
        r = p.rho_r * r + p.sigma_r * eps[t, 0]
        u = p.rho_u * u + p.sigma_u * eps[t, 1]
        x = (lag_sh, ef, eh, r, u)
        sol = _solve_period(p, gf, gh, rule.y, x, False)
        if p.elb and sol[2] < p.bound:
            sol = _solve_period(p, gf, gh, rule.y, x, True)
            flags[t] = True
        pi, y, sh, i, ef_next, eh_next = sol
        out["prior"][t] = ef
        out["pi"][t], out["y"][t], out["shadow"][t], out["i"][t] = pi, y, sh, i
        out["ef"][t], out["eh"][t], out["r"][t], out["u"][t] = ef_next, eh_next, r, u
        lag_sh = i if p.inertia == "actual" else sh
        ef, eh = ef_next, eh_next
        if not max(abs(pi), abs(ef), abs(eh)) <= divergence_bound:
            raise ConvergenceError(f"simulated path diverged at t={t} (inflation {pi:.3g})")
    s = slice(burn_in, T)
    return Path(i=out["i"][s], i_shadow=out["shadow"][s], pi=out["pi"][s], pi_e=out["ef"][s],
                ygap=out["y"][s], r_n=out["r"][s], u=out["u"][s], elb_flag=flags[s],
                pi_e_households=out["eh"][s], pi_e_prior=out["prior"][s],
                info={"approximate": flags[s].copy(), "rule": rule, "seed": seed})


def with_belief_persistence(params: ModelParams, rho_belief: float) -> ModelParams:
    return replace(params, rho_belief=rho_belief)


IRF_COLUMNS = ("t", "i_annualized", "pi_annualized", "pi_e_annualized", "ygap", "elb_flag", "r_n", "u")


def irf_rows(path: Path) -> list:
    """Rows for ``irf.csv``: rates annualized, gap and shocks quarterly."""
    return [(t, 4 * path.i[t], 4 * path.pi[t], 4 * path.pi_e[t], path.ygap[t], int(path.elb_flag[t]),
             path.r_n[t], path.u[t]) for t in range(len(path))]
