"""Optimal policy under commitment with limited-attention beliefs and a
lower bound on the policy rate.

The commitment problem is written as a saddle-point Bellman equation in the
state (carried multiplier, cost-push shock, natural rate, prior belief).
Each node's saddle problem is solved by Newton on its first-order
conditions, in an interior branch and a branch with the rate at the bound.

The first-order conditions need two derivatives of the expected continuation
value. Both follow from envelope conditions:

* the derivative in the carried multiplier is ``-E[y'] / beta``;
* ``beta * gamma`` times the derivative in the next belief equals
  ``beta * (1 - gamma) * E[pi' - mu1']``.

The solver therefore iterates on two expectation fields, ``E[pi' - mu1']``
and ``E[y']``, stored over (next carried multiplier, cost-push shock,
natural rate, next belief) with the shocks at their current values (time
iteration). Each sweep solves the node problems at the quadrature
successors of every grid point and averages them. Anderson mixing speeds
up the sweeps, and a solve with the bound starts from the bound-free
solution. Once the fields have converged, the value of following the policy
is obtained from the linear policy-evaluation equation, solved by GMRES,
which gives the value field used for welfare.

All fields are tensor cubic splines whose coefficients are their values at
the knots. At a node only a 2-D spline in (next carried multiplier, next
belief) is evaluated, after the shock dimensions are collapsed with the
spline weights of the current shocks.

Units are quarterly percent; annualized figures are produced at output.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .nkmodel import Expectations, ModelParams, Path
from .numerics import QuadratureRule, SplineField, gauss_hermite_rule, rng_stream, spline_fit

log = logging.getLogger(__name__)

CARRY_EULER = "euler"          # next carried multiplier is the Euler multiplier
CARRY_PHILLIPS = "phillips"    # literal alternative: the Phillips multiplier


class RamseyError(RuntimeError):
    pass


@dataclass(frozen=True)
class RamseyState:
    zeta: float
    u: float
    r_n: float
    pi_e_prior: float

    def as_array(self) -> np.ndarray:
        return np.array([self.zeta, self.u, self.r_n, self.pi_e_prior], dtype=float)


@dataclass(frozen=True)
class NodeSolution:
    pi: float
    ygap: float
    i: float
    mu1: float
    mu2: float
    phi_elb: float
    branch: str
    pi_e_next: float
    zeta_next: float
    residual: float


@dataclass(frozen=True)
class GridSpec:
    """Collocation box and resolution.

    ``None`` bounds are filled in as follows: shocks span ``shock_sds``
    unconditional standard deviations, the prior belief spans ``belief_sds``
    times the inflation std of the bound-free Taylor-rule economy, and the
    carried multiplier covers the commitment path after a ``shock_sds``
    natural-rate shock with a 30% margin. The carried bound multiplier is
    never positive and has a point mass at zero, near which the expectation
    fields are steep, so its knots are packed towards the upper end:
    ``zeta_power`` is the exponent of that spacing (1 gives even spacing).
    """
    n_knots: int | tuple = 9
    n_quad: int = 5
    zeta: tuple | None = None
    u: tuple | None = None
    r_n: tuple | None = None
    pi_e: tuple | None = None
    bc: str = "natural"
    extrapolation: str = "linear"
    shock_sds: float = 5.0
    belief_sds: float = 4.0
    zeta_power: float = 2.0


@dataclass
class PolicySolution:
    params: ModelParams
    gamma: float
    elb_on: bool
    carry: str
    value: SplineField
    rule: QuadratureRule
    converged: bool
    change: float
    history: list
    policy: dict
    grid_spec: GridSpec
    fields: dict
    expansions: int = 0

    @property
    def grids(self):
        return self.value.grids

    @property
    def bound(self) -> float:
        return -self.params.ibar if self.elb_on else -math.inf


@dataclass(frozen=True)
class ErgodicStats:
    gamma: float
    elb_on: bool
    mean_pi: float          # annualized percent
    std_pi: float           # annualized percent
    elb_frequency: float
    welfare: float          # per-period mean of -(pi^2 + chi y^2) / 2, quarterly units
    welfare_discounted: float
    mean_ygap: float
    clip_fraction: float
    n_draws: int

    def row(self) -> tuple:
        return (self.gamma, int(self.elb_on), self.mean_pi, self.std_pi, self.elb_frequency,
                self.welfare, self.welfare_discounted, self.clip_fraction)


ERGODIC_COLUMNS = ("gamma", "elb_on", "mean_pi_annualized", "std_pi_annualized", "elb_frequency",
                   "welfare_per_period", "welfare_discounted", "clip_fraction")


# ---------------------------------------------------------------------------
# Expected next-period quantities
# ---------------------------------------------------------------------------

class _Outlook:
    """Expected next-period fields as functions of (zeta', pi_e') for a batch
    of states. Each state points (through ``group``) at a 2-D slice of the
    expectation fields taken at its current exogenous shocks."""

    def __init__(self, axes, slices: dict, group=None):
        self.ax_z, self.ax_e = axes[0], axes[3]
        self.slices = slices
        self.group = group

    @classmethod
    def at_states(cls, fields: dict, u, r):
        axes = fields["y"].axes
        Wu = axes[1].weights(np.atleast_1d(np.asarray(u, float)), 0)
        Wr = axes[2].weights(np.atleast_1d(np.asarray(r, float)), 0)
        slices = {k: np.einsum("abcd,pb,pc->pad", f.values, Wu, Wr, optimize=True)
                  for k, f in fields.items()}
        return cls(axes, slices)

    def __call__(self, name, zeta_next, pe_next, idx=None):
        sel = slice(None) if idx is None else idx
        g = sel if self.group is None else self.group[sel]
        S = self.slices[name][g]
        Wz = self.ax_z.weights(zeta_next, 0)
        We = self.ax_e.weights(pe_next, 0)
        return np.einsum("pa,pad,pd->p", Wz, S, We)


# ---------------------------------------------------------------------------
# Node problem
# ---------------------------------------------------------------------------

class _NodeProblem:
    """First-order conditions of the saddle problem for a batch of states."""

    def __init__(self, p: ModelParams, gamma: float, elb_on: bool, carry: str):
        self.p, self.g, self.elb_on, self.carry = p, gamma, elb_on, carry
        self.bound = -p.ibar

    def n_unknowns(self, bounded):
        base = 1 if self.carry == CARRY_EULER else 2
        return base + (1 if bounded else 0)

    def variables(self, z, st, bounded):
        """(pi, y, mu1, mu2, next belief, next carried multiplier)."""
        p, g = self.p, self.g
        zeta, u, r, pe = st.T
        pi = z[:, 0]
        pe1 = (1 - g) * pe + g * pi
        if self.carry == CARRY_EULER:
            mu2 = z[:, 1] if bounded else np.zeros_like(pi)
            y = (pi - p.beta * pe1 - u) / p.kappa
            mu1 = (-p.chi * y + mu2 - zeta / p.beta) / p.kappa
            return pi, y, mu1, mu2, pe1, mu2
        mu1 = z[:, 1]
        mu2 = z[:, 2] if bounded else np.zeros_like(pi)
        y = (-p.kappa * mu1 + mu2 - zeta / p.beta) / p.chi
        return pi, y, mu1, mu2, pe1, mu1

    def residual(self, z, st, look: _Outlook, bounded, idx=None):
        p, g = self.p, self.g
        pi, y, mu1, mu2, pe1, zn = self.variables(z, st, bounded)
        r, u = st[:, 2], st[:, 1]
        foc_pi = (-pi + mu1 * (1 - p.beta * g) - p.phi * g * mu2
                  + p.beta * (1 - g) * look("m", zn, pe1, idx))
        cols = [foc_pi]
        if self.carry == CARRY_EULER:
            if bounded:
                cols.append(y + p.phi * (self.bound - pe1 - r) - look("y", zn, pe1, idx))
        else:
            cols.append(pi - p.kappa * y - p.beta * pe1 - u - look("y", zn, pe1, idx))
            if bounded:
                cols.append(y + p.phi * (self.bound - pe1 - r))
        return np.column_stack(cols)

    def expected_output(self, zn, pe1, look, idx=None):
        if self.carry == CARRY_EULER:
            return look("y", zn, pe1, idx)
        return np.zeros_like(zn)

    def rate(self, z, st, look, bounded, idx=None):
        """Policy rate from the Euler equation (or the bound)."""
        pi, y, mu1, mu2, pe1, zn = self.variables(z, st, bounded)
        if bounded:
            return np.full_like(pi, self.bound)
        ey = self.expected_output(zn, pe1, look, idx)
        return pe1 + st[:, 2] + (ey - y) / self.p.phi

    def period_return(self, pi, y, mu1, mu2, pe1, i, st):
        """One-period return including the multiplier terms."""
        p = self.p
        zeta, u, r, pe = st.T
        return (-0.5 * (pi ** 2 + p.chi * y ** 2)
                + mu1 * (pi - p.kappa * y - p.beta * pe1 - u)
                + mu2 * (y + p.phi * (i - pe1 - r))
                - zeta * y / p.beta)


def _batch_newton(F, z0, tol=1e-10, max_iter=50, fd=1e-7):
    """Newton on independent small systems: F(z, rows) -> (P, k) for z (P, k)."""
    z = z0.copy()
    P, k = z.shape
    R = F(z, None)
    norm = np.max(np.abs(R), axis=1)
    active = np.flatnonzero(~(norm <= tol))
    it = 0
    while len(active) and it < max_iter:
        it += 1
        za, Ra = z[active], R[active]
        J = np.empty((len(active), k, k))
        for j in range(k):
            h = fd * np.maximum(1.0, np.abs(za[:, j]))
            zp = za.copy()
            zp[:, j] += h
            J[:, :, j] = (F(zp, active) - Ra) / h[:, None]
        singular = ~(np.abs(np.linalg.det(J)) > 1e-300)
        J[singular] = np.eye(k)
        step = np.linalg.solve(J, Ra[:, :, None])[:, :, 0]
        t = np.ones(len(active))
        best = za - step
        Rb = F(best, active)
        nb = np.max(np.abs(Rb), axis=1)
        # halve the step where the full step does not reduce the residual
        for _ in range(10):
            bad = ~(nb < norm[active]) & ~(nb <= tol)
            if not bad.any():
                break
            t[bad] *= 0.5
            cand = za[bad] - t[bad, None] * step[bad]
            Rc = F(cand, active[bad])
            best[bad], Rb[bad] = cand, Rc
            nb[bad] = np.max(np.abs(Rc), axis=1)
        z[active], R[active], norm[active] = best, Rb, nb
        active = active[~(nb <= tol)]
    return z, norm


def _solve_batch(prob: _NodeProblem, states, look: _Outlook, guess=None, tol=1e-10):
    """Two-branch solve for every state; returns a dict of arrays."""
    P = len(states)
    n_int = prob.n_unknowns(False)
    n_all = prob.n_unknowns(True)
    z0 = np.zeros((P, n_int)) if guess is None else guess["z_all"][:, :n_int].copy()

    def F_int(z, rows):
        st = states if rows is None else states[rows]
        return prob.residual(z, st, look, False, rows)

    z_int, res = _batch_newton(F_int, z0, tol)
    i = prob.rate(z_int, states, look, False)
    bounded = np.zeros(P, dtype=bool)
    z_all = np.zeros((P, n_all))
    z_all[:, :n_int] = z_int
    if prob.elb_on:
        need = np.flatnonzero(i < prob.bound)
        if len(need):
            zb0 = z_all[need].copy()
            if guess is not None:
                use = guess["bounded"][need]
                zb0[use] = guess["z_all"][need][use]
            sub = states[need]

            def F_b(z, rows):
                st = sub if rows is None else sub[rows]
                return prob.residual(z, st, look, True, need if rows is None else need[rows])

            zb, res_b = _batch_newton(F_b, zb0, tol)
            z_all[need] = zb
            bounded[need] = True
            res[need] = res_b
            i[need] = prob.bound
    out = {"z_all": z_all, "bounded": bounded, "residual": res, "i": i}
    names = ("pi", "y", "mu1", "mu2", "pe1", "zeta_next")
    for name in names:
        out[name] = np.empty(P)
    for flag in (False, True):
        m = bounded == flag
        if m.any():
            vals = prob.variables(z_all[m][:, :prob.n_unknowns(flag)], states[m], flag)
            for name, v in zip(names, vals):
                out[name][m] = v
    out["phi_elb"] = np.where(bounded, -prob.p.phi * out["mu2"], 0.0)
    out["ey"] = prob.expected_output(out["zeta_next"], out["pe1"], look)
    out["ret"] = prob.period_return(out["pi"], out["y"], out["mu1"], out["mu2"], out["pe1"],
                                    out["i"], states)
    return out


# ---------------------------------------------------------------------------
# Perfect-foresight commitment paths
# ---------------------------------------------------------------------------

def commitment_path(params: ModelParams, gamma: float, r_path, u_path=None, elb_on: bool = True,
                    initial_belief: float = 0.0, initial_zeta: float = 0.0, tol: float = 1e-11,
                    max_iter: int = 100) -> Path:
    """Optimal commitment path for known shock paths (no uncertainty).

    Stacks the first-order conditions, the two structural equations and the
    complementarity condition ``min(i + ibar, -mu2) = 0`` over the horizon
    and solves them by semismooth Newton. All variables return to zero after
    the last period. Without the bound the problem is linear-quadratic, so
    this path coincides with the response of the stochastic optimal policy.
    """
    p, g = params, gamma
    r = np.asarray(r_path, float)
    H = len(r)
    u = np.zeros(H) if u_path is None else np.asarray(u_path, float)
    I = np.eye(H)
    S = np.eye(H, k=1)
    L = np.eye(H, k=-1)
    powers = (1 - g) ** np.arange(H)
    # next belief e_{t+1} = A pi + a0
    A = g * np.tril(powers[np.subtract.outer(np.arange(H), np.arange(H)).clip(0)])
    a0 = (1 - g) * powers * initial_belief
    z0 = np.zeros(H)
    z0[0] = initial_zeta / p.beta
    O = np.zeros((H, H))
    lin = np.block([
        [I - p.beta * A, -p.kappa * I, O, O, O],
        [-p.phi * A, I - S, p.phi * I, O, O],
        [O, -p.chi * I, O, -p.kappa * I, I - L / p.beta],
        [-I + p.beta * (1 - g) * S, O, O, (1 - p.beta * g) * I - p.beta * (1 - g) * S, -p.phi * g * I],
    ])
    const = np.concatenate([-p.beta * a0 - u, -p.phi * (a0 + r), -z0, np.zeros(H)])
    x = np.zeros(5 * H)

    def residual(x):
        i, mu2 = x[2 * H:3 * H], x[4 * H:]
        comp = np.minimum(i + p.ibar, -mu2) if elb_on else mu2
        return np.concatenate([lin @ x + const, comp])

    for it in range(max_iter):
        R = residual(x)
        if np.max(np.abs(R)) <= tol:
            break
        i, mu2 = x[2 * H:3 * H], x[4 * H:]
        bottom = np.zeros((H, 5 * H))
        at_bound = (i + p.ibar <= -mu2) if elb_on else np.zeros(H, bool)
        rows = np.arange(H)
        bottom[rows[at_bound], 2 * H + rows[at_bound]] = 1.0
        bottom[rows[~at_bound], 4 * H + rows[~at_bound]] = -1.0 if elb_on else 1.0
        x = x - np.linalg.solve(np.vstack([lin, bottom]), R)
    else:
        raise RamseyError("commitment path did not converge")
    pi, y, i, mu1, mu2 = x.reshape(5, H)
    e1 = A @ pi + a0
    prior = np.concatenate([[initial_belief], e1[:-1]])
    zeta = np.concatenate([[initial_zeta], mu2[:-1]])
    bound = (i <= -p.ibar + 1e-12) & (mu2 < 0) if elb_on else np.zeros(H, bool)
    return Path(i=i, i_shadow=i, pi=pi, pi_e=e1, ygap=y, r_n=r, u=u, elb_flag=bound,
                pi_e_prior=prior,
                info={"zeta": zeta, "mu1": mu1, "mu2": mu2, "phi_elb": -p.phi * mu2 if elb_on else 0 * mu2,
                      "iterations": it, "gamma": g, "elb_on": elb_on})


# ---------------------------------------------------------------------------
# Grid construction
# ---------------------------------------------------------------------------

def _taylor_pi_std(params: ModelParams, gamma: float, T: int = 20000, seed: int = 7) -> float:
    """Inflation std in the bound-free Taylor-rule economy at the same attention."""
    from .nkmodel import ConvergenceError, stochastic_simulate
    try:
        path = stochastic_simulate(replace(params, elb=False), Expectations.limited(max(gamma, 1e-3)),
                                   T, seed, 500)
        return float(np.std(path.pi))
    except (ConvergenceError, ValueError):
        return float(params.sigma_u + params.sigma_r)


def _unconditional_sd(rho, sigma):
    return sigma / math.sqrt(max(1.0 - rho ** 2, 1e-12))


def _pilot_multiplier(params: ModelParams, gamma: float, sds: float, horizon: int = 300) -> float:
    """Most negative carried multiplier along the commitment path after a
    natural-rate shock of ``sds`` unconditional standard deviations."""
    sd_r = _unconditional_sd(params.rho_r, params.sigma_r)
    r = -sds * sd_r * params.rho_r ** np.arange(horizon)
    try:
        path = commitment_path(params, gamma, r)
        lo = float(np.min(path.info["mu2"]))
    except (RamseyError, np.linalg.LinAlgError):
        lo = 0.0
    return min(lo, -1e-3)


def _iid_cost_push(params: ModelParams, spec: GridSpec) -> bool:
    return params.rho_u == 0.0 and spec.u is None and params.sigma_u > 0 and spec.n_quad >= 4


def build_grids(params: ModelParams, gamma: float, spec: GridSpec, carry: str = CARRY_EULER):
    """Knot vectors for (zeta, u, r_n, pi_e) from ``spec``.

    With a serially uncorrelated cost-push shock (and no explicit ``u``
    bounds) the cost-push knots are the quadrature points themselves, so the
    expectation over next period's cost-push shock involves no
    interpolation at all.
    """
    counts = spec.n_knots if isinstance(spec.n_knots, tuple) else (spec.n_knots,) * 4
    if len(counts) != 4:
        raise ValueError("n_knots must be an int or one count per dimension")

    def span(bounds, half, n):
        if bounds is not None:
            lo, hi = bounds
        else:
            half = max(half, 1e-3)
            lo, hi = -half, half
        if not hi > lo:
            raise ValueError(f"empty grid range ({lo}, {hi})")
        return np.linspace(lo, hi, n)

    nz, nu, nr, ne = counts
    if _iid_cost_push(params, spec):
        gu = params.sigma_u * gauss_hermite_rule(spec.n_quad).nodes
    else:
        gu = span(spec.u, spec.shock_sds * _unconditional_sd(params.rho_u, params.sigma_u), nu)
    gr = span(spec.r_n, spec.shock_sds * _unconditional_sd(params.rho_r, params.sigma_r), nr)
    if spec.pi_e is not None:
        ge = span(spec.pi_e, 0.0, ne)
    else:
        ge = span(None, spec.belief_sds * _taylor_pi_std(params, gamma), ne)
    if spec.zeta is not None:
        zlo, zhi = spec.zeta
    else:
        lo = _pilot_multiplier(params, gamma, spec.shock_sds)
        # the bound multiplier is carried as is and never turns positive;
        # the Phillips multiplier takes either sign
        zlo, zhi = 1.3 * lo, (0.0 if carry == CARRY_EULER else -0.26 * lo)
    if not zhi > zlo:
        raise ValueError(f"empty grid range ({zlo}, {zhi})")
    if spec.zeta_power < 1:
        raise ValueError("zeta_power must be at least 1")
    gz = zhi - (zhi - zlo) * np.linspace(1.0, 0.0, nz) ** spec.zeta_power
    return gz, gu, gr, ge


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

class _Collocation:
    """Expectation fields on the grid (zeta', u, r_n, pi_e') and the batch of
    next-period states whose quadrature average defines them."""

    def __init__(self, params, gamma, elb_on, carry, grids, rule, bc, extrapolation, iid_u):
        p = params
        self.prob = _NodeProblem(params, gamma, elb_on, carry)
        self.params, self.rule = params, rule
        self.grids = grids
        self.shape = tuple(len(g) for g in grids)
        self.blank = spline_fit(grids, np.zeros(self.shape), bc, extrapolation)
        gz, gu, gr, ge = grids
        self.iid_u = iid_u
        ua = gu[:1] if iid_u else gu          # current cost-push values that matter
        nq = len(rule.nodes)
        up = p.rho_u * ua[:, None] + p.sigma_u * rule.nodes[None, :]
        rp = p.rho_r * gr[:, None] + p.sigma_r * rule.nodes[None, :]
        nz, na, nr, ne = len(gz), len(ua), len(gr), len(ge)
        K, A, J, L, M, N = np.meshgrid(np.arange(nz), np.arange(na), np.arange(nr), np.arange(ne),
                                       np.arange(nq), np.arange(nq), indexing="ij")
        self.next_states = np.column_stack([gz[K.ravel()], up[A.ravel(), M.ravel()],
                                            rp[J.ravel(), N.ravel()], ge[L.ravel()]])
        self.group = ((A.ravel() * nq + M.ravel()) * nr + J.ravel()) * nq + N.ravel()
        axes = self.blank.axes
        self.Wu = axes[1].weights(up.ravel(), 0)
        self.Wr = axes[2].weights(rp.ravel(), 0)
        self.weights = np.outer(rule.weights, rule.weights).ravel()
        self.reduced = (nz, na, nr, ne)
        self.nq = nq

    def _slices(self, values):
        nz, nu, nr, ne = self.shape
        S = np.einsum("abcd,xb,yc->xyad", values.reshape(self.shape), self.Wu, self.Wr, optimize=True)
        return S.reshape(-1, nz, ne)

    def outlook(self, fields: dict) -> _Outlook:
        return _Outlook(self.blank.axes, {k: self._slices(v) for k, v in fields.items()}, self.group)

    def average(self, x):
        """Quadrature average over next-period shocks, broadcast to the grid."""
        q = x.reshape(self.reduced + (self.nq * self.nq,)) @ self.weights
        if self.iid_u:
            q = np.broadcast_to(q, self.shape)
        return np.ascontiguousarray(q).ravel()

    def step(self, fields: dict, guess=None):
        sol = _solve_batch(self.prob, self.next_states, self.outlook(fields), guess)
        new = {"m": self.average(sol["pi"] - sol["mu1"]), "y": self.average(sol["y"])}
        return sol, new

    def expected_value(self, sol, tol=1e-12):
        """Expected value field for the node policies: solves the linear
        equation EV = E[R + beta EV(next states)]."""
        beta = self.params.beta
        axes = self.blank.axes
        Wz = axes[0].weights(sol["zeta_next"], 0)
        We = axes[3].weights(sol["pe1"], 0)
        base = self.average(sol["ret"])

        def P(v):
            S = self._slices(v)[self.group]
            return self.average(np.einsum("pa,pad,pd->p", Wz, S, We))

        n = len(base)
        A = LinearOperator((n, n), matvec=lambda v: v - beta * P(v), dtype=float)
        v, info = gmres(A, base, x0=base / (1 - beta), rtol=tol, atol=0.0, restart=100, maxiter=200)
        resid = float(np.max(np.abs(A.matvec(v) - base)))
        return v, resid


def solve_policy(params: ModelParams, gamma: float, grid: GridSpec = GridSpec(),
                 tol: float = 1e-7, elb_on: bool = True, carry: str = CARRY_EULER,
                 max_iter: int = 3000, damping: float = 1.0,
                 warm_start: PolicySolution | None = None, coverage_check: bool = True,
                 max_expansions: int = 3, coverage_draws: tuple = (200, 400),
                 seed: int = 11) -> PolicySolution:
    """Collocation solution of the commitment problem.

    Time iteration on the two expectation fields: the node problem is solved
    at every quadrature next-state of every grid point against the current
    fields, and the quadrature averages become the new fields. Stops when no
    knot value moves by more than ``tol``; the value field is then computed
    for the converged policies. With the bound imposed, iteration starts
    from the bound-free fields on the same grid.

    With ``coverage_check`` a pilot simulation checks that at most 1% of
    simulated states leave the grid; otherwise the box is widened around the
    simulated states and the problem re-solved, up to ``max_expansions``
    times.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if carry not in (CARRY_EULER, CARRY_PHILLIPS):
        raise ValueError(f"unknown carry rule {carry!r}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("attention must lie in [0, 1]")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    rule = gauss_hermite_rule(grid.n_quad)
    spec = grid
    expansions = 0
    while True:
        grids = build_grids(params, gamma, spec, carry)
        iid_u = _iid_cost_push(params, spec)
        col = _Collocation(params, gamma, elb_on, carry, grids, rule, spec.bc, spec.extrapolation,
                           iid_u)
        if warm_start is not None:
            pts = np.column_stack([g.ravel() for g in np.meshgrid(*grids, indexing="ij")])
            start = np.concatenate([warm_start.fields[k](pts) for k in ("m", "y")])
        elif elb_on:
            # the bound-free problem is linear-quadratic and converges in a
            # few steps; it is a far better start than zero fields
            free = _Collocation(params, gamma, False, carry, grids, rule, spec.bc,
                                spec.extrapolation, iid_u)
            first = _iterate(free, tol, max_iter, damping, value=False)
            start = np.concatenate([first["fields"]["m"], first["fields"]["y"]])
        else:
            start = None
        sol = _iterate(col, tol, max_iter, damping, start)
        solution = _package(col, sol, params, gamma, elb_on, carry, spec, rule, expansions, tol)
        if not coverage_check:
            break
        chains, length = coverage_draws
        rec = _simulate_chains(solution, chains, length, burn_in=length // 2, seed=seed)
        skip = (1,) if iid_u else ()
        widened, frac = _widen(spec, grids, rec["states"].reshape(-1, 4), skip=skip)
        solution.policy["coverage_clip_fraction"] = frac
        if widened is None or expansions >= max_expansions:
            break
        log.info("widening grid (clip fraction %.3f): %s", frac, widened)
        spec, warm_start = widened, solution
        expansions += 1
    if not solution.converged:
        warnings.warn(f"Ramsey solver stopped at change {solution.change:.2e} > tol {tol:.0e}")
    return solution


def _iterate(col: _Collocation, tol, max_iter, damping, start=None, memory=5, value=True):
    """Fixed-point iteration on the stacked fields with Anderson mixing.

    The belief dimension makes the plain map contract at roughly
    beta * (1 - gamma) per step, so low attention needs hundreds of plain
    steps; mixing over the last ``memory`` steps cuts that sharply. A step
    whose residual jumps above ten times the best one so far clears the
    history and falls back to a plain damped step.
    """
    n = int(np.prod(col.shape))
    x = np.zeros(2 * n) if start is None else np.array(start, float)

    def split(v):
        return {"m": v[:n], "y": v[n:]}

    history = []
    guess = None
    dX, dF = [], []
    prev = None
    best = np.inf
    for it in range(max_iter):
        sol, new = col.step(split(x), guess)
        gx = np.concatenate([new["m"], new["y"]])
        if not np.all(np.isfinite(gx)):
            raise RamseyError(f"non-finite expectation fields at iteration {it}")
        f = gx - x
        change = float(np.max(np.abs(f)))
        history.append(change)
        guess = sol
        if change <= tol:
            break
        if it % 50 == 0:
            log.debug("iteration %d: change %.3e", it, change)
        if change > 10 * best:
            dX, dF, prev = [], [], None
        best = min(best, change)
        if prev is not None and memory > 0:
            dX.append(x - prev[0])
            dF.append(f - prev[1])
            dX, dF = dX[-memory:], dF[-memory:]
        prev = (x, f)
        step = x + damping * f
        if dF:
            Fm = np.column_stack(dF)
            coef = np.linalg.lstsq(Fm, f, rcond=None)[0]
            step = step - (np.column_stack(dX) + damping * Fm) @ coef
        x = step
    fields = split(x)
    sol, new = col.step(fields, guess)
    sol["fields"] = fields
    sol["history"] = history
    sol["change"] = float(max(np.max(np.abs(new[k] - fields[k])) for k in fields))
    if value:
        sol["ev"], sol["ev_residual"] = col.expected_value(sol)
    return sol


def _package(col, sol, params, gamma, elb_on, carry, spec, rule, expansions, tol):
    shape = col.shape
    fields = {k: col.blank.with_values(v.reshape(shape)) for k, v in sol["fields"].items()}
    ev_field = col.blank.with_values(sol["ev"].reshape(shape))
    # policy tables and the value function at the grid states themselves
    pts = np.column_stack([g.ravel() for g in np.meshgrid(*col.grids, indexing="ij")])
    look = _Outlook.at_states({**fields, "ev": ev_field}, pts[:, 1], pts[:, 2])
    grid_sol = _solve_batch(col.prob, pts, look)
    value = grid_sol["ret"] + params.beta * look("ev", grid_sol["zeta_next"], grid_sol["pe1"])
    policy = {k: grid_sol[k].reshape(shape) for k in
              ("pi", "y", "i", "mu1", "mu2", "phi_elb", "pe1", "zeta_next", "residual")}
    policy["bounded"] = grid_sol["bounded"].reshape(shape)
    policy["node_residual_max"] = float(max(np.max(grid_sol["residual"]), np.max(sol["residual"])))
    policy["value_residual"] = sol["ev_residual"]
    fields["ev"] = ev_field
    return PolicySolution(params, gamma, elb_on, carry, col.blank.with_values(value.reshape(shape)),
                          rule, converged=sol["change"] <= tol, change=sol["change"],
                          history=sol["history"], policy=policy, grid_spec=spec, fields=fields,
                          expansions=expansions)


def _widen(spec: GridSpec, grids, states, limit=0.01, skip=()):
    """A wider box if more than ``limit`` of the simulated states fall outside."""
    lo = np.array([g[0] for g in grids])
    hi = np.array([g[-1] for g in grids])
    out = (states < lo) | (states > hi)
    out[:, list(skip)] = False
    frac = float(np.mean(out.any(axis=1)))
    if frac <= limit:
        return None, frac
    q_lo = np.quantile(states, 0.0005, axis=0)
    q_hi = np.quantile(states, 0.9995, axis=0)
    pad = 0.25 * (q_hi - q_lo)
    kw = {}
    for k, name in enumerate(("zeta", "u", "r_n", "pi_e")):
        if k in skip:
            continue
        if out[:, k].any():
            kw[name] = (float(min(lo[k], q_lo[k] - pad[k])), float(max(hi[k], q_hi[k] + pad[k])))
        else:
            kw[name] = (float(lo[k]), float(hi[k]))
    return replace(spec, **kw), frac


# ---------------------------------------------------------------------------
# Single-node interface
# ---------------------------------------------------------------------------

def node_saddle(state: RamseyState, fields: dict, params: ModelParams, gamma: float,
                elb_on: bool = True, rule: QuadratureRule | None = None,
                carry: str = CARRY_EULER) -> NodeSolution:
    """Saddle point of the one-period problem at ``state``.

    ``fields`` holds the next-period policy interpolants ``m`` (inflation
    minus the Phillips multiplier) and ``y`` (output gap), e.g.
    ``PolicySolution.fields``.
    """
    rule = gauss_hermite_rule(5) if rule is None else rule
    st = state.as_array()[None, :]
    look = _Outlook.at_states(fields, st[:, 1], st[:, 2])
    out = _solve_batch(_NodeProblem(params, gamma, elb_on, carry), st, look)
    res = float(out["residual"][0])
    if not res <= 1e-8:
        raise RamseyError(f"node problem not solved at {state} (residual {res:.2e})")
    if out["bounded"][0] and out["phi_elb"][0] < -1e-10:
        raise RamseyError(f"both branches infeasible at {state}: "
                          f"bound multiplier {out['phi_elb'][0]:.3e}")
    return NodeSolution(float(out["pi"][0]), float(out["y"][0]), float(out["i"][0]),
                        float(out["mu1"][0]), float(out["mu2"][0]), float(out["phi_elb"][0]),
                        "bound" if out["bounded"][0] else "interior",
                        float(out["pe1"][0]), float(out["zeta_next"][0]), res)


def zero_fields(params: ModelParams, gamma: float, grid: GridSpec = GridSpec()) -> dict:
    """Policy interpolants that are identically zero (no continuation)."""
    grids = build_grids(params, gamma, grid)
    blank = spline_fit(grids, np.zeros(tuple(len(g) for g in grids)), grid.bc, grid.extrapolation)
    return {"m": blank, "y": blank}


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _simulate_chains(solution: PolicySolution, n_chains: int, T: int, burn_in: int, seed: int,
                     initial=None, shocks=None):
    """Parallel chains that re-solve the node problem at every simulated state.

    Returns arrays of shape (T, n_chains) recorded after ``burn_in`` periods.
    """
    p = solution.params
    prob = _NodeProblem(p, solution.gamma, solution.elb_on, solution.carry)
    lo, hi = solution.value.lower, solution.value.upper
    # an iid cost-push shock enters only the current Phillips curve, so it
    # never needs to lie inside the grid
    free_u = _iid_cost_push(p, solution.grid_spec)
    total = burn_in + T
    if shocks is None:
        eps = rng_stream(seed).draw(2 * n_chains * total).reshape(total, n_chains, 2)
    else:
        eps = np.asarray(shocks, float)
    state = np.zeros((n_chains, 4)) if initial is None else np.array(initial, float).reshape(n_chains, 4)
    names = ("pi", "y", "i", "mu1", "mu2", "phi_elb", "zeta", "u", "r", "pe", "pe1",
             "bound", "clip", "res_pc", "res_euler", "residual")
    rec = {k: np.empty((T, n_chains)) for k in names}
    rec["states"] = np.empty((T, n_chains, 4))
    guess = None
    for t in range(total):
        state[:, 1] = p.rho_u * state[:, 1] + p.sigma_u * eps[t, :, 0]
        state[:, 2] = p.rho_r * state[:, 2] + p.sigma_r * eps[t, :, 1]
        clipped = np.clip(state, lo, hi)
        if free_u:
            clipped[:, 1] = state[:, 1]
        look = _Outlook.at_states(solution.fields, clipped[:, 1], clipped[:, 2])
        out = _solve_batch(prob, clipped, look, guess)
        guess = out
        if t >= burn_in:
            k = t - burn_in
            pe1, u, r = out["pe1"], clipped[:, 1], clipped[:, 2]
            rec["res_pc"][k] = out["pi"] - p.beta * pe1 - p.kappa * out["y"] - u
            rec["res_euler"][k] = out["y"] - look("y", out["zeta_next"], pe1) \
                + p.phi * (out["i"] - pe1 - r)
            for name in ("pi", "y", "i", "mu1", "mu2", "phi_elb", "pe1", "residual"):
                rec[name][k] = out[name]
            rec["zeta"][k], rec["u"][k], rec["r"][k], rec["pe"][k] = clipped.T
            rec["bound"][k] = out["bounded"]
            rec["clip"][k] = np.any(clipped != state, axis=1)
            rec["states"][k] = state
        state[:, 0] = out["zeta_next"]
        state[:, 3] = out["pe1"]
    return rec


def _path_from(rec, c, solution):
    def col(k):
        return rec[k][:, c].copy()
    return Path(i=col("i"), i_shadow=col("i"), pi=col("pi"), pi_e=col("pe1"), ygap=col("y"),
                r_n=col("r"), u=col("u"), elb_flag=col("bound").astype(bool), pi_e_prior=col("pe"),
                info={"zeta": col("zeta"), "mu1": col("mu1"), "mu2": col("mu2"),
                      "phi_elb": col("phi_elb"), "res_pc": col("res_pc"),
                      "res_euler": col("res_euler"), "node_residual": col("residual"),
                      "clip_fraction": float(np.mean(rec["clip"][:, c])),
                      "gamma": solution.gamma, "elb_on": solution.elb_on})


def simulate_ramsey(solution: PolicySolution, T: int, burn_in: int = 0, seed: int = 0) -> Path:
    """One simulated path under the optimal policy; multipliers are in ``info``."""
    if T <= 0:
        raise ValueError("T must be positive")
    rec = _simulate_chains(solution, 1, T, burn_in, seed)
    path = _path_from(rec, 0, solution)
    frac = path.info["clip_fraction"]
    if frac > 0.01:
        warnings.warn(f"{100 * frac:.1f}% of simulated states clipped at the grid boundary; "
                      "widen the grid")
    return path


def ergodic_stats(solution: PolicySolution, T: int = 500000, burn_in: int = 10000, seed: int = 0,
                  n_chains: int = 500) -> ErgodicStats:
    """Moments of the ergodic distribution from ``n_chains`` parallel chains.

    The ``T`` draws are split evenly across chains. Each chain first
    discards ``burn_in / n_chains`` periods, and at least 400.
    """
    p = solution.params
    n_chains = max(1, min(n_chains, T))
    per = max(1, T // n_chains)
    burn = max(400, burn_in // n_chains)
    rec = _simulate_chains(solution, n_chains, per, burn, seed)
    pi, y = rec["pi"].ravel(), rec["y"].ravel()
    frac = float(np.mean(rec["clip"]))
    if frac > 0.01:
        warnings.warn(f"{100 * frac:.1f}% of simulated states clipped at the grid boundary")
    w = float(np.mean(-0.5 * (pi ** 2 + p.chi * y ** 2)))
    return ErgodicStats(solution.gamma, solution.elb_on, 4 * float(np.mean(pi)),
                        4 * float(np.std(pi)), float(np.mean(rec["bound"])), w, w / (1 - p.beta),
                        float(np.mean(y)), frac, pi.size)


def target_rule_residual(path: Path, params: ModelParams, gamma: float) -> dict:
    """Residuals of the commitment target rules along a path with multipliers.

    ``with_bound`` uses the bound multiplier and its lag; ``without_bound``
    is the rule that holds when the bound never binds. The bound multiplier
    is the non-negative one reported by the solver, so a binding bound pulls
    the target below the discretion rule. Both rules are exact at full
    attention; with limited attention they leave out the effect of today's
    inflation on later beliefs and hold only approximately.
    """
    p, g = params, gamma
    phi_t = np.asarray(path.info["phi_elb"], float)
    phi_lag = np.concatenate([[0.0], phi_t[:-1]])
    a = 1 - p.beta * g
    without = path.pi + p.chi / p.kappa * a * path.ygap
    with_bound = without + phi_t * (a / (p.phi * p.kappa) - g) - a / (p.kappa * p.beta * p.phi) * phi_lag
    out = {"with_bound": with_bound, "without_bound": without}
    for k in ("with_bound", "without_bound"):
        x = np.abs(out[k])
        out[f"{k}_max_abs"] = float(x.max()) if x.size else 0.0
        out[f"{k}_mean_abs"] = float(x.mean()) if x.size else 0.0
    return out


def risky_steady_state(solution: PolicySolution, periods: int = 5000, tol: float = 1e-12):
    """Rest point of the policy with all shocks at zero."""
    state = np.zeros((1, 4))
    zero = np.zeros((1, 1, 2))
    for _ in range(periods):
        rec = _simulate_chains(solution, 1, 1, 0, 0, initial=state, shocks=zero)
        carried = rec["mu2"] if solution.carry == CARRY_EULER else rec["mu1"]
        nxt = np.array([[carried[0, 0], 0.0, 0.0, rec["pe1"][0, 0]]])
        done = np.max(np.abs(nxt - state)) < tol
        state = nxt
        if done:
            break
    return state[0]


def ramsey_irf(solution: PolicySolution, kind: str = "natural_rate", size_sd: float = 3.0,
               sign: int = -1, horizon: int = 40, start=None) -> Path:
    """Response to a one-time shock with no further shocks, starting from
    the rest point of the policy (or ``start``)."""
    if kind not in ("natural_rate", "cost_push"):
        raise ValueError(f"unknown shock type {kind!r}")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    s0 = risky_steady_state(solution) if start is None else np.asarray(start, float)
    eps = np.zeros((horizon, 1, 2))
    eps[0, 0, 1 if kind == "natural_rate" else 0] = sign * size_sd
    rec = _simulate_chains(solution, 1, horizon, 0, 0, initial=s0[None, :], shocks=eps)
    return _path_from(rec, 0, solution)


RAMSEY_PATH_COLUMNS = ("t", "i_annualized", "pi_annualized", "pi_e_annualized", "ygap", "elb_flag",
                       "r_n", "u", "zeta", "mu1", "mu2", "phi_elb")


def ramsey_path_rows(path: Path) -> list:
    """Rows for ``ramsey_path.csv``, rates annualized."""
    info = path.info
    return [(t, 4 * path.i[t], 4 * path.pi[t], 4 * path.pi_e[t], path.ygap[t], int(path.elb_flag[t]),
             path.r_n[t], path.u[t], info["zeta"][t], info["mu1"][t], info["mu2"][t],
             info["phi_elb"][t]) for t in range(len(path))]
