"""Numerical kernels shared by the model solvers.

Gauss-Hermite quadrature under the standard normal, tensor-product cubic
splines with analytic partial derivatives, a damped Newton solver and a
portable normal random stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, g: Callable[[np.ndarray], np.ndarray], mean=0.0, std=1.0) -> float:
        """E[g(X)] for X ~ N(mean, std^2)."""
        return float(np.sum(self.weights * g(mean + std * self.nodes)))

    def __len__(self):
        return len(self.nodes)


def gauss_hermite_rule(n: int) -> QuadratureRule:
    """n-point rule for expectations under N(0, 1).

    Built from the physicists' Hermite rule by x = sqrt(2) t, w = w_t / sqrt(pi).
    """
    if not isinstance(n, (int, np.integer)) or n < 1 or n > 64:
        raise ValueError(f"quadrature order must be an integer in [1, 64], got {n!r}")
    t, w = hermgauss(int(n))
    x = np.sqrt(2.0) * t
    w = w / np.sqrt(np.pi)
    # exact symmetry and unit mass
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w)


# ---------------------------------------------------------------------------
# Cubic splines
# ---------------------------------------------------------------------------

def _second_derivative_map(x: np.ndarray, bc: str) -> np.ndarray:
    """Matrix K with M = K @ y, M the knot second derivatives of the spline."""
    n = len(x)
    if bc == "linear":
        # zero curvature everywhere: piecewise-linear interpolation
        return np.zeros((n, n))
    h = np.diff(x)
    A = np.zeros((n, n))
    B = np.zeros((n, n))
    for j in range(1, n - 1):
        A[j, j - 1] = h[j - 1]
        A[j, j] = 2.0 * (h[j - 1] + h[j])
        A[j, j + 1] = h[j]
        B[j, j - 1] = 6.0 / h[j - 1]
        B[j, j] = -6.0 / h[j - 1] - 6.0 / h[j]
        B[j, j + 1] = 6.0 / h[j]
    if bc == "natural":
        A[0, 0] = 1.0
        A[-1, -1] = 1.0
    elif bc == "not-a-knot":
        # third derivative continuous across the second and second-to-last knots
        A[0, 0], A[0, 1], A[0, 2] = h[1], -(h[0] + h[1]), h[0]
        A[-1, -3], A[-1, -2], A[-1, -1] = h[-1], -(h[-2] + h[-1]), h[-2]
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    return np.linalg.solve(A, B)


@dataclass(frozen=True)
class _Axis:
    knots: np.ndarray
    K: np.ndarray
    extrapolation: str = "linear"

    def weights(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        """Cardinal weights W (len(x), n) so that S^(order)(x) = W @ values.

        Outside the knot range the spline continues either linearly with its
        boundary slope or, with ``extrapolation="cubic"``, as the polynomial
        of the end interval.
        """
        knots, K = self.knots, self.K
        n = len(knots)
        x = np.asarray(x, dtype=float)
        lo, hi = knots[0], knots[-1]
        if self.extrapolation == "cubic":
            j = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, n - 2)
            return self._interval_weights(x, j, order)
        xc = np.clip(x, lo, hi)
        j = np.clip(np.searchsorted(knots, xc, side="right") - 1, 0, n - 2)
        h = knots[j + 1] - knots[j]
        a = (knots[j + 1] - xc) / h
        b = 1.0 - a
        rows = np.arange(len(x))
        W = np.zeros((len(x), n))

        def add(ca, cb, cc, cd):
            W[rows, j] += ca
            W[rows, j + 1] += cb
            W[:] += cc[:, None] * K[j] + cd[:, None] * K[j + 1]

        zero = np.zeros_like(a)
        if order == 0:
            add(a, b, (a ** 3 - a) * h * h / 6.0, (b ** 3 - b) * h * h / 6.0)
            dx = x - xc
            if np.any(dx != 0.0):
                W1 = self.weights(xc, 1)
                W += dx[:, None] * W1
        elif order == 1:
            add(-1.0 / h, 1.0 / h, -(3 * a * a - 1) * h / 6.0, (3 * b * b - 1) * h / 6.0)
        elif order == 2:
            add(zero, zero, a, b)
            W[x != xc] = 0.0
        else:
            raise ValueError("derivative order must be 0, 1 or 2")
        return W

    def _interval_weights(self, x, j, order):
        knots, K = self.knots, self.K
        h = knots[j + 1] - knots[j]
        a = (knots[j + 1] - x) / h
        b = 1.0 - a
        rows = np.arange(len(x))
        W = np.zeros((len(x), len(knots)))
        if order == 0:
            ca, cb, cc, cd = a, b, (a ** 3 - a) * h * h / 6.0, (b ** 3 - b) * h * h / 6.0
        elif order == 1:
            ca, cb = -1.0 / h, 1.0 / h
            cc, cd = -(3 * a * a - 1) * h / 6.0, (3 * b * b - 1) * h / 6.0
        elif order == 2:
            ca = cb = 0.0
            cc, cd = a, b
        else:
            raise ValueError("derivative order must be 0, 1 or 2")
        W[rows, j] += ca
        W[rows, j + 1] += cb
        W += cc[:, None] * K[j] + cd[:, None] * K[j + 1]
        return W


@dataclass(frozen=True)
class SplineField:
    """Tensor-product cubic spline in 1 to 4 dimensions.

    ``values`` are the coefficients in the cardinal basis: the field equals
    ``values`` at every knot tuple.
    """
    grids: tuple
    values: np.ndarray
    bc: str = "natural"
    axes: tuple = field(repr=False, compare=False, default=())

    @property
    def ndim(self) -> int:
        return len(self.grids)

    @property
    def lower(self) -> np.ndarray:
        return np.array([g[0] for g in self.grids])

    @property
    def upper(self) -> np.ndarray:
        return np.array([g[-1] for g in self.grids])

    def outside(self, points) -> np.ndarray:
        """Boolean mask of points lying outside the grid hyper-rectangle."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.any((p < self.lower - 1e-12) | (p > self.upper + 1e-12), axis=1)

    @property
    def extrapolation(self) -> str:
        return self.axes[0].extrapolation if self.axes else "linear"

    def with_values(self, values) -> "SplineField":
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ValueError(f"value tensor shape {values.shape} != {self.values.shape}")
        values = values.copy()
        values.setflags(write=False)
        return SplineField(self.grids, values, self.bc, self.axes)

    def __call__(self, points, deriv: Sequence[int] | None = None, chunk: int = 4096) -> np.ndarray:
        """Evaluate at points of shape (P, d) (or a single point of shape (d,))."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.ndim:
            raise ValueError(f"points have dimension {pts.shape[1]}, field has {self.ndim}")
        deriv = [0] * self.ndim if deriv is None else list(deriv)
        if len(deriv) != self.ndim:
            raise ValueError("one derivative order per dimension required")
        out = np.empty(len(pts))
        for s in range(0, len(pts), chunk):
            p = pts[s:s + chunk]
            Ws = [ax.weights(p[:, k], deriv[k]) for k, ax in enumerate(self.axes)]
            out[s:s + chunk] = contract(self.values, Ws)
        return out[0] if single else out


def contract(values: np.ndarray, Ws: Sequence[np.ndarray]) -> np.ndarray:
    """sum_{i1..id} values[i1..id] * W1[p,i1] * ... * Wd[p,id] for every p."""
    P = Ws[0].shape[0]
    T = Ws[0] @ values.reshape(values.shape[0], -1)  # (P, rest)
    for W in Ws[1:]:
        n = W.shape[1]
        T = np.einsum("pk,pkr->pr", W, T.reshape(P, n, -1))
    return T.reshape(P)


def spline_fit(grids, values, bc: str = "natural", extrapolation: str = "linear") -> SplineField:
    grids = tuple(np.array(g, dtype=float) for g in grids)
    values = np.array(values, dtype=float)
    if not 1 <= len(grids) <= 4:
        raise ValueError("spline dimension must be between 1 and 4")
    for k, g in enumerate(grids):
        if g.ndim != 1 or len(g) < 4:
            raise ValueError(f"grid {k} needs at least 4 knots")
        if np.any(np.diff(g) <= 0):
            raise ValueError(f"grid {k} is not strictly increasing")
        g.setflags(write=False)
    shape = tuple(len(g) for g in grids)
    if values.shape != shape:
        raise ValueError(f"values shape {values.shape} does not match grid shape {shape}")
    values.setflags(write=False)
    if extrapolation not in ("linear", "cubic"):
        raise ValueError(f"unknown extrapolation {extrapolation!r}")
    axes = tuple(_Axis(g, _second_derivative_map(g, bc), extrapolation) for g in grids)
    return SplineField(grids, values, bc, axes)


def spline_eval(field: SplineField, point, deriv_orders=None) -> float:
    point = np.asarray(point, dtype=float).ravel()
    if point.size != field.ndim:
        raise ValueError(f"point has dimension {point.size}, field has {field.ndim}")
    return float(field(point, deriv_orders))


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 50
    damping: float = 1.0
    fd_step: float = 1e-7

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("Newton needs at least one iteration")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class NewtonResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual_norm: float
    message: str = ""


def numerical_jacobian(f, x, step=1e-7):
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(f(x))
    J = np.empty((f0.size, x.size))
    for k in range(x.size):
        h = step * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        J[:, k] = (np.atleast_1d(f(xp)) - np.atleast_1d(f(xm))) / (2 * h)
    return J


def newton_solve(residual, x0, jacobian=None, cfg: NewtonConfig = NewtonConfig()) -> NewtonResult:
    """Damped Newton iteration on residual(x) = 0.

    Failure (singular Jacobian, iteration cap) is reported in the result, not
    raised.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    F = np.atleast_1d(residual(x))
    norm = float(np.max(np.abs(F)))
    for it in range(1, cfg.max_iter + 1):
        if norm <= cfg.tol:
            return NewtonResult(x, True, it - 1, norm)
        J = jacobian(x) if jacobian is not None else numerical_jacobian(residual, x, cfg.fd_step)
        J = np.atleast_2d(J)
        try:
            dx = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return NewtonResult(x, False, it, norm, "singular Jacobian")
        if not np.all(np.isfinite(dx)):
            return NewtonResult(x, False, it, norm, "singular Jacobian")
        x = x - cfg.damping * dx
        F = np.atleast_1d(residual(x))
        norm = float(np.max(np.abs(F)))
    if norm <= cfg.tol:
        return NewtonResult(x, True, cfg.max_iter, norm)
    return NewtonResult(x, False, cfg.max_iter, norm, "maximum iterations exceeded")


# ---------------------------------------------------------------------------
# Random numbers
# ---------------------------------------------------------------------------

class NormalStream:
    """Standard-normal draws from a counter-based generator.

    Algorithm: Philox4x64-10 keyed by the seed (numpy's ``Philox(seed)``); each
    raw 64-bit word becomes a uniform on (0, 1) as ``((w >> 11) + 0.5) * 2**-53``;
    consecutive uniform pairs (u1, u2) map to normals by Box-Muller,
    ``sqrt(-2 ln u1) * cos(2 pi u2)`` then ``sqrt(-2 ln u1) * sin(2 pi u2)``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._bitgen = np.random.Philox(self.seed)
        self._spare: float | None = None

    def _uniforms(self, n):
        raw = self._bitgen.random_raw(n)
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53

    def draw(self, n: int) -> np.ndarray:
        out = np.empty(n)
        k = 0
        if n == 0:
            return out
        if self._spare is not None:
            out[0] = self._spare
            self._spare = None
            k = 1
        need = n - k
        pairs = (need + 1) // 2
        if pairs:
            u = self._uniforms(2 * pairs).reshape(pairs, 2)
            r = np.sqrt(-2.0 * np.log(u[:, 0]))
            z = np.empty(2 * pairs)
            z[0::2] = r * np.cos(2 * np.pi * u[:, 1])
            z[1::2] = r * np.sin(2 * np.pi * u[:, 1])
            out[k:] = z[:need]
            if 2 * pairs > need:
                self._spare = float(z[-1])
        return out


def rng_stream(seed: int) -> NormalStream:
    return NormalStream(seed)
