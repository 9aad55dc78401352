"""Constant-cost closed forms and the backward/forward engine for
deterministic, time-varying trading costs.

The Riccati coefficient P is integrated through its reciprocal u = 1/P, which
solves the linear equation u' = -u - rho/c(t). That form is well conditioned
for any rho/c, whereas the raw quadratic equation develops a boundary layer
of width c/rho at maturity. The supply component delta then follows from the
integrating factor, delta(t) = P(t) * int_t^T c m / P ds, evaluated with the
grid quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .costs import CostPath
from .model import TimeGrid, ValidationError, default_grid
from .quadrature import cumulative, tail

# ---------------------------------------------------------------------------
# closed forms (constant cost)


def _check_time(t, T):
    t = np.asarray(t, dtype=float)
    tol = 1e-12 * max(1.0, T)
    if np.any(t < -tol) or np.any(t > T + tol):
        raise ValidationError("t", f"time outside [0, {T}]")
    return np.clip(t, 0.0, T)


def _check_const(c, rho, T):
    if not c > 0:
        raise ValidationError("c", "cost must be strictly positive")
    if not rho >= 0:
        raise ValidationError("rho", "rho must be nonnegative")
    if not T > 0:
        raise ValidationError("T", "horizon must be positive")


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def p_closed(t, c, rho, T):
    """P(t) = c e^{t-T} / (c + (1 - e^{t-T}) rho)."""
    _check_const(c, rho, T)
    t = _check_time(t, T)
    e = np.exp(t - T)
    return _scalar(c * e / (c + (1.0 - e) * rho))


def delta_closed(t, c, m, rho, T):
    _check_const(c, rho, T)
    t = _check_time(t, T)
    e = np.exp(t - T)
    num = (c + rho) * (1.0 - e) - rho * e * (T - t)
    return _scalar(c * m * num / (c + (1.0 - e) * rho))


def beta_closed(t, c, m, rho, T):
    _check_const(c, rho, T)
    t = _check_time(t, T)
    return _scalar(m * (t - (c + rho * T) * np.expm1(t) / ((c + rho) * math.exp(T) - rho)))


def alpha_closed(t, c, rho, T):
    """alpha(t) = (e^{t-T} - e^{-T}) / (c + rho (1 - e^{-T}))."""
    _check_const(c, rho, T)
    t = _check_time(t, T)
    return _scalar((np.exp(t - T) - math.exp(-T)) / (c - rho * math.expm1(-T)))


def large_rho_asymptotics(c: float, m: float, T: float):
    """Limits of (rho e^T P(0), rho beta(T), delta(0)) as rho grows."""
    if not c > 0 or not T > 0:
        raise ValidationError("c/T", "cost and horizon must be positive")
    a = -math.expm1(-T)
    return (c / a,
            c * m * (T - a) / a,
            c * m * (a - T * math.exp(-T)) / a)


# ---------------------------------------------------------------------------
# numerical engine


def _grid_for(cost: CostPath, grid: TimeGrid | None, T: float | None = None) -> TimeGrid:
    if grid is not None:
        return grid
    if T is None:
        raise ValidationError("grid", "either a grid or a horizon is required")
    return default_grid(T, breaks=cost.breaks)


def solve_riccati_backward(cost, rho: float, grid: TimeGrid, method: str = "reciprocal") -> np.ndarray:
    """P on the grid from P' = P(rho P / c + 1), P(T) = 1.

    ``method="reciprocal"`` (default) integrates u = 1/P; ``method="rk4"``
    integrates P itself and is kept for convergence studies at mild rho/c.
    """
    cost = CostPath.coerce(cost)
    if rho < 0:
        raise ValidationError("rho", "rho must be nonnegative")
    cs, cm, ce = cost.stages(grid)
    h, js, jm, je, _ = grid.cell_data
    if method == "reciprocal":
        u = _kernels.riccati_reciprocal(h, js, jm, je, cs, cm, ce, float(rho))
        P = 1.0 / u
    elif method == "rk4":
        P = _kernels.riccati_direct(h, js, jm, je, cs, cm, ce, float(rho))
    else:
        raise ValidationError("method", f"unknown method {method!r}")
    P[-1] = 1.0
    return P


def solve_delta_backward(cost, P: np.ndarray, m: float, rho: float, grid: TimeGrid) -> np.ndarray:
    """delta on the grid from delta' = delta(rho P/c + 1) - c m, delta(T) = 0."""
    cost = CostPath.coerce(cost)
    P = np.asarray(P, dtype=float)
    if P.shape != (grid.n_steps + 1,):
        raise ValidationError("P", "grid mismatch with P path")
    if m == 0:
        return np.zeros_like(P)
    pieces = [c * m / p for c, p in zip(cost.on_segments(grid), grid.split(P))]
    delta = P * tail(grid, pieces)
    delta[-1] = 0.0
    return delta


def h_path(P, cost, rho: float, grid: TimeGrid) -> np.ndarray:
    """H(t) = int_0^t (rho P / c + 1) ds."""
    cost = CostPath.coerce(cost)
    pieces = [rho * p / c + 1.0 for c, p in zip(cost.on_segments(grid), grid.split(P))]
    return cumulative(grid, pieces)


def _weighted_T(f_over_c_pieces, H, grid: TimeGrid) -> float:
    # e^{-H(T)+T} int_0^T e^{-s} e^{H(s)} f/c ds, with the exponent kept <= 0
    t = grid.knots
    scale = np.exp(H - H[-1] - t + grid.horizon)
    pieces = [f * g for f, g in zip(f_over_c_pieces, grid.split(scale))]
    return float(cumulative(grid, pieces)[-1])


def alpha_T(P, cost, rho: float, grid: TimeGrid) -> float:
    """alpha(T) = e^{-H(T)+T} int_0^T (e^{-s}/c) e^{H} P ds."""
    cost = CostPath.coerce(cost)
    P = np.asarray(P, dtype=float)
    if P.shape != (grid.n_steps + 1,):
        raise ValidationError("P", "grid mismatch with P path")
    H = h_path(P, cost, rho, grid)
    pieces = [p / c for c, p in zip(cost.on_segments(grid), grid.split(P))]
    return _weighted_T(pieces, H, grid)


def beta_T(P, delta, cost, rho: float, grid: TimeGrid) -> float:
    """beta(T) = e^{-H(T)+T} int_0^T (e^{-s}/c) e^{H} delta ds."""
    cost = CostPath.coerce(cost)
    H = h_path(P, cost, rho, grid)
    pieces = [d / c for c, d in zip(cost.on_segments(grid), grid.split(delta))]
    return _weighted_T(pieces, H, grid)


@dataclass(frozen=True)
class CoefficientPaths:
    grid: TimeGrid
    P: np.ndarray
    Lambda: np.ndarray
    delta: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    mu: np.ndarray
    q: np.ndarray
    q_tilde: np.ndarray
    cost: np.ndarray  # right-continuous knot values
    rho: float
    m: float
    s: float

    @property
    def t(self) -> np.ndarray:
        return self.grid.knots

    def columns(self):
        return {"t": self.t, "P": self.P, "Lambda": self.Lambda, "delta": self.delta,
                "H": self.H, "Q": self.Q, "mu": self.mu, "q": self.q, "q_tilde": self.q_tilde}

    def check_invariants(self, tol: float = 1e-10) -> list[str]:
        """Return a list of violated invariants (empty when all hold)."""
        bad = []
        if abs(self.P[-1] - 1.0) > tol:
            bad.append("P(T) != 1")
        if abs(self.delta[-1]) > tol:
            bad.append("delta(T) != 0")
        if abs(self.Q[0]) > tol or abs(self.H[0]) > tol:
            bad.append("Q(0) or H(0) != 0")
        if abs(self.Lambda[-1] - self.s) > tol * max(1.0, abs(self.s)):
            bad.append("Lambda(T) != s")
        if np.any(self.P <= 0) or np.any(self.P > 1.0 + tol):
            bad.append("P outside (0, 1]")
        if np.max(np.abs(self.cost * self.q_tilde - self.mu)) > tol * max(1.0, np.max(np.abs(self.mu))):
            bad.append("c q_tilde != mu")
        return bad


def assemble_paths(P, delta, s: float, cost, m: float, rho: float, grid: TimeGrid) -> CoefficientPaths:
    """Fill Lambda, H, Q and the trading rates from P and delta.

    Q solves Q' = rho (Lambda - P Q)/c, Q(0) = 0, through its integrating
    factor O(t) = rho int_0^t P/c.
    """
    cost = CostPath.coerce(cost)
    P = np.asarray(P, dtype=float)
    delta = np.asarray(delta, dtype=float)
    n = grid.n_steps + 1
    if P.shape != (n,) or delta.shape != (n,):
        raise ValidationError("paths", "grid mismatch")
    segc = cost.on_segments(grid)
    Lam = P * s + delta / rho
    H = cumulative(grid, [rho * p / c + 1.0 for c, p in zip(segc, grid.split(P))])
    O = H - grid.knots
    w = np.exp(O - O[-1])
    A = cumulative(grid, [lam * g / c for c, lam, g in zip(segc, grid.split(Lam), grid.split(w))])
    Q = rho * np.exp(O[-1] - O) * A
    Q[0] = 0.0
    c_knots = cost.at_knots(grid)
    q = rho * (Lam - P * Q) / c_knots
    q_tilde = m - q
    mu = c_knots * q_tilde
    return CoefficientPaths(grid, P, Lam, delta, H, Q, mu, q, q_tilde, c_knots, float(rho), float(m), float(s))


def deterministic_paths(cost, rho: float, m: float, s: float, grid: TimeGrid | None = None,
                        T: float | None = None) -> CoefficientPaths:
    cost = CostPath.coerce(cost)
    grid = _grid_for(cost, grid, T)
    P = solve_riccati_backward(cost, rho, grid)
    delta = solve_delta_backward(cost, P, m, rho, grid)
    return assemble_paths(P, delta, s, cost, m, rho, grid)
