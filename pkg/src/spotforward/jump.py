"""Regime-switching offshore cost: normal level until the first arrival tau of
a Poisson clock with intensity lambda, stressed (absorbing) afterwards.

Both states are integrated in reciprocal form (u = 1/P, w = delta/P), see
:func:`spotforward._kernels.jump_system`. Expectations over the jump time use
closed-form conditional values at every knot plus product-integration
Simpson against the exponential density and the no-jump atom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .costs import CostPath
from .deterministic import solve_delta_backward, solve_riccati_backward
from .model import RegimeSwitch, TimeGrid, ValidationError, default_grid, validate_cost
from .quadrature import cumulative, discounted_tail, exp_weighted_simpson, interpolate, tail

JUMP_PANELS = 512


def _positive(name, c):
    if not (isinstance(c, (int, float, np.floating)) and c > 0):
        raise ValidationError(name, "cost must be strictly positive")
    return float(c)


def stressed_coefficients(c_stress: float, m: float, rho: float, grid: TimeGrid):
    """(P_stress, delta_stress): the deterministic solution at cost c_stress."""
    c = CostPath.constant(_positive("c_stress", c_stress))
    P = solve_riccati_backward(c, rho, grid)
    return P, solve_delta_backward(c, P, m, rho, grid)


def _solve_states(c_normal, c_stress, lam, m, rho, grid):
    h, js, jm, je, _ = grid.cell_data
    Y = _kernels.jump_system(h, js, jm, je, float(rho), float(c_normal), float(c_stress),
                             float(lam), float(m))
    Pb, Pl = 1.0 / Y[:, 0], 1.0 / Y[:, 2]
    db, dl = Y[:, 1] * Pb, Y[:, 3] * Pl
    Pb[-1] = Pl[-1] = 1.0
    db[-1] = dl[-1] = 0.0
    return Pl, dl, Pb, db


def normal_coefficients(c_normal: float, c_stress: float, lam: float, m: float, rho: float,
                        grid: TimeGrid):
    """(P_normal, delta_normal) from the coupled normal-state equations."""
    validate_cost(RegimeSwitch(c_normal, c_stress, lam))
    Pl, dl, _, _ = _solve_states(c_normal, c_stress, lam, m, rho, grid)
    return Pl, dl


@dataclass(frozen=True, eq=False)
class JumpCoefficients:
    grid: TimeGrid
    P_normal: np.ndarray
    P_stress: np.ndarray
    delta_normal: np.ndarray
    delta_stress: np.ndarray
    lam: float
    c_normal: float
    c_stress: float
    rho: float
    m: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def t(self):
        return self.grid.knots

    @cached_property
    def H_normal(self) -> np.ndarray:
        """Realized H along the normal state (no +lambda term)."""
        return cumulative(self.grid, self.rho * self.P_normal / self.c_normal + 1.0)

    @cached_property
    def H_stress(self) -> np.ndarray:
        return cumulative(self.grid, self.rho * self.P_stress / self.c_stress + 1.0)

    def _conditional(self, which: str):
        """Conditional terminal values at every knot u and with no jump.

        For a jump at u, alpha or beta at T equals
        e^T [exp(-(Hs(T) - Hs(u)) - Hn(u)) N(u) + S(u)] with
        N(u) = int_0^u e^{-s + Hn} f_n / c_n and
        S(u) = int_u^T e^{-s + Hs(s) - Hs(T)} f_s / c_s.
        """
        if which in self._cache:
            return self._cache[which]
        t, T = self.t, self.grid.horizon
        fn, fs = (self.P_normal, self.P_stress) if which == "alpha" else (self.delta_normal, self.delta_stress)
        Hn, Hs = self.H_normal, self.H_stress
        N = cumulative(self.grid, np.exp(-t + Hn) * fn / self.c_normal)
        S = tail(self.grid, np.exp(-t + Hs - Hs[-1]) * fs / self.c_stress)
        cond = math.exp(T) * (np.exp(-(Hs[-1] - Hs) - Hn) * N + S)
        none = math.exp(T - Hn[-1]) * N[-1]
        self._cache[which] = (cond, none, N, S)
        return self._cache[which]

    def conditional_values(self, which: str = "beta"):
        """(values at every knot as jump time, value with no jump)."""
        cond, none, _, _ = self._conditional(which)
        return cond, none

    def conditional_at(self, u, which: str = "beta") -> np.ndarray:
        """Conditional terminal value for arbitrary jump times in [0, T]."""
        _, _, N, S = self._conditional(which)
        T = self.grid.horizon
        u = np.atleast_1d(np.asarray(u, dtype=float))
        Hn = interpolate(self.grid, self.H_normal, u)
        Hs = interpolate(self.grid, self.H_stress, u)
        Nu = interpolate(self.grid, N, u)
        Su = interpolate(self.grid, S, u)
        return math.exp(T) * (np.exp(-(self.H_stress[-1] - Hs) - Hn) * Nu + Su)

    def expectation(self, which: str = "beta", panels: int = JUMP_PANELS) -> float:
        """E[alpha(T)] or E[beta(T)] over tau ~ Exp(lambda)."""
        cond, none, _, _ = self._conditional(which)
        T = self.grid.horizon
        if self.lam == 0.0:
            return float(none)
        idx = _panel_nodes(self.grid, panels)
        return exp_weighted_simpson(self.t[idx], cond[idx], self.lam) + math.exp(-self.lam * T) * none


def _panel_nodes(grid: TimeGrid, panels: int) -> np.ndarray:
    # every k-th knot when the grid subdivides evenly, all knots otherwise
    n = grid.n_steps
    if len(grid.segments) == 1 and n % (2 * panels) == 0:
        return np.arange(0, n + 1, n // (2 * panels))
    return np.arange(n + 1)


def solve_jump(cost: RegimeSwitch, m: float, rho: float, grid: TimeGrid | None = None,
               T: float | None = None) -> JumpCoefficients:
    validate_cost(cost)
    if not rho > 0:
        raise ValidationError("rho", "rho must be positive")
    if grid is None:
        if T is None:
            raise ValidationError("grid", "either a grid or a horizon is required")
        grid = default_grid(T)
    Pl, dl, Pb, db = _solve_states(cost.c_normal, cost.c_stress, cost.lam, m, rho, grid)
    return JumpCoefficients(grid, Pl, Pb, dl, db, float(cost.lam), float(cost.c_normal),
                            float(cost.c_stress), float(rho), float(m))


def normal_delta_voc(coeffs: JumpCoefficients) -> np.ndarray:
    """delta_normal by variation of constants, an independent route to the ODE.

    delta_n(t) = int_t^T exp(Hl(t) - Hl(s)) (lambda delta_s + c_n m) ds with
    Hl = int (rho P_n / c_n + 1 + lambda).
    """
    g = coeffs.grid
    Hl = coeffs.H_normal + coeffs.lam * g.knots
    src = coeffs.lam * coeffs.delta_stress + coeffs.c_normal * coeffs.m
    return discounted_tail(g, Hl, src)


# ---------------------------------------------------------------------------
# realized paths given the jump time


@dataclass(frozen=True)
class ConditionalPath:
    """Realized coefficients when the stress arrives at ``jump_time``.

    ``jump_time`` is None when no jump occurs before T. When it is a jump
    time, it is a grid breakpoint; knots at or after it carry stressed
    values.
    """

    jump_time: float | None
    grid: TimeGrid
    realized_cost: np.ndarray
    realized_P: np.ndarray
    realized_delta: np.ndarray
    realized_H: np.ndarray
    rho: float
    split: int  # first knot in the stressed state (n+1 when no jump)
    _normal_end: tuple = field(repr=False, default=())  # left limits (c, P, delta) at the jump


def conditional_path(jump_time, coeffs: JumpCoefficients) -> ConditionalPath:
    """Splice normal and stressed coefficients at ``jump_time``.

    A jump time that is not a breakpoint of ``coeffs.grid`` triggers a
    re-solve on a grid carrying it as a breakpoint, so every cell lies in a
    single state.
    """
    T = coeffs.grid.horizon
    if jump_time is not None:
        u = float(jump_time)
        if not (0.0 < u <= T):
            raise ValidationError("jump_time", f"jump time must lie in (0, {T}]")
        if u >= T:
            jump_time = None
        elif not any(abs(u - b) <= 1e-14 * T for b in coeffs.grid.breaks):
            g = coeffs.grid
            grid = TimeGrid(T, g.n_steps, g.kind, power=g.power if g.kind == "graded" else 3.0,
                            breaks=(*g.breaks, u))
            coeffs = solve_jump(RegimeSwitch(coeffs.c_normal, coeffs.c_stress, coeffs.lam),
                                coeffs.m, coeffs.rho, grid)
    g = coeffs.grid
    n1 = g.n_steps + 1
    if jump_time is None:
        k = n1
    else:
        k = int(np.argmin(np.abs(g.knots - float(jump_time))))
    before = np.arange(n1) < k
    c = np.where(before, coeffs.c_normal, coeffs.c_stress)
    P = np.where(before, coeffs.P_normal, coeffs.P_stress)
    d = np.where(before, coeffs.delta_normal, coeffs.delta_stress)
    Hn, Hs = coeffs.H_normal, coeffs.H_stress
    if k < n1:
        H = np.where(before, Hn, Hn[k] + Hs - Hs[k])
        end = (coeffs.c_normal, coeffs.P_normal[k], coeffs.delta_normal[k])
    else:
        H = Hn.copy()
        end = ()
    return ConditionalPath(None if k == n1 else float(jump_time), g, c, P, d, H, coeffs.rho, k, end)


def _segment_pieces(path: ConditionalPath, values: np.ndarray, left_value: float):
    pieces = []
    for s, v in zip(path.grid.segments, path.grid.split(values)):
        if s.i1 == path.split:
            v = v.copy()
            v[-1] = left_value
        pieces.append(v)
    return pieces


def conditional_beta(path: ConditionalPath, which: str = "beta") -> float:
    """beta(T) (or alpha(T)) by direct quadrature along the realized path."""
    g = path.grid
    t, T = g.knots, g.horizon
    f = path.realized_delta if which == "beta" else path.realized_P
    integrand = np.exp(-t + path.realized_H - path.realized_H[-1] + T) * f / path.realized_cost
    if path.jump_time is None:
        return float(cumulative(g, integrand)[-1])
    c_n, P_n, d_n = path._normal_end
    k = path.split
    left = math.exp(-t[k] + path.realized_H[k] - path.realized_H[-1] + T) * \
        (d_n if which == "beta" else P_n) / c_n
    return float(cumulative(g, _segment_pieces(path, integrand, left))[-1])


def conditional_alpha(path: ConditionalPath) -> float:
    return conditional_beta(path, "alpha")


def expected_beta(coeffs: JumpCoefficients, panels: int = JUMP_PANELS) -> float:
    """int_0^T lambda e^{-lambda u} beta(T|u) du + e^{-lambda T} beta(T|no jump)."""
    return coeffs.expectation("beta", panels)


def expected_alpha(coeffs: JumpCoefficients, panels: int = JUMP_PANELS) -> float:
    return coeffs.expectation("alpha", panels)
