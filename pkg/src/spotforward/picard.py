"""Small risk-aversion correction with deterministic benchmark volatility.

With sigma_bar a function of time, every martingale term vanishes and the
perturbation around the phi = 0 equilibrium (Q_bar) is the linear two-point
problem

    mu_hat' = mu_hat - phi sigma_bar^2 (Q_hat + Q_bar),  mu_hat(T) = rho Q_hat(T),
    Q_hat'  = -mu_hat / c,                              Q_hat(0) = 0,
    S_hat'  = mu_hat,                                   S_hat(T) = 0.

On the grid, mu_hat uses the trapezoid recurrence and Q_hat, S_hat the
cumulative trapezoid rule. One Picard step freezes Q_hat in the terminal
coupling and in the source, then re-solves both equations once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .costs import CostPath
from .deterministic import CoefficientPaths, deterministic_paths
from .model import TimeGrid, ValidationError
from .quadrature import cumulative


def _trapz_cum(dt, f):
    out = np.zeros(len(f))
    out[1:] = np.cumsum(0.5 * dt * (f[1:] + f[:-1]))
    return out


def _sup(x):
    return float(np.max(np.abs(x)))


@dataclass(frozen=True)
class PerturbationState:
    grid: TimeGrid
    hat_mu: np.ndarray
    hat_Q: np.ndarray
    hat_S: np.ndarray
    sigma_bar: np.ndarray
    phi: float

    @classmethod
    def zero(cls, grid: TimeGrid, sigma_bar, phi: float) -> "PerturbationState":
        z = np.zeros(grid.n_steps + 1)
        return cls(grid, z, z, z, _sigma_on(grid, sigma_bar), float(phi))


@dataclass
class ContractionReport:
    eta: float
    iterate_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    phi_thresholds: tuple | None = None
    converged: bool = False
    iterations: int = 0
    gain_estimate: float = float("nan")  # empirical Lipschitz constant of Q_hat(T)

    @property
    def eventual_ratio(self) -> float:
        tail = [r for r in self.ratios[-5:] if math.isfinite(r)]
        return float(np.median(tail)) if tail else float("nan")


def _sigma_on(grid: TimeGrid, sigma_bar) -> np.ndarray:
    if callable(sigma_bar):
        return np.asarray(sigma_bar(grid.knots), dtype=float) * np.ones(grid.n_steps + 1)
    s = np.asarray(sigma_bar, dtype=float)
    if s.ndim == 0:
        return np.full(grid.n_steps + 1, float(s))
    if s.shape != (grid.n_steps + 1,):
        raise ValidationError("sigma_bar", "grid mismatch")
    return s


def picard_step(prev: PerturbationState, benchmark: CoefficientPaths, rho: float) -> PerturbationState:
    """One successive-approximation sweep of the perturbation system."""
    g = benchmark.grid
    g.check_same(prev.grid, "perturbation state")
    t = g.knots
    dt = np.diff(t)
    phi, s2 = prev.phi, prev.sigma_bar ** 2
    source = phi * s2 * (prev.hat_Q + benchmark.Q)
    mu = _kernels.trapezoid_backward(dt, source, rho * prev.hat_Q[-1])
    Q = -_trapz_cum(dt, mu / benchmark.cost)
    S = -(_trapz_cum(dt, mu)[-1] - _trapz_cum(dt, mu))
    return PerturbationState(g, mu, Q, S, prev.sigma_bar, phi)


def run_picard(benchmark: CoefficientPaths, sigma_bar, phi: float, rho: float | None = None,
               max_iter: int = 200, tol: float = 1e-12, R: float = 1.0):
    """Iterate :func:`picard_step` from zero; never raises on divergence."""
    rho = benchmark.rho if rho is None else rho
    state = PerturbationState.zero(benchmark.grid, sigma_bar, phi)
    report = ContractionReport(eta=_eta(benchmark, rho))
    try:
        report.phi_thresholds = phi_thresholds(benchmark, R, state.sigma_bar, rho)
    except ValidationError:
        report.phi_thresholds = None
    prev_norm, last_dq, gain = None, None, float("nan")
    for k in range(1, max_iter + 1):
        new = picard_step(state, benchmark, rho)
        diff = max(_sup(new.hat_mu - state.hat_mu), _sup(new.hat_Q - state.hat_Q))
        dq = new.hat_Q[-1] - state.hat_Q[-1]
        if last_dq:
            gain = abs(dq / last_dq)
        report.iterate_norms.append(diff)
        if prev_norm is not None:
            report.ratios.append(diff / prev_norm if prev_norm > 0 else 0.0)
        state, prev_norm, last_dq = new, diff, dq
        report.iterations = k
        if not math.isfinite(diff):
            break
        if diff <= tol:
            report.converged = True
            break
    report.gain_estimate = gain
    return state, report


def dense_solve(benchmark: CoefficientPaths, sigma_bar, phi: float, rho: float | None = None) -> PerturbationState:
    """The discrete fixed point of :func:`picard_step` by one dense linear solve."""
    rho = benchmark.rho if rho is None else rho
    g = benchmark.grid
    n = g.n_steps
    dt = np.diff(g.knots)
    sig = _sigma_on(g, sigma_bar)
    a = phi * sig ** 2
    c = benchmark.cost
    N = n + 1
    A = np.zeros((2 * N, 2 * N))
    b = np.zeros(2 * N)
    mu, Q = 0, N  # column offsets
    # mu_i(1 + h/2) - mu_{i+1}(1 - h/2) - h/2 (a_i Q_i + a_{i+1} Q_{i+1}) = h/2 (a_i Qb_i + a_{i+1} Qb_{i+1})
    for i in range(n):
        h = dt[i]
        r = i
        A[r, mu + i] = 1 + h / 2
        A[r, mu + i + 1] = -(1 - h / 2)
        A[r, Q + i] = -h / 2 * a[i]
        A[r, Q + i + 1] = -h / 2 * a[i + 1]
        b[r] = h / 2 * (a[i] * benchmark.Q[i] + a[i + 1] * benchmark.Q[i + 1])
    A[n, mu + n] = 1.0
    A[n, Q + n] = -rho
    A[N, Q] = 1.0
    for i in range(n):
        h = dt[i]
        r = N + 1 + i
        A[r, Q + i + 1] = 1.0
        A[r, Q + i] = -1.0
        A[r, mu + i] = h / 2 / c[i]
        A[r, mu + i + 1] = h / 2 / c[i + 1]
    x = np.linalg.solve(A, b)
    m_hat, q_hat = x[:N], x[N:]
    S = -(_trapz_cum(dt, m_hat)[-1] - _trapz_cum(dt, m_hat))
    return PerturbationState(g, m_hat, q_hat, S, sig, float(phi))


# ---------------------------------------------------------------------------
# explicit constants


def _norms(benchmark: CoefficientPaths, rho: float):
    c = benchmark.cost
    T = benchmark.grid.horizon
    inv_c = float(np.max(1.0 / c))
    return T, inv_c, rho * inv_c, float(np.max(np.abs(c * benchmark.m)))


def _eta(benchmark: CoefficientPaths, rho: float) -> float:
    T, inv_c, _, _ = _norms(benchmark, rho)
    return 1.0 - rho ** 2 * T ** 2 * inv_c ** 2


def _sigma_energy(grid: TimeGrid, sig) -> float:
    # sup_t int_t^T sigma^2 equals int_0^T sigma^2 for deterministic sigma
    return float(_trapz_cum(np.diff(grid.knots), np.asarray(sig) ** 2)[-1])


@dataclass(frozen=True)
class ContractionConstants:
    eta: float
    h_Q0: float
    R_bar_sq: float
    R_tilde: float
    C_Lambda: float
    h_Q: float
    C_bar: float

    def kappa(self, phi: float, rho: float) -> float:
        gq = 4 * phi * self.R_tilde / rho
        B = rho * math.sqrt(self.C_bar) * gq
        C = 2 * phi * self.R_tilde * (self.h_Q + 4 * math.sqrt(self.C_bar) * phi / rho * self.R_tilde ** 2)
        return B + 2 * C


def contraction_constants(benchmark: CoefficientPaths, R: float, sigma_bar, rho: float | None = None) -> ContractionConstants:
    rho = benchmark.rho if rho is None else rho
    T, inv_c, rho_c, cm = _norms(benchmark, rho)
    eta = 1.0 - rho_c ** 2 * T ** 2
    E = _sigma_energy(benchmark.grid, _sigma_on(benchmark.grid, sigma_bar))
    h_Q0 = rho_c * _sup(benchmark.Lambda) * T
    C_L = 2 * abs(benchmark.s) + 4 * cm * T / rho
    h_Q = rho_c * C_L * T
    C_t = 4 * C_L ** 2 * rho_c ** 2 * T ** 2
    C_bar = 2 * rho_c ** 2 * T ** 2 * (C_t + rho_c ** 2 * T ** 2 * C_L ** 2)
    return ContractionConstants(eta, h_Q0, E + R ** 2, R + math.sqrt(E), C_L, h_Q, C_bar)


def phi_thresholds(benchmark: CoefficientPaths, R: float, sigma_bar, rho: float | None = None):
    """(phi_1, phi_2): self-mapping and contraction thresholds for ball radius R."""
    rho = benchmark.rho if rho is None else rho
    k = contraction_constants(benchmark, R, sigma_bar, rho)
    if k.eta <= 0:
        raise ValidationError("rho", "structural condition violated (rho^2 T^2 |1/c|^2 >= 1)")
    T = benchmark.grid.horizon
    phi1 = k.eta * R / (16 * T * k.h_Q0 * k.R_bar_sq) if k.h_Q0 > 0 else math.inf

    def excess(p):
        return 16 * T ** 2 * k.kappa(p, rho) ** 2 - 1.0

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2
    phi2 = brentq(excess, 0.0, hi, xtol=1e-300, rtol=1e-14)
    return phi1, phi2


def mu_bound(benchmark: CoefficientPaths, R: float, sigma_bar, phi: float, rho: float | None = None) -> float:
    """(8/eta) phi h_Q0 R_bar^2, the a-priori bound on sup |mu_hat|."""
    k = contraction_constants(benchmark, R, sigma_bar, rho)
    return 8.0 / k.eta * phi * k.h_Q0 * k.R_bar_sq


# ---------------------------------------------------------------------------
# Riccati bounds with risk aversion


@dataclass
class BoundReport:
    C_P: float
    C_Lambda: float
    h_Q: float
    P: np.ndarray
    Lambda: np.ndarray
    Q: np.ndarray
    margins: dict
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def risk_averse_paths(cost, rho: float, m: float, s: float, sigma_bar, phi: float, grid: TimeGrid):
    """P, Lambda and Q with risk aversion phi and deterministic volatility."""
    cost = CostPath.coerce(cost)
    cs, cm, ce = cost.stages(grid)
    h, js, jm, je, tm = grid.cell_data
    sig = sigma_bar if callable(sigma_bar) else None
    if sig is None:
        s0 = float(np.asarray(sigma_bar))
        ss = sm = se = np.full(grid.n_steps, s0 ** 2)
    else:
        t0, _, t1 = grid.stage_times()
        ss, sm, se = (np.asarray(sig(x), dtype=float) ** 2 * np.ones_like(x) for x in (t0, tm, t1))
    U, V = _kernels.riccati_phi(h, js, jm, je, cs, cm, ce, ss, sm, se, float(rho), float(phi), float(m), float(s))
    P = 1.0 / U
    Lam = V * P
    # Q' = rho (Lambda - P Q)/c, Q(0) = 0, via the integrating factor O = rho int P/c
    segc = cost.on_segments(grid)
    O = cumulative(grid, [rho * p / c for c, p in zip(segc, grid.split(P))])
    w = np.exp(O - O[-1])
    A = cumulative(grid, [rho * lam * g / c for c, lam, g in zip(segc, grid.split(Lam), grid.split(w))])
    Q = np.exp(O[-1] - O) * A
    return P, Lam, Q


def lemma_bounds(cost, rho: float, m: float, s: float, sigma_bar, phi: float, grid: TimeGrid,
                 rtol: float = 1e-9) -> BoundReport:
    """Solve the risk-averse P, Lambda, Q and check them against C_P, C_Lambda, h_Q."""
    cost = CostPath.coerce(cost)
    if phi < 0:
        raise ValidationError("phi", "phi must be nonnegative")
    T = grid.horizon
    P, Lam, Q = risk_averse_paths(cost, rho, m, s, sigma_bar, phi, grid)
    sig = _sigma_on(grid, sigma_bar)
    C_P = 1.0 + phi / rho * _sigma_energy(grid, sig)
    c = cost.at_knots(grid)
    C_L = 2 * abs(s) + 4 * float(np.max(np.abs(c * m))) * T / rho
    h_Q = float(np.max(rho / c)) * C_L * T
    violations = []
    margins = {"P_min": float(P.min()), "C_P - max P": C_P - float(P.max()),
               "C_Lambda - max|Lambda|": C_L - _sup(Lam), "h_Q - max|Q|": h_Q - _sup(Q)}
    slack = rtol * max(1.0, C_P)
    if not P.min() > 0:
        violations.append(("P > 0", float(grid.knots[np.argmin(P)])))
    if P.max() > C_P + slack:
        violations.append(("P <= C_P", float(grid.knots[np.argmax(P)])))
    if _sup(Lam) > C_L * (1 + rtol):
        violations.append(("|Lambda| <= C_Lambda", float(grid.knots[np.argmax(np.abs(Lam))])))
    if _sup(Q) > h_Q * (1 + rtol):
        violations.append(("|Q| <= h_Q", float(grid.knots[np.argmax(np.abs(Q))])))
    return BoundReport(C_P, C_L, h_Q, P, Lam, Q, margins, violations)


def benchmark_for(cost, rho: float, m: float, s: float, grid: TimeGrid) -> CoefficientPaths:
    return deterministic_paths(cost, rho, m, s, grid)
