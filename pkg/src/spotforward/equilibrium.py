"""Venue pricing, market clearing, spot parity, the forward wedge and the
inverse map from an observed wedge to (lambda, stressed cost)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import bisect, brentq

from .costs import CostPath
from .deterministic import (alpha_T, alpha_closed, beta_T, beta_closed, delta_closed, p_closed,
                            solve_delta_backward, solve_riccati_backward)
from .jump import expected_alpha, expected_beta, solve_jump
from .model import (AffineDemand, Constant, ConstantDemand, ModelParams, RegimeSwitch, SupplySpec,
                    TimeGrid, ValidationError, default_grid, demand_at, validate)

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
ROUTE_TOL = 1e-8
LAMBDA_MAX = 50.0
STRESS_MULT_MAX = 100.0


class ConsistencyError(RuntimeError):
    """Two independent computations of the same quantity disagree."""


class CalibrationError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


# ---------------------------------------------------------------------------
# single venue


@dataclass(frozen=True)
class VenueCoefficients:
    """Time-0 quantities that determine a venue's prices (normal state at 0)."""

    P0: float
    delta0: float
    expected_beta_T: float
    expected_alpha_T: float
    horizon_T: float
    rho: float


def venue_coefficients(params: ModelParams, cost, supply: SupplySpec,
                       grid: TimeGrid | None = None) -> VenueCoefficients:
    T, rho, m = params.horizon_T, params.rho, supply.m
    if isinstance(cost, Constant):
        c = cost.c
        return VenueCoefficients(p_closed(0.0, c, rho, T), delta_closed(0.0, c, m, rho, T),
                                 beta_closed(T, c, m, rho, T), alpha_closed(T, c, rho, T), T, rho)
    if isinstance(cost, RegimeSwitch):
        co = solve_jump(cost, m, rho, grid or default_grid(T))
        return VenueCoefficients(float(co.P_normal[0]), float(co.delta_normal[0]),
                                 expected_beta(co), expected_alpha(co), T, rho)
    path = CostPath.coerce(cost)
    grid = grid or default_grid(T, breaks=path.breaks)
    P = solve_riccati_backward(path, rho, grid)
    d = solve_delta_backward(path, P, m, rho, grid)
    return VenueCoefficients(float(P[0]), float(d[0]), beta_T(P, d, path, rho, grid),
                             alpha_T(P, path, rho, grid), T, rho)


@dataclass(frozen=True)
class VenueQuote:
    forward: float
    spot0: float
    premium: float
    P0: float
    delta0: float
    expected_beta_T: float
    quantity: float

    def premium_identity_error(self, rho: float) -> float:
        return abs(self.premium - (rho * self.P0 * self.quantity + self.delta0))


def quote_from(vc: VenueCoefficients, expected_terminal: float, s: float) -> VenueQuote:
    """Forward from the clearing condition E[Q(T)] = s - (F - E[G]) / rho,
    spot from the time-0 spot representation."""
    T, rho = vc.horizon_T, vc.rho
    EQ = rho * vc.expected_alpha_T * s + vc.expected_beta_T
    F = expected_terminal + rho * (s - EQ)
    S0 = (expected_terminal - math.expm1(-T) * rho * (math.exp(T) * vc.P0 * s - vc.expected_beta_T)
          - rho * math.exp(-T) * vc.expected_beta_T - vc.delta0)
    return VenueQuote(F, S0, F - S0, vc.P0, vc.delta0, vc.expected_beta_T, s)


def supply_curve(params: ModelParams, cost, supply: SupplySpec, F, grid=None,
                 coeffs: VenueCoefficients | None = None):
    """Dealer supply as a function of the forward price; increasing and affine."""
    vc = coeffs or venue_coefficients(params, cost, supply, grid)
    T, rho = params.horizon_T, params.rho
    return (math.exp(-T) * vc.expected_beta_T / vc.P0
            + math.exp(-T) / (rho * vc.P0) * (np.asarray(F, dtype=float) - params.expected_terminal))


def _supply_line(params, vc):
    k = math.exp(-params.horizon_T) / (params.rho * vc.P0)
    return k, math.exp(-params.horizon_T) * vc.expected_beta_T / vc.P0


def clear_market(params: ModelParams, cost, supply: SupplySpec, grid=None):
    """(F*, s*) where demand meets supply."""
    validate(params, cost, supply)
    vc = venue_coefficients(params, cost, supply, grid)
    d, G = params.demand, params.expected_terminal
    slope, intercept = _supply_line(params, vc)
    if isinstance(d, ConstantDemand):
        s = d.d_bar
        return G + (s - intercept) / slope, s
    if d.k + slope <= 0:  # k > 0 is validated, so this is only a guard
        raise ValidationError("demand.k", "supply and demand slopes are degenerate")
    F = G + (d.d0 - d.k * G - intercept) / (d.k + slope)

    def phi(x):
        return intercept + slope * (x - G) - demand_at(d, x)

    width = 1.0 + abs(F - G)
    lo, hi = G - width, G + width
    while phi(lo) > 0:
        lo -= 2 * (hi - lo)
    while phi(hi) < 0:
        hi += 2 * (hi - lo)
    Fb = bisect(phi, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=400)
    if abs(Fb - F) > 1e-10 * max(1.0, abs(F)):
        raise ConsistencyError(f"clearing price: closed form {F!r} vs bisection {Fb!r}")
    return F, demand_at(d, F)


def venue_quote(params: ModelParams, cost, supply: SupplySpec, s: float | None = None,
                grid=None) -> VenueQuote:
    """Prices for forward quantity ``s`` (the clearing quantity when omitted)."""
    validate(params, cost, supply)
    if s is None:
        _, s = clear_market(params, cost, supply, grid)
    return quote_from(venue_coefficients(params, cost, supply, grid), params.expected_terminal, s)


# ---------------------------------------------------------------------------
# two venues


def _check_pair(cost_Y, cost_H):
    if not isinstance(cost_Y, Constant):
        raise ValidationError("cost_Y", "onshore cost must be constant")
    if not isinstance(cost_H, (Constant, RegimeSwitch)):
        raise ValidationError("cost_H", "offshore cost must be constant or regime-switching")


def parity_from_coefficients(vy: VenueCoefficients, vh: VenueCoefficients, d_bar: float) -> float:
    T, rho = vy.horizon_T, vy.rho
    return (math.expm1(T) * rho * (vy.P0 - vh.P0) * d_bar
            - rho * (vy.expected_beta_T - vh.expected_beta_T) - (vy.delta0 - vh.delta0))


def parity_residual(params, cost_Y, cost_H, supply, d_bar: float, grid=None) -> float:
    """S^Y(0) - S^H(0) at common demand ``d_bar``, by two routes."""
    _check_pair(cost_Y, cost_H)
    vy = venue_coefficients(params, cost_Y, supply, grid)
    vh = venue_coefficients(params, cost_H, supply, grid)
    G = params.expected_terminal
    by_quotes = quote_from(vy, G, d_bar).spot0 - quote_from(vh, G, d_bar).spot0
    direct = parity_from_coefficients(vy, vh, d_bar)
    scale = max(1.0, abs(G), abs(quote_from(vy, G, d_bar).spot0))
    if abs(by_quotes - direct) > ROUTE_TOL * scale:
        raise ConsistencyError(f"parity routes disagree: {by_quotes!r} vs {direct!r}")
    return direct


def forward_wedge(params, cost_Y, cost_H, supply, d_bar: float, grid=None) -> float:
    """F^Y - F^H at common demand ``d_bar``."""
    _check_pair(cost_Y, cost_H)
    G = params.expected_terminal
    qy = quote_from(venue_coefficients(params, cost_Y, supply, grid), G, d_bar)
    qh = quote_from(venue_coefficients(params, cost_H, supply, grid), G, d_bar)
    return qy.forward - qh.forward


def wedge_under_parity(vy: VenueCoefficients, vh: VenueCoefficients, d_bar: float) -> float:
    return vy.rho * (vy.P0 - vh.P0) * d_bar + (vy.delta0 - vh.delta0)


def parity_demand(params, c_onshore: float, c_normal: float, supply) -> float:
    """The common demand at which two constant-cost venues satisfy parity."""
    if c_onshore == c_normal:
        raise ValidationError("cost", "parity demand is undefined for identical venues")
    vy = venue_coefficients(params, Constant(c_onshore), supply)
    vh = venue_coefficients(params, Constant(c_normal), supply)
    T, rho = params.horizon_T, params.rho
    return ((rho * (vy.expected_beta_T - vh.expected_beta_T) + (vy.delta0 - vh.delta0))
            / (math.expm1(T) * rho * (vy.P0 - vh.P0)))


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationSetup:
    """Everything held fixed while (lambda, c_stress) are implied.

    ``d_bar=None`` picks the demand that puts the two venues in parity at
    lambda = 0.
    """

    m: float
    c_onshore: float
    c_normal: float
    rho: float
    horizon_T: float
    d_bar: float | None = None
    expected_terminal: float = 0.0
    n_steps: int = 4096
    grid_kind: str = "graded"

    def __post_init__(self):
        for name in ("c_onshore", "c_normal", "rho", "horizon_T"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(name, "must be a positive finite number")
        if not self.c_normal < self.c_onshore:
            raise ValidationError("cost.c_normal", "normal offshore cost must be below the onshore cost")
        if self.d_bar is None:
            object.__setattr__(self, "d_bar", parity_demand(self.params, self.c_onshore,
                                                            self.c_normal, self.supply))

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.horizon_T, self.rho, 0.0, self.expected_terminal,
                           ConstantDemand(self.d_bar if self.d_bar is not None else 0.0))

    @property
    def supply(self) -> SupplySpec:
        return SupplySpec(self.m)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon_T, self.n_steps, self.grid_kind)


@dataclass
class CalibrationResult:
    target_wedge: float
    lambda_implied: float
    c_stress_implied: float | None  # None: irrelevant at lambda = 0
    parity_residual: float
    wedge_residual: float
    stress_probability: float
    iterations: int
    converged: bool
    multiple_roots: bool = False
    message: str = ""
    trace: list = field(default_factory=list, repr=False)


class _Pair:
    """Cached evaluations of (parity, wedge) for the offshore venue at (lambda, c_stress)."""

    def __init__(self, setup: CalibrationSetup):
        self.setup = setup
        self.grid = setup.grid
        p, sp = setup.params, setup.supply
        self.vy = venue_coefficients(p, Constant(setup.c_onshore), sp)
        vn = venue_coefficients(p, Constant(setup.c_normal), sp)
        self.w0 = self.wedge_of(vn)
        self.parity0 = parity_from_coefficients(self.vy, vn, setup.d_bar)
        self._cache: dict = {}
        self.evaluations = 0
        self._last = None  # last inner root, used as continuation guess

    def wedge_of(self, vh):
        G, d = self.setup.expected_terminal, self.setup.d_bar
        return quote_from(self.vy, G, d).forward - quote_from(vh, G, d).forward

    def eval(self, lam: float, cb: float):
        key = (float(lam), float(cb))
        hit = self._cache.get(key)
        if hit is None:
            s = self.setup
            vh = venue_coefficients(s.params, RegimeSwitch(s.c_normal, cb, lam), s.supply, self.grid)
            self.evaluations += 1
            hit = (parity_from_coefficients(self.vy, vh, s.d_bar), self.wedge_of(vh))
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def parity(self, lam, cb):
        return self.eval(lam, cb)[0]

    def wedge(self, lam, cb):
        return self.eval(lam, cb)[1]

    # inner solve: stressed cost restoring parity at a given intensity
    def c_stress_for(self, lam: float, guess: float | None = None) -> float:
        cy = self.setup.c_onshore
        lo, hi = cy * (1.0 + 1e-12), STRESS_MULT_MAX * cy
        f = lambda c: self.parity(lam, c)  # noqa: E731
        bracket = None
        if guess is not None and lo < guess < hi:
            # continuation: widen geometrically around the previous root
            g0, step = f(guess), 1e-3
            while bracket is None and step < 1.0:
                a, b = max(lo, guess * (1 - step)), min(hi, guess * (1 + step))
                fa, fb = f(a), f(b)
                if fa * g0 <= 0:
                    bracket = (a, guess)
                elif fb * g0 <= 0:
                    bracket = (guess, b)
                step *= 4
        if bracket is None:
            xs = np.concatenate([[lo], cy * np.geomspace(1.0 + 1e-6, STRESS_MULT_MAX, 40)])
            prev = f(xs[0])
            for a, b in zip(xs, xs[1:]):
                fb = f(b)
                if prev * fb <= 0:
                    bracket = (a, b)
                    break
                prev = fb
            else:
                raise CalibrationError("no-parity-solution",
                                       f"no stressed cost in ({cy}, {hi}] restores parity at lambda={lam}")
        if f(bracket[0]) == 0.0:
            return bracket[0]
        return brentq(f, *bracket, xtol=1e-15, rtol=1e-15, maxiter=200)

    def outer(self, lam: float, target: float) -> float:
        if lam == 0.0:
            return self.w0 - target
        cb = self.c_stress_for(lam, self._last)
        self._last = cb
        return self.wedge(lam, cb) - target


def _scan_lambdas():
    return np.concatenate([[0.0], np.geomspace(1e-3, LAMBDA_MAX, 64)])


def _scan(pair: _Pair, lams):
    """c_stress(lambda) and wedge(lambda) along the parity curve (NaN where it does not exist)."""
    out, guess = [], None
    for lam in lams:
        if lam == 0.0:
            out.append((0.0, float("nan"), pair.w0))
            continue
        try:
            cb = pair.c_stress_for(lam, guess)
            out.append((lam, cb, pair.wedge(lam, cb)))
            guess = cb
        except CalibrationError:
            out.append((lam, float("nan"), float("nan")))
            guess = None
    return out


@lru_cache(maxsize=8)
def _context(setup: CalibrationSetup):
    pair = _Pair(setup)
    return pair, _scan(pair, _scan_lambdas())


def _newton_polish(pair: _Pair, target, lam, cb, iters=8):
    def res(x):
        p, w = pair.eval(x[0], x[1])
        return np.array([p, w - target])

    x = np.array([lam, cb])
    r = res(x)
    n = 0
    for n in range(1, iters + 1):
        if np.max(np.abs(r)) < 1e-14:
            break
        J = np.empty((2, 2))
        for j in range(2):
            hstep = 1e-7 * max(abs(x[j]), 1e-3)
            xp = x.copy()
            xp[j] += hstep
            J[:, j] = (res(xp) - r) / hstep
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-4:
            xn = x + t * step
            if xn[0] > 0 and xn[1] > pair.setup.c_onshore:
                rn = res(xn)
                if np.max(np.abs(rn)) < np.max(np.abs(r)):
                    x, r = xn, rn
                    break
            t /= 2
        else:
            break
    return x[0], x[1], r, n


def calibrate(target_wedge: float, setup: CalibrationSetup, *, tol: float = RESIDUAL_TOL,
              _pair: _Pair | None = None, _table=None) -> CalibrationResult:
    """Implied (lambda, c_stress) matching ``target_wedge`` under spot parity.

    The parity curve is traced as c_stress(lambda); the wedge along it is
    scanned over [0, LAMBDA_MAX] and the first sign change of
    wedge - target is refined by Brent's method, then polished by a damped
    Newton step on both equations. Raises :class:`CalibrationError`.
    """
    if _pair is None:
        _pair, _table = _context(setup)
    pair = _pair
    T = setup.horizon_T
    trace = []
    if abs(pair.parity0) <= tol and abs(pair.w0 - target_wedge) <= tol:
        return CalibrationResult(target_wedge, 0.0, None, pair.parity0, pair.w0 - target_wedge,
                                 0.0, 0, True, message="irrelevant at lambda=0")
    if abs(pair.parity0) > tol:
        log.warning("venues are not in parity at lambda=0 (residual %.3e)", pair.parity0)
    table = _table if _table is not None else _scan(pair, _scan_lambdas())
    g = [(lam, w - target_wedge) for lam, _, w in table]
    brackets = []
    for (l0, g0), (l1, g1) in zip(g, g[1:]):
        if math.isnan(g0) or math.isnan(g1):
            continue
        if g0 == 0.0 and l0 > 0:
            brackets.append((l0, l0))
        elif g0 * g1 < 0:
            brackets.append((l0, l1))
    if not brackets:
        raise CalibrationError("target-out-of-range",
                               f"no lambda in [0, {LAMBDA_MAX}] reaches wedge {target_wedge!r} under parity")
    multiple = len(brackets) > 1
    lo, hi = brackets[0]
    trace.append(("bracket", lo, hi))
    n0 = pair.evaluations
    near = [c for l, c, _ in table if l > 0 and not math.isnan(c) and lo <= l <= hi] or [None]
    pair._last = near[0]
    if lo == hi:
        lam = lo
    else:
        lam = brentq(lambda x: pair.outer(x, target_wedge), lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    cb = pair.c_stress_for(lam, pair._last or near[0])
    trace.append(("brent", lam, cb))
    lam, cb, r, n_newton = _newton_polish(pair, target_wedge, lam, cb)
    trace.append(("newton", lam, cb, n_newton))
    p, w = pair.eval(lam, cb)
    converged = abs(p) <= tol and abs(w - target_wedge) <= tol and lam > 0 and cb > setup.c_onshore
    return CalibrationResult(target_wedge, float(lam), float(cb), float(p), float(w - target_wedge),
                             -math.expm1(-lam * T), pair.evaluations - n0, converged, multiple,
                             "multiple roots; smallest lambda returned" if multiple else "", trace)


def sweep(targets, setup: CalibrationSetup, *, tol: float = RESIDUAL_TOL, warm_start: bool = True):
    """One calibration per target; failed rows are kept with ``converged=False``.

    The warm start shares the parity-curve scan (and its cache) across rows.
    """
    targets = list(targets)
    if not targets:
        return []
    pair = _Pair(setup)
    table = _scan(pair, _scan_lambdas()) if warm_start else None
    rows = []
    for x in targets:
        try:
            rows.append(calibrate(x, setup, tol=tol, _pair=pair if warm_start else None, _table=table))
        except CalibrationError as e:
            rows.append(CalibrationResult(x, float("nan"), float("nan"), float("nan"), float("nan"),
                                          float("nan"), 0, False, message=e.code))
    return rows


def parity_intensity(setup: CalibrationSetup, c_stress: float, lam_max: float = LAMBDA_MAX) -> float:
    """The positive intensity at which ``c_stress`` restores parity."""
    pair = _Pair(setup)
    lams = np.geomspace(1e-6, lam_max, 120)
    vals = [pair.parity(l, c_stress) for l in lams]
    for (l0, v0), (l1, v1) in zip(zip(lams, vals), zip(lams[1:], vals[1:])):
        if v0 * v1 <= 0:
            return brentq(lambda l: pair.parity(l, c_stress), l0, l1, xtol=1e-15, rtol=1e-15, maxiter=200)
    raise CalibrationError("no-parity-solution", f"no lambda in (0, {lam_max}] gives parity at c_stress={c_stress}")


def parity_curve(setup: CalibrationSetup, lams) -> list[tuple[float, float, float]]:
    """(lambda, c_stress, wedge) along the parity curve; NaN where it does not exist."""
    return _scan(_Pair(setup), list(lams))


def with_demand(setup: CalibrationSetup, d_bar: float) -> CalibrationSetup:
    return replace(setup, d_bar=d_bar)
