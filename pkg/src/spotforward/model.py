"""Domain types shared by every module: market parameters, cost, supply and
demand curves, and the time grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a model invariant.

    ``field`` names the offending attribute so that callers (and the CLI) can
    report it without parsing the message.
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


# --------------------------------------------------------------------------
# demand


@dataclass(frozen=True)
class ConstantDemand:
    """Perfectly inelastic forward demand."""

    d_bar: float


@dataclass(frozen=True)
class AffineDemand:
    """Demand d(F) = d0 - k F with k > 0."""

    d0: float
    k: float


DemandCurve = Union[ConstantDemand, AffineDemand]


def demand_at(demand: DemandCurve, F: float) -> float:
    if isinstance(demand, ConstantDemand):
        return float(demand.d_bar)
    return float(demand.d0 - demand.k * F)


# --------------------------------------------------------------------------
# costs


@dataclass(frozen=True)
class Constant:
    c: float


@dataclass(frozen=True)
class RegimeSwitch:
    """Cost equal to ``c_normal`` until the first arrival of a Poisson clock
    with intensity ``lam``, and ``c_stress`` afterwards (absorbing)."""

    c_normal: float
    c_stress: float
    lam: float


CostProcess = Union[Constant, RegimeSwitch]


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class SupplySpec:
    m: float
    M0: float = 0.0


@dataclass(frozen=True)
class ModelParams:
    horizon_T: float
    rho: float
    phi: float = 0.0
    expected_terminal: float = 0.0
    demand: DemandCurve = field(default_factory=lambda: ConstantDemand(0.0))


def _finite(name, value):
    if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
        raise ValidationError(name, "must be a finite number")


def validate_cost(cost) -> None:
    if isinstance(cost, Constant):
        _finite("cost.c", cost.c)
        if cost.c <= 0:
            raise ValidationError("cost.c", "cost must be strictly positive")
    elif isinstance(cost, RegimeSwitch):
        for name in ("c_normal", "c_stress", "lam"):
            _finite(f"cost.{name}", getattr(cost, name))
        if cost.c_normal <= 0:
            raise ValidationError("cost.c_normal", "cost must be strictly positive")
        if cost.c_stress <= 0:
            raise ValidationError("cost.c_stress", "cost must be strictly positive")
        if cost.lam < 0:
            raise ValidationError("cost.lambda", "lambda must be nonnegative")
    elif hasattr(cost, "validate"):
        cost.validate()
    else:
        raise ValidationError("cost", f"unsupported cost type {cost!r}")


def validate(params: ModelParams, cost, supply: SupplySpec):
    """Check every type invariant and return the inputs unchanged.

    The first violation raises :class:`ValidationError`.
    """
    _finite("horizon_T", params.horizon_T)
    if params.horizon_T <= 0:
        raise ValidationError("horizon_T", "horizon must be positive")
    _finite("rho", params.rho)
    if params.rho <= 0:
        raise ValidationError("rho", "rho must be positive")
    _finite("phi", params.phi)
    if params.phi < 0:
        raise ValidationError("phi", "phi must be nonnegative")
    _finite("expected_terminal", params.expected_terminal)
    d = params.demand
    if isinstance(d, ConstantDemand):
        _finite("demand.d_bar", d.d_bar)
    elif isinstance(d, AffineDemand):
        _finite("demand.d0", d.d0)
        _finite("demand.k", d.k)
        if d.k <= 0:
            raise ValidationError("demand.k", "affine demand slope must be positive")
    else:
        raise ValidationError("demand", f"unsupported demand type {d!r}")
    validate_cost(cost)
    _finite("supply.m", supply.m)
    _finite("supply.M0", supply.M0)
    return params, cost, supply


# --------------------------------------------------------------------------
# time grid


@dataclass(frozen=True)
class Segment:
    """A stretch of the grid between two breakpoints.

    Knots ``i0..i1`` (inclusive) live on ``[a, b]`` and are the image of a
    uniform local coordinate xi in [0, 1] under either an affine map or the
    graded map ``a + (b - a)(1 - (1 - xi)^p)``, which clusters knots at ``b``.
    """

    i0: int
    i1: int
    a: float
    b: float
    power: float  # 1.0 means uniform

    @property
    def cells(self) -> int:
        return self.i1 - self.i0

    def t(self, xi):
        xi = np.asarray(xi, dtype=float)
        L = self.b - self.a
        if self.power == 1.0:
            return self.a + L * xi
        return self.a + L * (1.0 - (1.0 - xi) ** self.power)

    def dt_dxi(self, xi):
        xi = np.asarray(xi, dtype=float)
        L = self.b - self.a
        if self.power == 1.0:
            return np.full_like(xi, L)
        return self.power * L * (1.0 - xi) ** (self.power - 1.0)

    def xi(self, t):
        s = (np.asarray(t, dtype=float) - self.a) / (self.b - self.a)
        s = np.clip(s, 0.0, 1.0)
        if self.power == 1.0:
            return s
        return 1.0 - (1.0 - s) ** (1.0 / self.power)


MIN_SEGMENT_CELLS = 4


class TimeGrid:
    """Knots from 0 to T inclusive.

    ``kind="uniform"`` spaces knots evenly. ``kind="graded"`` clusters them
    near maturity, where P(t) climbs from O(c/rho) to 1 across a layer of
    width O(c/rho) when rho/c is large. Optional interior ``breaks`` are
    forced to be knots so that piecewise cost paths never switch inside a
    cell; with breaks the grid is uniform on each segment except (for the
    graded kind) the last one.
    """

    def __init__(self, horizon: float, n_steps: int = 4096, kind: str = "graded",
                 power: float = 3.0, breaks=()):
        if not (isinstance(n_steps, (int, np.integer)) and n_steps >= MIN_SEGMENT_CELLS):
            raise ValidationError("grid.n_steps", f"must be an integer >= {MIN_SEGMENT_CELLS}")
        if not horizon > 0:
            raise ValidationError("horizon_T", "horizon must be positive")
        if kind not in ("uniform", "graded"):
            raise ValidationError("grid.kind", "must be 'uniform' or 'graded'")
        if kind == "graded" and not power > 1.0:
            raise ValidationError("grid.power", "graded grids need power > 1")
        self.horizon = float(horizon)
        self.n_steps = int(n_steps)
        self.kind = kind
        self.power = float(power) if kind == "graded" else 1.0
        bk = sorted({float(b) for b in breaks})
        if any(not (0.0 < b < horizon) for b in bk):
            raise ValidationError("grid.breaks", "breakpoints must lie strictly inside (0, T)")
        self.breaks = tuple(bk)
        self.segments = self._build_segments()

    # -- construction ------------------------------------------------------

    @classmethod
    def uniform(cls, horizon, n_steps=4096, breaks=()):
        return cls(horizon, n_steps, "uniform", breaks=breaks)

    @classmethod
    def graded(cls, horizon, n_steps=4096, power=3.0, breaks=()):
        return cls(horizon, n_steps, "graded", power=power, breaks=breaks)

    def _build_segments(self):
        T, n = self.horizon, self.n_steps
        edges = [0.0, *self.breaks, T]
        if not self.breaks:
            return (Segment(0, n, 0.0, T, self.power),)
        nseg = len(edges) - 1
        if n < MIN_SEGMENT_CELLS * nseg:
            raise ValidationError("grid.n_steps", "too few cells for the cost breakpoints")
        lengths = np.diff(edges)
        if self.kind == "uniform":
            exact = n * np.array(edges) / T
            if np.allclose(exact, np.round(exact), rtol=0, atol=1e-9):
                counts = np.diff(np.round(exact).astype(int))
            else:
                counts = self._allocate(lengths, n)
        else:
            counts = self._allocate(lengths, n)
        if counts.min() < MIN_SEGMENT_CELLS:
            counts = self._allocate(lengths, n)
        segs, i0 = [], 0
        for k in range(nseg):
            p = self.power if (self.kind == "graded" and k == nseg - 1) else 1.0
            segs.append(Segment(i0, i0 + int(counts[k]), edges[k], edges[k + 1], p))
            i0 += int(counts[k])
        return tuple(segs)

    @staticmethod
    def _allocate(lengths, n):
        # largest-remainder apportionment with a floor per segment
        k = len(lengths)
        spare = n - MIN_SEGMENT_CELLS * k
        share = spare * lengths / lengths.sum()
        counts = np.floor(share).astype(int)
        order = np.argsort(-(share - counts), kind="stable")
        counts[order[: spare - counts.sum()]] += 1
        return counts + MIN_SEGMENT_CELLS

    # -- knots and stage data ----------------------------------------------

    @cached_property
    def knots(self) -> np.ndarray:
        t = np.empty(self.n_steps + 1)
        for s in self.segments:
            t[s.i0:s.i1 + 1] = s.t(np.linspace(0.0, 1.0, s.cells + 1))
        t[0], t[-1] = 0.0, self.horizon
        for s in self.segments:
            t[s.i1] = s.b
        t.setflags(write=False)
        return t

    @cached_property
    def cell_data(self):
        """Per-cell arrays for RK4 in the local coordinate.

        Returns (h, J_start, J_mid, J_end, t_mid) where ``h`` is the local
        step 1/cells and the J are dt/dxi evaluated one-sidedly inside the
        cell.
        """
        n = self.n_steps
        h = np.empty(n)
        js, jm, je, tm = (np.empty(n) for _ in range(4))
        for s in self.segments:
            m = s.cells
            xi = np.linspace(0.0, 1.0, m + 1)
            mid = (xi[:-1] + xi[1:]) / 2
            sl = slice(s.i0, s.i1)
            h[sl] = 1.0 / m
            js[sl] = s.dt_dxi(xi[:-1])
            jm[sl] = s.dt_dxi(mid)
            je[sl] = s.dt_dxi(xi[1:])
            tm[sl] = s.t(mid)
        for a in (h, js, jm, je, tm):
            a.setflags(write=False)
        return h, js, jm, je, tm

    def stage_times(self):
        """(t_start, t_mid, t_end) of every cell."""
        t = self.knots
        return t[:-1], self.cell_data[4], t[1:]

    def split(self, values):
        """Slice a knot array into per-segment views (endpoints shared)."""
        values = np.asarray(values)
        return [values[s.i0:s.i1 + 1] for s in self.segments]

    def segment_jacobians(self):
        return [s.dt_dxi(np.linspace(0.0, 1.0, s.cells + 1)) for s in self.segments]

    def check_same(self, other: "TimeGrid", what: str = "path") -> None:
        if other is self:
            return
        if (other.n_steps != self.n_steps or other.horizon != self.horizon
                or not np.array_equal(other.knots, self.knots)):
            raise ValidationError("grid", f"grid mismatch with {what}")

    def locate(self, t):
        """Segment index and local coordinate of time(s) ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        seg = np.searchsorted(np.array([s.b for s in self.segments]), t, side="left")
        seg = np.minimum(seg, len(self.segments) - 1)
        xi = np.empty_like(t)
        for k, s in enumerate(self.segments):
            mask = seg == k
            if mask.any():
                xi[mask] = s.xi(t[mask])
        return seg, xi

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and other.horizon == self.horizon and \
            other.n_steps == self.n_steps and other.kind == self.kind and \
            other.power == self.power and other.breaks == self.breaks

    def __hash__(self):
        return hash((self.horizon, self.n_steps, self.kind, self.power, self.breaks))

    def __repr__(self):
        extra = f", power={self.power}" if self.kind == "graded" else ""
        brk = f", breaks={self.breaks}" if self.breaks else ""
        return f"TimeGrid(T={self.horizon}, n_steps={self.n_steps}, kind={self.kind!r}{extra}{brk})"


def default_grid(horizon: float, n_steps: int = 4096, kind: str = "graded", breaks=()) -> TimeGrid:
    return TimeGrid(horizon, n_steps, kind, breaks=breaks)
