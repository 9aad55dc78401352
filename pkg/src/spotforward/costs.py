"""Deterministic, possibly time-varying trading-cost paths c(t)."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .model import Constant, TimeGrid, ValidationError


class CostPath:
    """A piecewise-smooth positive cost path on [0, T].

    Pieces are separated by ``breaks``; each piece is a constant or a
    vectorised callable. At a break the path has distinct left and right
    limits, and solvers consume whichever side belongs to the cell at hand,
    which is why grids must carry the breaks as knots.
    """

    def __init__(self, pieces: Sequence, breaks: Sequence[float] = (), label: str = "custom"):
        if len(pieces) != len(breaks) + 1:
            raise ValidationError("cost", "need exactly one piece more than breakpoints")
        if list(breaks) != sorted(breaks):
            raise ValidationError("cost", "breakpoints must be increasing")
        self.pieces = tuple(pieces)
        self.breaks = tuple(float(b) for b in breaks)
        self.label = label

    # constructors

    @classmethod
    def constant(cls, c: float) -> "CostPath":
        return cls([float(c)], label=f"constant({c})")

    @classmethod
    def piecewise_constant(cls, breaks, levels) -> "CostPath":
        return cls([float(v) for v in levels], breaks, label="piecewise")

    @classmethod
    def smooth(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "CostPath":
        return cls([fn], label="smooth")

    @classmethod
    def coerce(cls, cost) -> "CostPath":
        if isinstance(cost, CostPath):
            return cost
        if isinstance(cost, Constant):
            return cls.constant(cost.c)
        if isinstance(cost, (int, float, np.floating)):
            return cls.constant(float(cost))
        raise ValidationError("cost", f"cannot use {cost!r} as a deterministic cost path")

    # evaluation

    @property
    def is_constant(self) -> bool:
        return len(self.pieces) == 1 and not callable(self.pieces[0])

    def _piece(self, k, t):
        p = self.pieces[k]
        if callable(p):
            return np.asarray(p(t), dtype=float) * np.ones_like(t)
        return np.full_like(t, p)

    def __call__(self, t, side: str = "right") -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.searchsorted(np.asarray(self.breaks), t, side=side)
        out = np.empty_like(t)
        for j in range(len(self.pieces)):
            mask = k == j
            if mask.any():
                out[mask] = self._piece(j, t[mask])
        return out

    def validate(self) -> None:
        for p in self.pieces:
            if not callable(p) and not p > 0:
                raise ValidationError("cost", "cost must be strictly positive")

    def grid(self, horizon: float, n_steps: int = 4096, kind: str = "graded") -> TimeGrid:
        return TimeGrid(horizon, n_steps, kind, breaks=self.breaks)

    # grid views

    def _check_grid(self, grid: TimeGrid) -> None:
        for b in self.breaks:
            if not any(abs(b - g) <= 1e-12 * max(1.0, grid.horizon) for g in grid.breaks):
                raise ValidationError(
                    "grid", f"cost breakpoint {b} is not a grid breakpoint; "
                            "build the grid with cost.grid(...) or pass breaks=")

    def _positive(self, values, where: str):
        bad = ~(values > 0)
        if bad.any():
            raise ValidationError("cost", f"non-positive cost on {where} ({values[bad][0]!r})")
        return values

    def on_segments(self, grid: TimeGrid):
        """Per-segment knot values, one-sided at segment ends."""
        self._check_grid(grid)
        out = []
        for s in grid.segments:
            ts = grid.knots[s.i0:s.i1 + 1]
            v = self(ts, "right")
            v[-1] = self(ts[-1:], "left")[0]
            out.append(self._positive(v, "grid"))
        return out

    def at_knots(self, grid: TimeGrid) -> np.ndarray:
        """Right-continuous knot values (left limit at T)."""
        self._check_grid(grid)
        v = self(grid.knots, "right")
        v[-1] = self(grid.knots[-1:], "left")[0]
        return self._positive(v, "grid")

    def stages(self, grid: TimeGrid):
        """Cost at (start+, middle, end-) of every cell."""
        self._check_grid(grid)
        t0, tm, t1 = grid.stage_times()
        cs = self._positive(self(t0, "right"), "grid")
        cm = self._positive(self(tm, "right"), "grid")
        ce = self._positive(self(t1, "left"), "grid")
        return cs, cm, ce

    def sup(self, grid: TimeGrid) -> float:
        cs, cm, ce = self.stages(grid)
        return float(max(cs.max(), cm.max(), ce.max()))

    def inf(self, grid: TimeGrid) -> float:
        cs, cm, ce = self.stages(grid)
        return float(min(cs.min(), cm.min(), ce.min()))

    def __repr__(self):
        return f"CostPath({self.label}, breaks={self.breaks})"
