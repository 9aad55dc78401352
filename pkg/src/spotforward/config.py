"""YAML configuration. Nested mappings and dotted keys are both accepted:
``cost: {kind: constant, c: 1}`` and ``cost.c: 1`` mean the same thing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .model import (AffineDemand, Constant, ConstantDemand, ModelParams, RegimeSwitch, SupplySpec,
                    TimeGrid, ValidationError, validate)

KNOWN_KEYS = {
    "horizon_T", "rho", "phi", "expected_terminal",
    "demand.kind", "demand.d_bar", "demand.d0", "demand.k",
    "cost.kind", "cost.c", "cost.c_normal", "cost.c_stress", "cost.lambda",
    "supply.m", "supply.M0",
    "grid.n_steps", "grid.kind",
    "onshore.c",
    "picard.sigma_bar", "picard.R", "picard.max_iter", "picard.tol",
    "calibration.targets",
}


def flatten(mapping, prefix: str = "") -> dict:
    out = {}
    for k, v in mapping.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass(frozen=True)
class Config:
    params: ModelParams
    cost: object
    supply: SupplySpec
    n_steps: int = 4096
    grid_kind: str = "graded"
    onshore_c: float | None = None
    demand_is_parity: bool = False
    sigma_bar: float = 1.0
    R: float = 1.0
    max_iter: int = 200
    tol: float = 1e-12
    targets: tuple = ()
    raw: dict = field(default_factory=dict, repr=False)

    def grid(self, n_steps: int | None = None) -> TimeGrid:
        return TimeGrid(self.params.horizon_T, n_steps or self.n_steps, self.grid_kind)


def _num(flat, key, default=None, required=True):
    if key not in flat:
        if default is not None or not required:
            return default
        raise ValidationError(key, "missing required key")
    v = flat[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(key, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ValidationError(key, "must be a finite number")
    return float(v)


def parse_config(mapping) -> Config:
    if not isinstance(mapping, dict):
        raise ValidationError("config", "top level must be a mapping")
    flat = flatten(mapping)
    unknown = sorted(set(flat) - KNOWN_KEYS)
    if unknown:
        raise ValidationError(unknown[0], "unknown configuration key")

    dkind = flat.get("demand.kind", "constant")
    parity = False
    if dkind == "constant":
        if flat.get("demand.d_bar") == "parity":
            parity, demand = True, ConstantDemand(0.0)
        else:
            demand = ConstantDemand(_num(flat, "demand.d_bar", 0.0))
    elif dkind == "affine":
        demand = AffineDemand(_num(flat, "demand.d0"), _num(flat, "demand.k"))
    else:
        raise ValidationError("demand.kind", "must be 'constant' or 'affine'")

    params = ModelParams(_num(flat, "horizon_T"), _num(flat, "rho"), _num(flat, "phi", 0.0),
                         _num(flat, "expected_terminal", 0.0), demand)

    ckind = flat.get("cost.kind", "constant")
    if ckind == "constant":
        cost = Constant(_num(flat, "cost.c"))
    elif ckind in ("regime_switch", "regime-switch", "jump"):
        c_normal = _num(flat, "cost.c_normal")
        # calibration configs may leave the stressed level to be implied
        c_stress = _num(flat, "cost.c_stress", c_normal)
        cost = RegimeSwitch(c_normal, c_stress, _num(flat, "cost.lambda", 0.0))
    else:
        raise ValidationError("cost.kind", "must be 'constant' or 'regime_switch'")

    supply = SupplySpec(_num(flat, "supply.m", 0.0), _num(flat, "supply.M0", 0.0))
    validate(params, cost, supply)

    n_steps = flat.get("grid.n_steps", 4096)
    if isinstance(n_steps, bool) or not isinstance(n_steps, int) or n_steps < 4:
        raise ValidationError("grid.n_steps", "must be an integer >= 4")
    grid_kind = flat.get("grid.kind", "graded")
    if grid_kind not in ("graded", "uniform"):
        raise ValidationError("grid.kind", "must be 'graded' or 'uniform'")

    onshore = _num(flat, "onshore.c", required=False)
    if onshore is not None and onshore <= 0:
        raise ValidationError("onshore.c", "cost must be strictly positive")

    targets = flat.get("calibration.targets", ())
    if not isinstance(targets, (list, tuple)) or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) for x in targets):
        raise ValidationError("calibration.targets", "must be a list of numbers")

    max_iter = flat.get("picard.max_iter", 200)
    if isinstance(max_iter, bool) or not isinstance(max_iter, int) or max_iter < 1:
        raise ValidationError("picard.max_iter", "must be a positive integer")

    return Config(params, cost, supply, int(n_steps), grid_kind, onshore, parity,
                  _num(flat, "picard.sigma_bar", 1.0), _num(flat, "picard.R", 1.0), max_iter,
                  _num(flat, "picard.tol", 1e-12), tuple(float(x) for x in targets), flat)


def load_config(path) -> Config:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ValidationError("config", f"cannot read {p}: {e.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ValidationError("config", f"invalid YAML: {e}") from None
    return parse_config(data or {})
