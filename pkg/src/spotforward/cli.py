"""Command-line front end: ``spotforward <command> [options]``.

Exit status: 0 on success, 1 on configuration or validation errors, 2 when a
solver fails to converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, replace

from . import __version__
from .config import Config, load_config
from .deterministic import deterministic_paths
from .equilibrium import (CalibrationError, CalibrationSetup, ConsistencyError, forward_wedge,
                          parity_demand, parity_residual, quote_from, sweep, venue_coefficients,
                          venue_quote)
from .jump import expected_alpha, expected_beta, solve_jump
from .model import Constant, ConstantDemand, RegimeSwitch, ValidationError
from .output import paths_table, to_csv, to_json
from .picard import run_picard
from .quotes import read_quotes, wedge_stats

log = logging.getLogger("spotforward")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2
IRRELEVANT = "irrelevant at λ=0"

CALIBRATION_COLUMNS = ["target_wedge", "lambda_implied", "stress_prob_T", "c_stress_implied",
                       "parity_residual", "wedge_residual", "converged"]


def _setup_logging():
    level = os.environ.get("SPOTFORWARD_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spotforward", description="Spot/forward equilibrium toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")

    def add(name, help_, config=True):
        sp = sub.add_parser(name, help=help_)
        if config:
            sp.add_argument("--config", required=True, help="YAML configuration file")
            sp.add_argument("--grid", type=int, help="override grid.n_steps")
        sp.add_argument("--out", help="write the main table here instead of stdout")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        return sp

    add("benchmark", "deterministic venue quote").add_argument("--paths", help="write coefficient paths CSV")
    add("jump", "regime-switching coefficients").add_argument("--paths", help="write jump paths CSV")
    add("wedge", "parity residual and forward wedge for two venues")
    for name, help_ in (("calibrate", "implied (lambda, c_stress), each target solved afresh"),
                        ("sweep", "implied (lambda, c_stress), rows share one parity-curve scan")):
        add(name, help_).add_argument(
            "--targets", help="comma-separated wedge targets in price units")
    add("picard", "risk-aversion perturbation and contraction report")
    add("stats", "per-tenor statistics of a quotes CSV", config=False).add_argument(
        "--quotes", required=True, help="quotes CSV file")
    return p


def _emit(args, command: str, rows: list[dict], columns=None):
    text = to_json(command, rows) if args.format == "json" else to_csv(rows, columns)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_paths(path, columns: dict):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(paths_table(columns), list(columns)))


def _config(args) -> Config:
    cfg = load_config(args.config)
    if args.grid is not None:
        if args.grid < 4:
            raise ValidationError("--grid", "must be an integer >= 4")
        cfg = replace(cfg, n_steps=args.grid)
    return cfg


def _onshore(cfg: Config) -> float:
    if cfg.onshore_c is None:
        raise ValidationError("onshore.c", "two-venue commands need the onshore cost")
    return cfg.onshore_c


def _setup(cfg: Config) -> CalibrationSetup:
    if not isinstance(cfg.cost, RegimeSwitch):
        raise ValidationError("cost.kind", "calibration needs a regime_switch offshore cost")
    d = cfg.params.demand
    if not isinstance(d, ConstantDemand):
        raise ValidationError("demand.kind", "calibration needs constant demand")
    return CalibrationSetup(cfg.supply.m, _onshore(cfg), cfg.cost.c_normal, cfg.params.rho,
                            cfg.params.horizon_T, None if cfg.demand_is_parity else d.d_bar,
                            cfg.params.expected_terminal, cfg.n_steps, cfg.grid_kind)


def _demand(cfg: Config) -> float:
    if cfg.demand_is_parity:
        c_n = cfg.cost.c_normal if isinstance(cfg.cost, RegimeSwitch) else cfg.cost.c
        return parity_demand(cfg.params, _onshore(cfg), c_n, cfg.supply)
    d = cfg.params.demand
    if not isinstance(d, ConstantDemand):
        raise ValidationError("demand.kind", "this command needs constant demand")
    return d.d_bar


# -- commands ------------------------------------------------------------------


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    if not isinstance(cfg.cost, Constant):
        raise ValidationError("cost.kind", "benchmark needs a constant cost")
    grid = cfg.grid()
    q = venue_quote(cfg.params, cfg.cost, cfg.supply, grid=grid)
    row = {"forward": q.forward, "spot0": q.spot0, "premium": q.premium, "P0": q.P0,
           "delta0": q.delta0, "expected_beta_T": q.expected_beta_T, "quantity": q.quantity}
    _emit(args, "benchmark", [row])
    if args.paths:
        paths = deterministic_paths(cfg.cost.c, cfg.params.rho, cfg.supply.m, q.quantity, grid)
        _write_paths(args.paths, paths.columns())
    return EXIT_OK


def cmd_jump(args) -> int:
    cfg = _config(args)
    if not isinstance(cfg.cost, RegimeSwitch):
        raise ValidationError("cost.kind", "jump needs a regime_switch cost")
    p = cfg.params
    co = solve_jump(cfg.cost, cfg.supply.m, p.rho, cfg.grid())
    Ea, Eb = expected_alpha(co), expected_beta(co)
    _, none = co.conditional_values("beta")
    row = {"lambda": co.lam, "c_normal": co.c_normal, "c_stress": co.c_stress,
           "P_normal0": co.P_normal[0], "P_stress0": co.P_stress[0],
           "delta_normal0": co.delta_normal[0], "delta_stress0": co.delta_stress[0],
           "expected_alpha_T": Ea, "expected_beta_T": Eb, "beta_T_no_jump": none,
           "beta_T_jump_at_half_T": float(co.conditional_at(p.horizon_T / 2)[0]),
           "stress_prob_T": -math.expm1(-co.lam * p.horizon_T),
           "identity_residual": 1 - p.rho * Ea - math.exp(p.horizon_T) * co.P_normal[0]}
    _emit(args, "jump", [row])
    if args.paths:
        _write_paths(args.paths, {"t": co.t, "P_normal": co.P_normal, "P_stress": co.P_stress,
                                  "delta_normal": co.delta_normal, "delta_stress": co.delta_stress})
    return EXIT_OK


def cmd_wedge(args) -> int:
    cfg = _config(args)
    p, sp = cfg.params, cfg.supply
    cy = Constant(_onshore(cfg))
    d = _demand(cfg)
    grid = cfg.grid()
    vy, vh = venue_coefficients(p, cy, sp, grid), venue_coefficients(p, cfg.cost, sp, grid)
    qy, qh = quote_from(vy, p.expected_terminal, d), quote_from(vh, p.expected_terminal, d)
    row = {"d_bar": d,
           "parity_residual": parity_residual(p, cy, cfg.cost, sp, d, grid),
           "parity_by_quotes": qy.spot0 - qh.spot0,
           "forward_wedge": forward_wedge(p, cy, cfg.cost, sp, d, grid),
           "F_onshore": qy.forward, "S0_onshore": qy.spot0,
           "F_offshore": qh.forward, "S0_offshore": qh.spot0}
    _emit(args, "wedge", [row])
    return EXIT_OK


def _targets(args, cfg: Config):
    if args.targets:
        try:
            return [float(x) for x in args.targets.split(",") if x.strip()]
        except ValueError:
            raise ValidationError("--targets", "must be a comma-separated list of numbers") from None
    if not cfg.targets:
        raise ValidationError("calibration.targets", "no targets given")
    return list(cfg.targets)


def _calibration_row(r) -> dict:
    return {"target_wedge": r.target_wedge, "lambda_implied": r.lambda_implied,
            "stress_prob_T": r.stress_probability,
            "c_stress_implied": IRRELEVANT if r.c_stress_implied is None else r.c_stress_implied,
            "parity_residual": r.parity_residual, "wedge_residual": r.wedge_residual,
            "converged": r.converged}


def _run_calibration(args, warm: bool) -> int:
    cfg = _config(args)
    setup = _setup(cfg)
    results = sweep(_targets(args, cfg), setup, warm_start=warm)
    for r in results:
        if not r.converged:
            _error(r.message or "no-convergence", "calibration", f"target {r.target_wedge!r} failed")
    _emit(args, args.command, [_calibration_row(r) for r in results], CALIBRATION_COLUMNS)
    return EXIT_OK if all(r.converged for r in results) else EXIT_SOLVER


def cmd_calibrate(args) -> int:
    return _run_calibration(args, warm=False)


def cmd_sweep(args) -> int:
    return _run_calibration(args, warm=True)


def cmd_picard(args) -> int:
    cfg = _config(args)
    if not isinstance(cfg.cost, Constant):
        raise ValidationError("cost.kind", "picard needs a constant cost")
    p = cfg.params
    d = _demand(cfg)
    bench = deterministic_paths(cfg.cost.c, p.rho, cfg.supply.m, d, cfg.grid())
    _, rep = run_picard(bench, cfg.sigma_bar, p.phi, max_iter=cfg.max_iter, tol=cfg.tol, R=cfg.R)
    rows = [{"iteration": i + 1, "diff_norm": v, "ratio": (rep.ratios[i - 1] if i > 0 else None)}
            for i, v in enumerate(rep.iterate_norms)]
    _emit(args, "picard", rows, ["iteration", "diff_norm", "ratio"])
    log.info("eta=%.6g thresholds=%s converged=%s", rep.eta, rep.phi_thresholds, rep.converged)
    if not rep.converged:
        _error("no-convergence", "picard", f"not converged after {rep.iterations} iterations "
               f"(eta={rep.eta:.6g}, last ratio={rep.eventual_ratio:.6g})")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_stats(args) -> int:
    rows = read_quotes(args.quotes)
    stats = wedge_stats(rows)
    _emit(args, "stats", [asdict(s) for s in stats],
          ["tenor_months", "n", "mean", "std", "q25", "median", "q75", "spot_log_ratio_mean"])
    return EXIT_OK


COMMANDS = {"benchmark": cmd_benchmark, "jump": cmd_jump, "wedge": cmd_wedge,
            "calibrate": cmd_calibrate, "sweep": cmd_sweep, "picard": cmd_picard, "stats": cmd_stats}


def _error(code: str, field: str, message: str):
    sys.stderr.write(json.dumps({"error": code, "field": field, "message": message}) + "\n")


def run_cli(argv=None) -> int:
    _setup_logging()
    parser = _parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in COMMANDS and not argv[0].startswith("-"):
        parser.print_usage(sys.stderr)
        _error("usage", "command", f"unknown command {argv[0]!r}" if argv else "missing command")
        return EXIT_INPUT
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except ValidationError as e:
        _error("validation", e.field, e.message)
        return EXIT_INPUT
    except OSError as e:
        _error("io", getattr(e, "filename", "") or "file", str(e))
        return EXIT_INPUT
    except (CalibrationError, ConsistencyError) as e:
        _error(getattr(e, "code", "solver"), args.command, str(e))
        return EXIT_SOLVER


def main():
    sys.exit(run_cli())
