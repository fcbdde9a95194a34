"""Command-line front end.

Usage::

    serial-monopoly <command> [--config cfg.json] [--out DIR] [--seed N] [--n N]
                              [--solution DIR]

Commands: validate, first-best, observable, solve, payoffs, verify, sample,
paper-table. The config file is JSON; every field is optional and falls
back to the defaults in :data:`DEFAULT_CONFIG`.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .benchmark import solve_first_best, solve_observable
from .equilibrium import N_GRID, extend_menu, solve_equilibrium
from .errors import ConfigError, SerialMonopolyError
from .model import MarketPrimitives, QuadraticUtility, validate
from .roots import ROOT_TOL
from .sim import replay, sample
from .verify import verify_solution
from .welfare import expectation, payoff_report, table_rows

DEFAULT_CONFIG = {
    "utility": {"family": "quadratic", "axx": -3.0, "ayy": -3.0, "axy": -1.0, "bx": 8.0, "by": 8.0},
    "k": 1.0,
    "domain": {"x_max": None, "y_max": None},
    "grids": {"n_grid": N_GRID, "ic_grid": 200, "deviation_grid": 4001,
              "deviation_candidates": 50, "validation_grid": 101},
    "tolerances": {"root_tol": ROOT_TOL, "price_tol": 1e-8, "foc_tol": 1e-6,
                   "ic_tol": 1e-8, "expectation_tol": 1e-6},
    "seed": 20261015,
    "n_samples": 100000,
    "menu_extension": "minimal",
    "output_dir": "out",
}

# The worked example fixes only the utility; x_o = 7/6 in its benchmark row
# solves 8 - 6x = k, which pins the marginal cost at k = 1.
EXAMPLE_K = 1.0
EXAMPLE_A = (-1.0, -3.0)


@dataclass(frozen=True)
class RunConfig:
    primitives: MarketPrimitives
    n_grid: int
    ic_grid: int
    deviation_grid: int
    deviation_candidates: int
    validation_grid: int
    root_tol: float
    price_tol: float
    foc_tol: float
    ic_tol: float
    expectation_tol: float
    seed: int
    n_samples: int
    menu_extension: object
    output_dir: Path


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"{path}{key}: unknown field")
        if isinstance(base[key], dict) and key != "utility":
            if not isinstance(val, dict):
                raise ConfigError(f"{path}{key}: expected an object")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def _int(d, key, path, lo):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{path}{key}: expected an integer >= {lo}, got {v!r}")
    return v


def _positive(d, key, path):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not (math.isfinite(v) and v > 0):
        raise ConfigError(f"{path}{key}: expected a positive number, got {v!r}")
    return float(v)


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    cfg = _merge(DEFAULT_CONFIG, raw)
    try:
        primitives = io.primitives_from_dict(cfg)
    except ValueError as exc:
        raise ConfigError(f"utility: {exc}") from exc
    g, t = cfg["grids"], cfg["tolerances"]
    ext = cfg["menu_extension"]
    if isinstance(ext, str):
        if ext not in ("minimal", "maximal"):
            raise ConfigError(f"menu_extension: expected 'minimal', 'maximal' or a number, got {ext!r}")
    elif isinstance(ext, bool) or not isinstance(ext, (int, float)) or not math.isfinite(ext):
        raise ConfigError(f"menu_extension: expected 'minimal', 'maximal' or a number, got {ext!r}")
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 1 << 64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed!r}")
    if not isinstance(cfg["output_dir"], str):
        raise ConfigError("output_dir: expected a path string")
    return RunConfig(
        primitives=primitives,
        n_grid=_int(g, "n_grid", "grids.", 2),
        ic_grid=_int(g, "ic_grid", "grids.", 2),
        deviation_grid=_int(g, "deviation_grid", "grids.", 2),
        deviation_candidates=_int(g, "deviation_candidates", "grids.", 1),
        validation_grid=_int(g, "validation_grid", "grids.", 2),
        root_tol=_positive(t, "root_tol", "tolerances."),
        price_tol=_positive(t, "price_tol", "tolerances."),
        foc_tol=_positive(t, "foc_tol", "tolerances."),
        ic_tol=_positive(t, "ic_tol", "tolerances."),
        expectation_tol=_positive(t, "expectation_tol", "tolerances."),
        seed=seed,
        n_samples=_int(cfg, "n_samples", "", 0),
        menu_extension=ext,
        output_dir=Path(cfg["output_dir"]),
    )


def load_config(path) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config: file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    return parse_config(raw)


def _solution(cfg: RunConfig, args):
    if args.solution:
        return io.load_solution(args.solution)
    sol = solve_equilibrium(cfg.primitives, cfg.n_grid, cfg.root_tol, cfg.price_tol)
    if cfg.menu_extension != "minimal":
        sol = extend_menu(sol, cfg.menu_extension)
    return sol


def _emit(obj):
    sys.stdout.write(io.json_text(obj))


def cmd_validate(cfg, args, out):
    report = validate(cfg.primitives, cfg.validation_grid)
    io.write_json(out / "validation.json", report.to_dict())
    _emit(report.to_dict())
    return 0 if report.ok else 1


def cmd_first_best(cfg, args, out):
    fb = solve_first_best(cfg.primitives, cfg.root_tol)
    io.write_json(out / "first_best.json", fb.to_dict())
    _emit(fb.to_dict())
    return 0


def cmd_observable(cfg, args, out):
    obs = solve_observable(cfg.primitives, tol=cfg.root_tol)
    io.write_json(out / "observable.json", obs.to_dict())
    _emit(obs.to_dict())
    return 0


def cmd_solve(cfg, args, out):
    sol = _solution(cfg, args)
    io.save_solution(sol, out)
    _emit(io.solution_summary(sol))
    return 0


def _table_csv(path, solution, report):
    rows = []
    for label, x, y, W, pi1, pi2, V in table_rows(solution, report):
        lo = lambda v: v[0] if isinstance(v, tuple) else v  # noqa: E731
        hi = lambda v: v[1] if isinstance(v, tuple) else v  # noqa: E731
        rows.append([label, x, y, W, lo(pi1), hi(pi1), pi2, lo(V), hi(V)])
    io.write_rows(path, ["row", "x", "y", "W", "pi1_low", "pi1_high", "pi2", "V_low", "V_high"], rows)
    return rows


def cmd_payoffs(cfg, args, out):
    sol = _solution(cfg, args)
    report = payoff_report(sol.primitives, sol, strict=False)
    io.write_json(out / "payoffs.json", report.to_dict())
    _table_csv(out / "payoffs.csv", sol, report)
    _emit(report.to_dict())
    return 0 if report.ok else 1


def cmd_verify(cfg, args, out):
    sol = _solution(cfg, args)
    report = verify_solution(sol, cfg.ic_grid, cfg.deviation_candidates, cfg.deviation_grid,
                             cfg.ic_tol, cfg.foc_tol, cfg.price_tol)
    io.write_json(out / "verification.json", report.to_dict())
    _emit({"passed": report.passed, "failed": report.failed, "checks": report.checks})
    return 0 if report.passed else 1


def cmd_sample(cfg, args, out):
    sol = _solution(cfg, args)
    n = cfg.n_samples if args.n is None else args.n
    seed = cfg.seed if args.seed is None else args.seed
    batch = sample(sol, n, seed)
    rep = replay(sol.primitives, sol, batch, raise_on_violation=False)
    io.write_csv(out / "samples.csv", batch.table())
    summary = {"seed": seed, "n": n, **rep.to_dict()}
    io.write_json(out / "empirical.json", summary)
    _emit(summary)
    return 0 if rep.ic_violations == 0 else 1


def cmd_paper_table(cfg, args, out):
    rows_out = []
    printed = []
    for a in EXAMPLE_A:
        primitives = MarketPrimitives(QuadraticUtility.example(a), EXAMPLE_K)
        sol = solve_equilibrium(primitives, cfg.n_grid, cfg.root_tol, cfg.price_tol)
        report = payoff_report(primitives, sol, strict=False)
        for label, x, y, W, pi1, pi2, V in table_rows(sol, report):
            lo = pi1[0] if isinstance(pi1, tuple) else pi1
            hi = pi1[1] if isinstance(pi1, tuple) else pi1
            vlo = V[0] if isinstance(V, tuple) else V
            vhi = V[1] if isinstance(V, tuple) else V
            rows_out.append([a, label, x, y, W, lo, hi, pi2, vlo, vhi])
            printed.append((a, label, x, y, W, pi1, pi2, V))
        tag = f"a{a:+g}"
        io.write_csv(out / f"curve_{tag}.csv", {"x": sol.x, "F": sol.cdf.F, "y_hat": sol.y_hat})
    io.write_rows(out / "example_table.csv",
                  ["a", "row", "x", "y", "W", "pi1_low", "pi1_high", "pi2", "V_low", "V_high"],
                  rows_out)

    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, tuple):
            return f"[{v[0]:.2f}, {v[1]:.2f}]"
        return f"{v:.2f}"

    print(f"{'a':>4}  {'row':<12}{'x':>7}{'y':>7}{'W':>7}{'pi1':>15}{'pi2':>7}{'V':>15}")
    for a, label, x, y, W, pi1, pi2, V in printed:
        print(f"{a:>4g}  {label:<12}{fmt(x):>7}{fmt(y):>7}{fmt(W):>7}{fmt(pi1):>15}"
              f"{fmt(pi2):>7}{fmt(V):>15}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "first-best": cmd_first_best,
    "observable": cmd_observable,
    "solve": cmd_solve,
    "payoffs": cmd_payoffs,
    "verify": cmd_verify,
    "sample": cmd_sample,
    "paper-table": cmd_paper_table,
}


def build_parser():
    p = argparse.ArgumentParser(prog="serial-monopoly",
                                description="Serial monopoly pricing with private consumption.")
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="PRNG seed for sample")
    p.add_argument("--n", type=int, help="number of draws for sample")
    p.add_argument("--solution", help="read solution.csv/solution.json from this directory "
                                      "instead of solving")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 1 << 64:
            raise ConfigError(f"--seed: expected an unsigned 64-bit integer, got {args.seed}")
        if args.n is not None and args.n < 0:
            raise ConfigError(f"--n: expected a non-negative count, got {args.n}")
        out = Path(args.out) if args.out else cfg.output_dir
        t0 = time.perf_counter()
        code = COMMANDS[args.command](cfg, args, out)
        print(f"[{args.command}] done in {time.perf_counter() - t0:.2f}s -> {out}", file=sys.stderr)
        return code
    except SerialMonopolyError as exc:
        print(f"error [{exc.stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
