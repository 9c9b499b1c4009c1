"""Command-line entry point.

Subcommands:

  run SCENARIO --out DIR        self-triggered co-simulation
  baseline SCENARIO --out DIR   periodic sampling baseline
  sweep SCENARIO --out DIR --a  weight sweep (range START:STOP:STEP or list)
  validate SCENARIO             parse and schema-check only
  oracle-check                  solver-versus-exhaustive comparison suite

SCENARIO is a config file path or the name of a bundled scenario
(e.g. ``paper_section5``).  Exit codes: 0 success, 1 completed run with
contract violations (or failed oracle bounds), 2 configuration error,
3 infeasible allocation, 4 stability/deadline failure, 5 oversized
exhaustive instance.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import allocator
from .config import ScenarioConfig, bundled_scenario, parse_config
from .engine import run_periodic_baseline, run_scenario, sweep_weight
from .errors import (
    DeadlineViolation,
    DelayBudgetExceeded,
    Infeasible,
    SchemaError,
    StabilityViolation,
    StcpsError,
    TooLarge,
    UnitError,
)
from .reporting import write_run_outputs, write_sweep_summary

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_STABILITY = 4
EXIT_TOO_LARGE = 5


def _load(scenario: str) -> ScenarioConfig:
    path = Path(scenario)
    if not path.exists() and "/" not in scenario and not scenario.endswith(".cfg"):
        path = bundled_scenario(scenario)
    return parse_config(path)


def _parse_weights(spec: str) -> List[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise SchemaError("--a", "range must be START:STOP:STEP")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise SchemaError("--a", "step must be > 0")
        values = []
        a = start
        while a <= stop + 1e-12:
            values.append(round(a, 12))
            a += step
        return values
    return [float(p) for p in spec.split(",") if p.strip()]


def _report_outcome(report, outdir) -> int:
    write_run_outputs(report, outdir)
    print(f"wrote {outdir} (tx={report.per_plant_tx_count}, "
          f"energy={report.energy_ul_j + report.energy_bs_j:.4f} J)")
    if report.violations:
        print(f"error: {len(report.violations)} contract violation(s); "
              f"first: {report.violations[0]}", file=sys.stderr)
        return EXIT_VIOLATIONS
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _load(args.scenario)
    return _report_outcome(run_scenario(config), args.out)


def _cmd_baseline(args) -> int:
    config = _load(args.scenario)
    return _report_outcome(run_periodic_baseline(config, args.period), args.out)


def _cmd_sweep(args) -> int:
    config = _load(args.scenario)
    weights = _parse_weights(args.a)
    reports = sweep_weight(config, weights)
    out = Path(args.out)
    status = EXIT_OK
    for a, report in zip(weights, reports):
        code = _report_outcome(report, out / f"a_{a:g}")
        status = max(status, code)
    write_sweep_summary(reports, weights, out)
    print(f"wrote {out / 'sweep_summary.csv'}")
    return status


def _cmd_validate(args) -> int:
    config = _load(args.scenario)
    print(f"OK: {len(config.plants)} plants, {config.users.num_rc} RC users, "
          f"L={config.network.num_subcarriers}, {config.sim.duration_s:g} s")
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    gaps = []
    for seed in range(args.instances):
        problem = allocator.random_problem(args.seed + seed,
                                           max_subcarriers=args.max_subcarriers)
        solution = allocator.solve_allocation(problem)
        oracle = allocator.brute_force_allocation(problem)
        gap = (solution.objective_w - oracle.objective_w) / oracle.objective_w
        gaps.append(gap)
        trace = np.asarray(solution.objective_trace)
        monotone = bool(np.all(np.diff(trace) <= 1e-12))
        flags = []
        if not monotone:
            flags.append("trace-not-monotone")
        if solution.kkt_residual_max >= 1e-8:
            flags.append("kkt")
        if allocator.check_solution(problem, solution):
            flags.append("constraints")
        print(f"instance {seed:3d}: gap {gap:+.4%}"
              + (f"  [{', '.join(flags)}]" if flags else ""))
        if flags:
            return EXIT_VIOLATIONS
    gaps_arr = np.asarray(gaps)
    median, worst = float(np.median(gaps_arr)), float(gaps_arr.max())
    print(f"median gap {median:.4%}, max gap {worst:.4%} over {len(gaps)} instances")
    if median > 0.01 or worst > 0.05:
        print("error: gap bounds exceeded (median <= 1%, max <= 5%)", file=sys.stderr)
        return EXIT_VIOLATIONS
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stcps",
        description="Self-triggered control plants over a power-minimizing OFDMA cell")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="self-triggered co-simulation")
    run_p.add_argument("scenario")
    run_p.add_argument("--out", required=True)
    run_p.set_defaults(func=_cmd_run)

    base_p = sub.add_parser("baseline", help="periodic sampling baseline")
    base_p.add_argument("scenario")
    base_p.add_argument("--out", required=True)
    base_p.add_argument("--period", type=float, default=None,
                        help="sampling period in seconds (default: config)")
    base_p.set_defaults(func=_cmd_baseline)

    sweep_p = sub.add_parser("sweep", help="objective-weight sweep")
    sweep_p.add_argument("scenario")
    sweep_p.add_argument("--out", required=True)
    sweep_p.add_argument("--a", required=True,
                         help="weights as START:STOP:STEP or a comma list")
    sweep_p.set_defaults(func=_cmd_sweep)

    val_p = sub.add_parser("validate", help="parse and schema-check a scenario")
    val_p.add_argument("scenario")
    val_p.set_defaults(func=_cmd_validate)

    oracle_p = sub.add_parser("oracle-check",
                              help="compare the solver against the exhaustive oracle")
    oracle_p.add_argument("--instances", type=int, default=50)
    oracle_p.add_argument("--seed", type=int, default=0)
    oracle_p.add_argument("--max-subcarriers", type=int, default=6)
    oracle_p.set_defaults(func=_cmd_oracle_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, UnitError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"error: Infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (StabilityViolation, DeadlineViolation, DelayBudgetExceeded) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STABILITY
    except TooLarge as exc:
        print(f"error: TooLarge: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except StcpsError as exc:  # pragma: no cover - residual mapping
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VIOLATIONS


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
