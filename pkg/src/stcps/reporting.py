"""Report emission: a JSON summary plus plot-ready CSV files.

Output layout for one run (all schemas carry a header row):

  report.json          summary, resolved config, seeds, schema_version
  trajectory_<id>.csv  t_s, x1..xn, u1..um, deviation_norm
  power_trace.csv      t_s, power_ul_w, power_bs_w   (step levels)
  solver_log.csv       one row per allocation epoch
  samples.csv          one row per accepted sample
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, List

from .engine import MetricsReport


def _write_csv(path: Path, header: List[str], rows: Iterable[Iterable]) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def write_run_outputs(report: MetricsReport, outdir) -> Path:
    """Write the full output bundle for one run; returns the directory."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    (outdir / "report.json").write_text(
        json.dumps(report.summary_dict(), indent=2, sort_keys=False) + "\n")

    for pid, traj in sorted(report.trajectories.items()):
        n = traj["x"].shape[1]
        m = traj["u"].shape[1]
        header = (["t_s"] + [f"x{i + 1}" for i in range(n)]
                  + [f"u{i + 1}" for i in range(m)] + ["deviation_norm"])
        rows = ([traj["t_s"][k]] + list(traj["x"][k]) + list(traj["u"][k])
                + [traj["deviation"][k]] for k in range(len(traj["t_s"])))
        _write_csv(outdir / f"trajectory_{pid}.csv", header, rows)

    _write_csv(outdir / "power_trace.csv",
               ["t_s", "power_ul_w", "power_bs_w"],
               zip(report.power_trace_t_s, report.power_trace_ul_w,
                   report.power_trace_bs_w))

    solver_header = ["t_s", "kind", "n_plants", "plants", "iterations",
                     "converged", "objective_w", "power_ul_w", "power_bs_w",
                     "kkt_residual"]
    _write_csv(outdir / "solver_log.csv", solver_header,
               ([row[k] for k in solver_header] for row in report.solver_log))

    sample_header = ["plant_id", "k", "t_s", "hold_time_raw_s",
                     "capped_by_hmax", "delay_ul_s", "delay_dl_s",
                     "delay_total_s", "deviation_bound"]
    _write_csv(outdir / "samples.csv", sample_header,
               ([("" if row.get(k) is None else row.get(k)) for k in sample_header]
                for row in report.samples))
    return outdir


def write_sweep_summary(reports, a_values, outdir) -> Path:
    """Aggregate CSV across a weight sweep (one row per weight)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for a, report in zip(a_values, reports):
        rows.append([a, report.energy_ul_j, report.energy_bs_j,
                     report.energy_ul_j + report.energy_bs_j,
                     sum(report.per_plant_tx_count.values()),
                     len(report.violations)])
    _write_csv(outdir / "sweep_summary.csv",
               ["weight_ul", "energy_ul_j", "energy_bs_j", "energy_total_j",
                "tx_total", "violations"], rows)
    return outdir
