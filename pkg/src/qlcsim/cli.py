"""Command-line harness: run experiments, sweep field strengths, check configs.

Subcommands:
  run   --preset NAME | --config PATH, --out DIR
  sweep --preset exp3_sweep | --config PATH, --out DIR
  check --config PATH | --preset NAME

A run writes timeseries.csv (one row per completed step), snapshot_*.vtk at
the configured times, and run_report.txt.  Exit status 0 means clean
completion, 3 means the fixed-point iteration halted (the blow-up outcome),
2 a usage or configuration error, 1 anything unexpected.  The sweep launches
one process per strength; QLCSIM_SWEEP_PROCS bounds the worker count.
"""

from __future__ import annotations

import argparse
import math
import multiprocessing
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, preset_config, sweep_spec
from .diagnostics import constraint_residuals, energy_breakdown, field_extremes, mean_director_angle
from .stepping import Stepper
from .vtk_io import write_vtk

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3

CSV_COLUMNS = (
    "step,t,picard_iters,elastic,bulk,electric,coupling,polarization,"
    "total_energy,max_abs_entry,max_eigenvalue,max_trace_residual,"
    "max_asym_residual,mean_director_angle"
)


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _load(args) -> tuple:
    if args.config and args.preset:
        raise ConfigError("give either --preset or --config, not both")
    if args.config:
        return load_config(args.config)
    if args.preset:
        return preset_config(args.preset)
    raise ConfigError("one of --preset or --config is required")


class RunWriter:
    """Observer writing the timeseries CSV and VTK snapshots."""

    def __init__(self, stepper: Stepper, out_dir: Path):
        self.stepper = stepper
        self.out_dir = out_dir
        self.cfg = stepper.cfg
        self.rows = 0
        self.snapshots = []
        self._fh = open(out_dir / "timeseries.csv", "w", newline="\n")
        self._fh.write(CSV_COLUMNS + "\n")
        times = self.cfg.output.snapshot_times
        self._snapshot_steps = {int(round(t / self.cfg.dt)) for t in times}
        self.last_angle = math.nan

    def __call__(self, state, report):
        if state.n in self._snapshot_steps:
            name = f"snapshot_{state.n:06d}.vtk"
            write_vtk(state, self.out_dir / name)
            self.snapshots.append(name)
        if report is None:
            return  # initial state: snapshots only, rows start at step 1
        if state.n % self.cfg.output.csv_every:
            return
        energy = energy_breakdown(state, self.cfg.material, self.cfg.truncation)
        max_entry, max_eig = field_extremes(state.q)
        max_trace, max_asym = constraint_residuals(state.q)
        angle = mean_director_angle(state.q)
        self.last_angle = angle
        cells = [
            str(state.n),
            _fmt(state.t),
            str(report.picard_iters),
            _fmt(energy.elastic),
            _fmt(energy.bulk),
            _fmt(energy.electric),
            _fmt(energy.coupling),
            _fmt(energy.polarization),
            _fmt(energy.total),
            _fmt(max_entry),
            _fmt(max_eig),
            _fmt(max_trace),
            _fmt(max_asym),
            _fmt(angle),
        ]
        self._fh.write(",".join(cells) + "\n")
        self.rows += 1

    def close(self):
        self._fh.close()


def run_experiment(cfg, warnings, out_dir, label="run") -> tuple[int, dict]:
    """Execute one configuration, writing artifacts into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stepper = Stepper(cfg)
    writer = RunWriter(stepper, out_dir)
    started = time.perf_counter()
    summary = stepper.run(writer)
    elapsed = time.perf_counter() - started
    writer.close()

    outside_theory = bool(np.any(stepper.q_boundary_values != 0.0))
    report_lines = [
        f"qlcsim {label}",
        f"termination: {summary.termination}",
        f"steps completed: {summary.steps_completed} of {cfg.n_steps}",
        f"last time: {_fmt(summary.steps_completed * cfg.dt)}",
        f"max |Q entry| over run: {_fmt(summary.max_abs_entry)}",
        f"dissipation sum dt*sum||D_t Q||^2: {_fmt(summary.dissipation_sum)}",
        f"wall time: {elapsed:.2f} s",
        f"csv rows: {writer.rows}",
        f"snapshots: {', '.join(writer.snapshots) if writer.snapshots else 'none'}",
    ]
    if outside_theory:
        report_lines.append(
            "note: nonzero Dirichlet data for Q is outside the analyzed setting "
            "(the stability theory assumes Q = 0 on the boundary)"
        )
    for w in warnings:
        report_lines.append(w)
    if summary.termination == "nonconvergence":
        report_lines.append(f"failure: {summary.failure_detail}")
        final_entry, final_eig = field_extremes(summary.final_state.q)
        report_lines.append(
            f"last converged state: t = {_fmt(summary.final_state.t)}, "
            f"max |Q entry| = {_fmt(final_entry)}, max eigenvalue = {_fmt(final_eig)}"
        )
    (out_dir / "run_report.txt").write_text("\n".join(report_lines) + "\n")

    status = EXIT_OK if summary.termination == "completed" else EXIT_NONCONVERGENCE
    return status, {
        "summary": summary,
        "rows": writer.rows,
        "angle": writer.last_angle,
        "stepper": stepper,
    }


def _sweep_job(payload):
    strength, preset_name, config_path, out_dir = payload
    if config_path is not None:
        cfg, warnings = load_config(config_path)
    else:
        cfg, warnings = preset_config(preset_name)
    spec = sweep_spec(cfg)
    scaled = f"(({_fmt(strength)})/10)*({spec.base_g})"
    from .config import _expr_fn

    cfg.g = _expr_fn(scaled, "g")
    cfg.labels["g"] = scaled
    status, result = run_experiment(
        cfg, warnings, out_dir, label=f"sweep s={strength:g}"
    )
    angle = mean_director_angle(result["summary"].final_state.q)
    return strength, status, angle


def cmd_run(args) -> int:
    cfg, warnings = _load(args)
    for w in warnings:
        print(w, file=sys.stderr)
    status, result = run_experiment(
        cfg, warnings, args.out, label=args.preset or str(args.config)
    )
    summary = result["summary"]
    print(f"{summary.termination}: {summary.steps_completed} steps, "
          f"{result['rows']} csv rows -> {args.out}")
    return status


def cmd_sweep(args) -> int:
    cfg, warnings = _load(args)
    for w in warnings:
        print(w, file=sys.stderr)
    spec = sweep_spec(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (s, args.preset, args.config, out_dir / f"s_{s:g}")
        for s in spec.strengths
    ]
    procs = int(os.environ.get("QLCSIM_SWEEP_PROCS", "0")) or min(
        len(jobs), os.cpu_count() or 1
    )
    if procs > 1:
        with multiprocessing.Pool(processes=procs) as pool:
            results = pool.map(_sweep_job, jobs)
    else:
        results = [_sweep_job(job) for job in jobs]
    results.sort(key=lambda row: row[0])

    worst = EXIT_OK
    with open(out_dir / "sweep.csv", "w", newline="\n") as fh:
        fh.write("strength,mean_director_angle,normalized_angle\n")
        for strength, status, angle in results:
            worst = max(worst, status)
            fh.write(
                f"{_fmt(strength)},{_fmt(angle)},{_fmt(angle / (math.pi / 2))}\n"
            )
    print(f"sweep of {len(results)} strengths -> {out_dir / 'sweep.csv'}")
    return worst


def cmd_check(args) -> int:
    cfg, warnings = _load(args)
    for w in warnings:
        print(w)
    print(
        f"ok: {cfg.nx}x{cfg.ny} mesh, dt = {cfg.dt}, {cfg.n_steps} steps to "
        f"t = {cfg.t_final}, truncation {cfg.truncation.mode}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qlcsim",
        description="Finite-element Q-tensor liquid-crystal simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out):
        p.add_argument("--preset", help="experiment preset name")
        p.add_argument("--config", type=Path, help="config file path")
        if needs_out:
            p.add_argument("--out", type=Path, required=True, help="output directory")

    common(sub.add_parser("run", help="run one experiment"), True)
    common(sub.add_parser("sweep", help="run a field-strength sweep"), True)
    common(sub.add_parser("check", help="validate a configuration"), False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_check(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
