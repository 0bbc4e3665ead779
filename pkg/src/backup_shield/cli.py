"""Command-line entry point: ``backup-shield simulate|sets|compare|selftest``.

Exit codes: 0 success, 1 configuration or I/O error, 2 safety regression
(backup filter violated a constraint, nesting violated, self-test failed).
Constraint violations by the HOCBF baseline are findings, not errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import FILTER_CHOICES, RunConfig, dump_config, load_config, parse_grid
from .errors import ConfigError
from .sets import GridSpec, compute_grids, verify_nesting, write_grid_csv
from .sim import run, summarize, write_summary_csv, write_trajectory_csv

EXIT_OK, EXIT_ERROR, EXIT_SAFETY = 0, 1, 2
SAFETY_TOL = 1e-6

log = logging.getLogger("backup_shield")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out: Path, cfg: RunConfig, command: str, started: str, outputs: list[Path]) -> Path:
    """Resolved config followed by run metadata; written after every other artefact."""
    lines = [dump_config(cfg).rstrip("\n"), "", "[manifest]",
             f"command = {command}",
             f"version = {__version__}",
             f"python = {platform.python_version()}",
             f"numpy = {np.__version__}",
             f"started = {started}",
             f"finished = {_now()}"]
    lines += [f"output{i} = {p.name}" for i, p in enumerate(outputs)]
    path = out / "manifest.ini"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "filter", None) is not None:
        changes["filter"] = args.filter
    if getattr(args, "grid", None) is not None:
        n1, n2 = parse_grid(args.grid)
        changes["grid"] = dataclasses.replace(cfg.grid, n1=n1, n2=n2)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _simulate(cfg: RunConfig, out: Path, plots: bool):
    logs, outputs = [], []
    for choice in cfg.filters():
        for i, lg in enumerate(run(cfg.sim_config(choice))):
            logs.append(lg)
            outputs.append(write_trajectory_csv(lg, out / f"traj_{choice}_{i}.csv"))
    rows = summarize(logs)
    outputs.append(write_summary_csv(rows, out / "summary.csv"))
    for row in rows:
        print(f"{row['filter']:>6s} x0=({row['x1_0']:g}, {row['x2_0']:g})  "
              f"max_violation={row['max_violation']:.3e}  infeasible_steps={row['infeasible_steps']}"
              + (f"  FAILURE {row['failure']}" if row["failure"] else ""))
    if plots:
        from .plotting import plot_trajectories

        grids = compute_grids(cfg.params, GridSpec(cfg.grid.x1_range, cfg.grid.x2_range, 151, 151))
        outputs.append(plot_trajectories(logs, cfg.params, out / "trajectories.png", grids))
    unsafe = [lg for lg in logs if lg.filter_choice == "backup"
              and (lg.max_violation > SAFETY_TOL or lg.failure)]
    return outputs, EXIT_SAFETY if unsafe else EXIT_OK


def cmd_simulate(args) -> int:
    started = _now()
    cfg = _resolve(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs, code = _simulate(cfg, out, args.plots)
    write_manifest(out, cfg, "simulate", started, outputs)
    if code == EXIT_SAFETY:
        print("backup filter violated a constraint", file=sys.stderr)
    return code


def cmd_compare(args) -> int:
    started = _now()
    cfg = dataclasses.replace(_resolve(args), filter="both")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs, code = _simulate(cfg, out, args.plots)
    write_manifest(out, cfg, "compare", started, outputs)
    return code


def cmd_sets(args) -> int:
    started = _now()
    cfg = _resolve(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grids = compute_grids(cfg.params, cfg.grid)
    report = verify_nesting(grids)
    outputs = [write_grid_csv(grids, out / "sets_grid.csv")]
    report_path = out / "nesting_report.txt"
    report_path.write_text("\n".join(report.lines()) + "\n", encoding="utf-8")
    outputs.append(report_path)
    print("\n".join(report.lines()[:1] + [ln for ln in report.lines() if not ln.startswith("  ")][1:]))
    if args.plots:
        from .plotting import plot_sets

        outputs.append(plot_sets(grids, cfg.params, out / "sets.png"))
    write_manifest(out, cfg, "sets", started, outputs)
    return EXIT_OK if report.ok else EXIT_SAFETY


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(expm_perturbation=args.inject_expm_fault)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("selftest: " + ("all checks passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_SAFETY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="backup-shield", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=False, sim=False):
        p.add_argument("--config", help="config file (defaults to the built-in pendulum scenario)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--plots", action="store_true", help="also render PNG figures")
        if grid:
            p.add_argument("--grid", help="grid size N1xN2")
        if sim:
            p.add_argument("--dt", type=float, help="control step [s]")
            p.add_argument("--filter", choices=FILTER_CHOICES)

    common(sub.add_parser("simulate", help="closed-loop runs, one CSV per trajectory"), sim=True)
    common(sub.add_parser("compare", help="backup filter and HOCBF baseline side by side"), sim=True)
    common(sub.add_parser("sets", help="set membership grids and nesting report"), grid=True)
    p = sub.add_parser("selftest", help="embedded oracle checks")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--out", help=argparse.SUPPRESS)
    p.add_argument("--inject-expm-fault", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "sets": cmd_sets, "selftest": cmd_selftest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
