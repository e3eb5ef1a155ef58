"""Command-line entry point.

Each subcommand reads a scenario document and writes plot-ready files into
the output directory.  Exit codes: 0 success, 1 domain error, 2 usage error.
Set PSL_LOG=DEBUG|INFO|WARNING to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import exporters
from .controller import estimate_recoverability, solve_dp
from .errors import PhaseSpaceError
from .planner import find_transition, generate_nominal
from .scenario import (Scenario, parse_scenario, resolve_terrain, run_scenario,
                       tune_lateral_feet)

log = logging.getLogger("psloco")


def _setup_logging():
    level = os.environ.get("PSL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_scenario(args) -> Scenario:
    text = Path(args.scenario).read_text()
    s = parse_scenario(text)
    if args.seed is not None:
        if s.terrain_generate is None:
            raise PhaseSpaceError("--seed given but the scenario uses explicit terrain")
        s = replace(s, terrain_generate=replace(s.terrain_generate, seed=args.seed))
    if args.dt is not None:
        s = replace(s, integrator=replace(s.integrator, dt=args.dt))
    return s


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_terrain(args) -> int:
    s = _load_scenario(args)
    terrain, _ = resolve_terrain(s)
    out = _out_dir(args)
    exporters.export_terrain(terrain, out / "terrain.csv")
    log.info("wrote %s (%d steps)", out / "terrain.csv", len(terrain))
    return 0


def cmd_plan(args) -> int:
    s = _load_scenario(args)
    terrain, kfs = resolve_terrain(s)
    manifolds = generate_nominal(terrain, kfs, dt=s.integrator.dt)
    if s.automaton.tune_lateral and len(manifolds) > 1:
        manifolds = tune_lateral_feet(manifolds, dt=s.integrator.dt)
    out = _out_dir(args)
    for q, m in enumerate(manifolds):
        exporters.export_manifold(m, out / f"plan_step_{q:02d}.csv")
    tps = [find_transition(manifolds[q], manifolds[q + 1])
           for q in range(len(manifolds) - 1)]
    exporters.export_transitions(tps, out / "transitions.csv")
    log.info("planned %d steps, %d transitions", len(manifolds), len(tps))
    return 0


def _run_and_export(s: Scenario, out: Path) -> int:
    report = run_scenario(s)
    exporters.export_trajectory(report.trace, out / "trace.csv")
    with open(out / "report.json", "w", newline="\n") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if report.error:
        log.error("run failed: %s", report.error)
        return 1
    log.info("run complete: %d samples, %d transitions",
             len(report.trace.samples), len(report.transitions))
    return 0


def cmd_walk(args) -> int:
    s = _load_scenario(args)
    s = replace(s, disturbances=())
    return _run_and_export(s, _out_dir(args))


def cmd_disturb(args) -> int:
    s = _load_scenario(args)
    if not s.disturbances:
        raise PhaseSpaceError("scenario has no disturbance schedule")
    return _run_and_export(s, _out_dir(args))


def cmd_dp(args) -> int:
    s = _load_scenario(args)
    table = solve_dp(s.dp)
    out = _out_dir(args)
    exporters.export_policy(table, out / "policy.grid")
    log.info("policy solved over %d stage points x %d states",
             table.cost.shape[0], table.cost.shape[1])
    return 0


def cmd_bundle(args) -> int:
    s = _load_scenario(args)
    table = solve_dp(s.dp)
    mask = estimate_recoverability(s.dp, s.automaton.epsilon, table)
    out = _out_dir(args)
    exporters.export_policy(table, out / "policy.grid")
    exporters.export_policy(mask, out / "bundle.grid")
    log.info("recoverable cells: %d", mask.count)
    return 0


_COMMANDS = {
    "plan": cmd_plan,
    "walk": cmd_walk,
    "disturb": cmd_disturb,
    "dp": cmd_dp,
    "bundle": cmd_bundle,
    "terrain": cmd_terrain,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psloco",
        description="Phase-space locomotion planning and robust control")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--scenario", required=True, help="scenario YAML path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the terrain generator seed")
        p.add_argument("--dt", type=float, default=None,
                       help="override the integrator step [s]")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PhaseSpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
