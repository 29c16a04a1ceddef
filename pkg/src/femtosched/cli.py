"""Command-line front end: ``femtosched run | sweep | report``.

Exit codes: 0 success, 1 runtime failure (invariant violation, failed
trend check in ``report``), 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import SEED_ENV, default_seed, load_scenario, parse_override
from .errors import ConfigError, InvariantViolation
from .metrics import read_sweep_tables, write_run_csvs, write_sweep_tables
from .scenario import DEFAULT_UE_COUNTS, SCHEDULERS, SweepPlan, run_sweep
from .trends import evaluate

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _femto_list(text: str) -> list[bool]:
    table = {"off": False, "on": True}
    try:
        return [table[x.strip().lower()] for x in text.split(",") if x.strip()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"femto modes must be 'off' and/or 'on', got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="femtosched", description="LTE downlink PF / Log-Rule / FLS simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("scenario", nargs="?", help="scenario file (YAML); default: bundled paper.scenario")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. --set channel.fading=false (repeatable)")
        sp.add_argument("--out", "-o", type=Path, default=Path("."), help="output directory")

    run = sub.add_parser("run", help="one simulation run")
    scenario_args(run)
    run.add_argument("--seed", type=int, help=f"RNG seed (default: ${SEED_ENV}, then the scenario's seed)")
    run.add_argument("--event-log", type=Path, help="write one line per granted RB: tti cell rb flow cqi bits")
    run.add_argument("--check-invariants", action="store_true", help="verify conservation and RB ownership every TTI")

    sweep = sub.add_parser("sweep", help="UE-count x femto x scheduler grid, seed-averaged")
    scenario_args(sweep)
    sweep.add_argument("--ues", type=_int_list, default=list(DEFAULT_UE_COUNTS), help="UE counts, e.g. 5,10,15")
    sweep.add_argument("--femto", type=_femto_list, default=[False, True], help="femto modes: off,on")
    sweep.add_argument("--scheds", type=_str_list, default=list(SCHEDULERS), help="schedulers: pf,fls,logrule")
    sweep.add_argument("--seeds", type=_int_list, default=None, help="seeds (default 1,2,3)")
    sweep.add_argument("--duration", type=float, help="seconds per run (default: scenario duration_s)")
    sweep.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    report = sub.add_parser("report", help="PASS/FAIL trend summary of a sweep directory")
    report.add_argument("directory", type=Path, help="directory written by 'femtosched sweep'")
    return p


def _load(args):
    overrides = dict(parse_override(o) for o in args.overrides)
    return load_scenario(args.scenario, overrides)


def cmd_run(args) -> int:
    from .engine import Simulation

    cfg = _load(args)
    seed = args.seed if args.seed is not None else default_seed(cfg.seed)
    cfg.seed = seed
    log = open(args.event_log, "w") if args.event_log else None
    try:
        report = Simulation(cfg, seed, event_log=log, check_invariants=args.check_invariants).run()
    finally:
        if log is not None:
            log.close()
    metrics_path, summary_path = write_run_csvs(report, args.out)
    print(f"wrote {metrics_path} and {summary_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _load(args)
    seeds = args.seeds if args.seeds is not None else [default_seed(1) + i for i in range(3)]
    plan = SweepPlan(ue_counts=args.ues, femto_modes=args.femto, schedulers=args.scheds, seeds=seeds,
                     duration_s=args.duration, base=base, workers=args.workers)
    reports = run_sweep(plan)
    paths = write_sweep_tables(reports, args.out, plan.ue_counts, plan.femto_modes, plan.schedulers)
    print(f"wrote {len(paths)} CSV files to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        lookup, counts = read_sweep_tables(args.directory)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results = evaluate(lookup, counts)
    for r in results:
        print(r.line())
    return EXIT_RUNTIME if any(r.passed is False for r in results) else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if getattr(exc, "key", None) else ""
        print(f"config error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
