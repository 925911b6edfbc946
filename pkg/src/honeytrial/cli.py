"""Command-line entry point: ``honeytrial {validate,run,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import report as rpt
from .allocation import equal_split
from .config import ConfigFile, load_config
from .engine import Method, get_num_to_deploy, run_trial
from .errors import (ConfigInvariantError, ConfigParseError, CorruptReportError,
                     MissingReportError, TrialError)
from .records import Arm
from .sim_env import HazardSpec, ScriptedFleet, SimulatedFleet
from .stat_core import power_sample_size

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_INVARIANT = 4
EXIT_RUNTIME = 5
EXIT_IO = 6

log = logging.getLogger("honeytrial")


def _plan_lines(cfg: ConfigFile) -> List[str]:
    study = cfg.study
    lines = [f"method={study.method.value}"]
    if study.method is Method.VANILLA:
        n = get_num_to_deploy(study)
        lines.append(f"N={n} corrupted participants over one {study.n_stages}-stage window")
        return lines
    n_power = power_sample_size(study.initial_incidence, study.error_rates)
    lines.append(f"N_total={n_power}")
    n = study.stage_n_total or n_power
    if study.stage_n_total is not None:
        lines.append(f"stage_n_total={n} (fixed in config)")
    plan = equal_split(n, study.regions)
    lines.append("stage 1 plan:")
    for arm in Arm:
        counts = " ".join(f"{r}={plan.count(r, arm)}" for r in study.regions)
        lines.append(f"  {arm.value}: {counts} (total {plan.arm_total(arm)})")
    return lines


def cmd_validate(args) -> int:
    cfg = _load(args)
    for line in _plan_lines(cfg):
        print(line)
    print("config OK")
    return EXIT_OK


def _load(args) -> ConfigFile:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None or getattr(args, "method", None) is not None:
        cfg = cfg.with_overrides(seed=getattr(args, "seed", None), method=getattr(args, "method", None))
    return cfg


def make_driver(cfg: ConfigFile):
    if isinstance(cfg.environment, HazardSpec):
        return SimulatedFleet(cfg.environment, cfg.study.stage_duration)
    return ScriptedFleet(cfg.environment)


def _tables(report: rpt.TrialReport) -> str:
    return rpt.render_stage_table(report) + "\n" + rpt.render_summary(report)


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.output.directory or "honeytrial-out")
    out.mkdir(parents=True, exist_ok=True)
    events_path = out / rpt.EVENTS_FILE
    events_path.write_text("", encoding="utf-8")

    report = run_trial(cfg.study, make_driver(cfg),
                       event_sink=lambda records: rpt.append_events(records, events_path))
    report.config["environment"] = cfg.raw.get("environment", {}).get("kind")

    rpt.save_report(report, out)
    if "csv" in cfg.output.formats and any(s.curves for s in report.stages):
        rpt.export_report_curves(report, out / rpt.CURVES_FILE)
    if "text" in cfg.output.formats:
        (out / rpt.STAGE_TABLE_FILE).write_text(rpt.render_stage_table(report), encoding="utf-8")
        (out / rpt.SUMMARY_FILE).write_text(rpt.render_summary(report), encoding="utf-8")

    print(_tables(report), end="")
    print(f"stop_reason={report.stop_reason}")
    print(f"deployed control={report.deployed[Arm.CONTROL]} "
          f"corrupted={report.deployed[Arm.CORRUPTED]} total={report.total_deployed} "
          f"attacks={report.attacks}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = rpt.load_report(args.directory)
    print(_tables(report), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="honeytrial",
        description="Run vanilla, randomized-control and adaptive honeypot deployment trials.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config and print the stage-1 plan")
    p.add_argument("--config", required=True, help="YAML study config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser(
        "run", help="execute a trial and write artifacts",
        description="Execute the configured trial. --seed and --method override the config "
                    "file (command line wins); --seed also replaces the hazard seed. "
                    "Overriding to vanilla deploys get_num_to_deploy(budget) participants.")
    p.add_argument("--config", required=True, help="YAML study config")
    p.add_argument("--seed", type=int, help="override study.rng_seed")
    p.add_argument("--method", choices=[m.value for m in Method], help="override study.method")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="re-render tables from a run directory")
    p.add_argument("directory", nargs="?", help="run output directory")
    p.add_argument("--out", dest="out_dir", help="run output directory (alternative to positional)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        args.directory = args.directory or args.out_dir
        if not args.directory:
            print("error: report needs a run directory", file=sys.stderr)
            return EXIT_IO
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigInvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except MissingReportError as exc:
        print(f"missing report: {exc}", file=sys.stderr)
        return EXIT_IO
    except CorruptReportError as exc:
        print(f"corrupt report: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrialError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
