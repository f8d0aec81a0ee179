"""``alas`` command line: solve, validate, repair, disrupt, convert, replay, report."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .converters import (UnsupportedConstruct, UnsupportedFeature, emit_argo, emit_asl, ingest_argo, ingest_asl,
                         roundtrip_check)
from .execlog import ReplayDivergence, VersionedLog, replay
from .ir import IRSyntaxError, SchemaError, check_well_formed, load_ir
from .jssp import FormatError, Schedule, load_instance, parse_breakdown, parse_shock, validate_schedule
from .jssp.events import downtime_of
from .lcrp import repair, repair_with_escalation
from .pipeline import PipelineHalted, RunConfig, default_registry, load_step_policy, run_pipeline
from .policy_runtime import FaultPlan
from .report import NoResults, emit_report

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_HALTED = 0, 1, 2, 3
PLAN_SUFFIX = ".plan.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _print(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _seed(args) -> int:
    env = os.environ.get("ALAS_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"ALAS_SEED must be an integer, got {env!r}") from None
    return args.seed


def _load_schedule(path) -> Schedule:
    return Schedule.from_json(Path(path).read_text(encoding="utf-8"))


def _events(args) -> tuple:
    try:
        events = [parse_breakdown(b) for b in args.breakdown or ()]
        events += [parse_shock(s, args.shock_at) for s in getattr(args, "shock", None) or ()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return tuple(events)


def _config(args, disruptions=()) -> RunConfig:
    seed = _seed(args)
    if args.config:
        cfg = replace(RunConfig.load(args.config), seed=seed)
        if disruptions:
            cfg = replace(cfg, disruptions=cfg.disruptions + tuple(disruptions))
    else:
        if not args.instance:
            raise UsageError("one of --instance or --config is required")
        instance = load_instance(args.instance)
        cfg = RunConfig(instance, args.planner, seed, args.budget, tuple(disruptions), args.wip,
                        instance_path=str(args.instance))
    if args.faults:
        cfg = replace(cfg, faults=FaultPlan.load(args.faults))
    if args.policy:
        cfg = replace(cfg, policy=load_step_policy(args.policy))
    plan_path = args.plan
    if plan_path is None and getattr(args, "auto_plan", False) and cfg.instance_path:
        candidate = Path(cfg.instance_path).with_suffix(PLAN_SUFFIX)
        if candidate.exists():
            plan_path = candidate
    if plan_path is not None:
        # a supplied plan is the committed baseline, so it is not re-optimized
        cfg = replace(cfg, plan=_load_schedule(plan_path), optimize=False)
    if args.no_optimize:
        cfg = replace(cfg, optimize=False)
    return cfg


def _run(args, disruptions=()) -> int:
    cfg = _config(args, disruptions)
    log = VersionedLog(args.log) if args.log else VersionedLog()
    try:
        result = run_pipeline(cfg, log=log)
    except PipelineHalted as exc:
        _print({"halted": True, "reason": str(exc), "restoreVersion": exc.restore_version, "runId": cfg.run_id})
        print(f"pipeline halted: {exc}; last feasible restore point: {exc.restore_version}", file=sys.stderr)
        return EXIT_HALTED
    doc = result.to_dict()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{result.run_id}.result.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    _print(doc)
    return EXIT_OK if result.valid else EXIT_INVALID


def cmd_solve(args) -> int:
    return _run(args)


def cmd_disrupt(args) -> int:
    events = _events(args)
    if not events:
        raise UsageError("disrupt needs at least one --breakdown or --shock")
    return _run(args, events)


def cmd_validate(args) -> int:
    instance = load_instance(args.instance)
    rows = json.loads(Path(args.schedule).read_text(encoding="utf-8"))
    report = validate_schedule(rows, instance, downtime_of(_events(args)))
    _print(report.to_dict())
    return EXIT_OK if report.valid else EXIT_INVALID


def cmd_repair(args) -> int:
    instance = load_instance(args.instance)
    schedule = _load_schedule(args.schedule)
    windows = downtime_of(_events(args))
    if args.escalate:
        result = repair_with_escalation(schedule, instance, args.budget, downtime=windows, seed=_seed(args))
    else:
        result = repair(schedule, instance, budget=args.budget, downtime=windows)
    doc = result.to_dict()
    doc["schedule"] = result.schedule.to_list()
    if args.out:
        Path(args.out).write_text(result.schedule.to_json() + "\n", encoding="utf-8")
    _print(doc)
    return EXIT_OK if result.errors_after == 0 else EXIT_INVALID


_EMIT = {"asl": emit_asl, "argo": emit_argo}
_INGEST = {"asl": ingest_asl, "argo": ingest_argo}


def cmd_convert(args) -> int:
    if bool(args.to) == bool(args.source):
        raise UsageError("convert needs exactly one of --to or --from")
    if args.source:
        ir = _INGEST[args.source](Path(args.input).read_text(encoding="utf-8"))
        text = ir.to_json() + "\n"
        report = None
    else:
        ir = load_ir(args.input)
        diags = check_well_formed(ir)
        if diags:
            _print({"wellFormed": False, "diagnostics": [d.to_dict() for d in diags]})
            return EXIT_INVALID
        text = _EMIT[args.to](ir)
        report = roundtrip_check(ir, args.to)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _print(report.to_dict() if report else {"written": args.out, "nodes": len(ir.nodes)})
    else:
        sys.stdout.write(text)
        if report:
            print(json.dumps(report.to_dict()), file=sys.stderr)
    return EXIT_OK if report is None or report.parity_ok else EXIT_INVALID


def cmd_replay(args) -> int:
    log = VersionedLog.load(args.log)
    try:
        out = replay(log, default_registry(), _seed(args))
    except ReplayDivergence as exc:
        _print({"parityOk": False, "index": exc.index,
                "recorded": exc.recorded.to_dict() if exc.recorded else None,
                "replayed": exc.replayed.to_dict() if exc.replayed else None})
        return EXIT_INVALID
    _print(out)
    return EXIT_OK


def cmd_report(args) -> int:
    _print(emit_report(args.results, args.out))
    return EXIT_OK


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="instance file (OR-library text)")
    p.add_argument("--config", help="RunConfig TOML or JSON file")
    p.add_argument("--planner", default="spt", help="seed planner dispatch rule")
    p.add_argument("--budget", type=int, default=5, help="repair iterations per attempt")
    p.add_argument("--faults", help="fault plan JSON")
    p.add_argument("--policy", help="IR document whose default policy governs pipeline steps")
    p.add_argument("--plan", help="committed schedule JSON used instead of the seed planner")
    p.add_argument("--no-optimize", action="store_true")
    p.add_argument("--out-dir", default=".", help="where <run-id>.result.json is written")


def _disruption_flags(p: argparse.ArgumentParser, shocks: bool = True) -> None:
    p.add_argument("--breakdown", action="append", metavar="M:FROM:TO", help="machine outage, repeatable")
    if shocks:
        p.add_argument("--shock", action="append", metavar="J:STEP:DELTA", help="duration shock, repeatable")
        p.add_argument("--shock-at", type=int, default=0, help="clock time at which shocks fire")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="alas", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="run seed (ALAS_SEED overrides)")
    logged = argparse.ArgumentParser(add_help=False, parents=[common])
    logged.add_argument("--log", help="write the NDJSON execution log here")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[logged], help="run the seven-step pipeline")
    _run_flags(p)
    p.add_argument("--wip", type=float, default=1.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_solve, breakdown=None)

    p = sub.add_parser("disrupt", parents=[logged], help="run the pipeline with disruptions")
    _run_flags(p)
    _disruption_flags(p)
    p.add_argument("--wip", type=float, default=1.0, help="WIP penalty per unit advanced")
    p.set_defaults(func=cmd_disrupt, auto_plan=True)

    p = sub.add_parser("validate", parents=[common], help="check a schedule against an instance")
    p.add_argument("--schedule", required=True)
    p.add_argument("--instance", required=True)
    _disruption_flags(p, shocks=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("repair", parents=[common], help="repair a schedule in place")
    p.add_argument("--schedule", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--budget", type=int, default=5)
    p.add_argument("--escalate", action="store_true", help="widen the neighborhood, then recompute globally")
    p.add_argument("--out", help="write the repaired schedule here")
    _disruption_flags(p, shocks=False)
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("convert", parents=[common], help="emit or ingest ASL / Argo documents")
    p.add_argument("--input", required=True)
    p.add_argument("--to", choices=sorted(_EMIT))
    p.add_argument("--from", dest="source", choices=sorted(_INGEST))
    p.add_argument("--out")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("replay", parents=[common], help="re-run a recorded log and compare event streams")
    p.add_argument("--log", required=True, help="recorded NDJSON log")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", parents=[common], help="CSV and Gantt data over result files")
    p.add_argument("--results", required=True, help="directory of *.result.json")
    p.add_argument("--out", help="output directory (defaults to --results)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, FormatError, IRSyntaxError, SchemaError, NoResults,
            UnsupportedFeature, UnsupportedConstruct, json.JSONDecodeError, ValueError) as exc:
        print(f"alas: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
