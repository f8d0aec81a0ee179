"""The seven-step execution loop: plan, validate, repair, revalidate,
optimize, final check, supervise. Disruptions fire against the committed
schedule between the final check and supervision."""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .execlog import LogEntry, VersionedLog
from .ir.model import Backoff, Policy, Retry, Timeout
from .ir.parse import load_ir
from .jssp.events import DisruptionEvent, Downtime, downtime_of, parse_breakdown, parse_shock, shocked_instance
from .jssp.faults import REPAIR_FAULTS, inject_fault as corrupt
from .jssp.instance import JsspInstance, load_instance
from .jssp.planners import seed_plan
from .jssp.schedule import Schedule, critical_operations, makespan
from .jssp.validate import ValidationReport, validate_schedule
from .lcrp.compensate import WipModel
from .lcrp.contain import contain_disruption
from .lcrp.optimize import optimize
from .lcrp.repair import repair, repair_with_escalation
from .lcrp.result import EditRadius, loose_radius
from .policy_runtime import AttemptContext, FaultPlan, VirtualClock, run_with_policy

PIPELINE = "pipeline"
STEP_POLICY = Policy(retry=Retry(3, ("Timeout", "ToolFailure")), backoff=Backoff("exponential", 0.5, 8.0, 0),
                     timeout=Timeout(30))
CORE_EVENTS = ("StartNode", "EndNode", "ValidatePass", "ValidateFail", "RepairStart", "RepairApply", "RepairCommit")


class PipelineHalted(RuntimeError):
    """Revalidation still fails after repair escalation ran out."""

    def __init__(self, message: str, restore_version: int | None, log: VersionedLog, schedule: Schedule | None):
        super().__init__(message)
        self.restore_version = restore_version
        self.log = log
        self.schedule = schedule


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    instance: JsspInstance
    planner_rule: str = "spt"
    seed: int = 0
    repair_budget: int = 5
    disruptions: tuple[DisruptionEvent, ...] = ()
    wip_penalty: float = 1.0
    faults: FaultPlan = field(default_factory=FaultPlan)
    policy: Policy = STEP_POLICY
    plan: Schedule | None = None
    optimize: bool = True
    halt_on_failure: bool = True
    global_fallback: bool = True
    instance_path: str | None = None

    def __post_init__(self):
        if self.repair_budget < 1:
            raise ValueError("repairBudget must be >= 1")

    @property
    def run_id(self) -> str:
        return f"{self.instance.name}-{self.planner_rule}-s{self.seed}"

    def to_payload(self) -> dict:
        """Everything needed to re-run, except the seed, which replay supplies."""
        return {
            "instance": self.instance.to_dict(),
            "instancePath": self.instance_path,
            "plannerRule": self.planner_rule,
            "repairBudget": self.repair_budget,
            "disruptions": [e.to_dict() for e in self.disruptions],
            "wipPenalty": self.wip_penalty,
            "faults": self.faults.to_dict(),
            "policy": self.policy.to_dict(),
            "plan": self.plan.to_list() if self.plan is not None else None,
            "optimize": self.optimize,
            "haltOnFailure": self.halt_on_failure,
            "globalFallback": self.global_fallback,
        }

    @classmethod
    def from_payload(cls, d: Mapping, seed: int) -> "RunConfig":
        return cls(
            instance=JsspInstance.from_dict(d["instance"]),
            planner_rule=d["plannerRule"],
            seed=seed,
            repair_budget=d["repairBudget"],
            disruptions=tuple(DisruptionEvent.from_dict(e) for e in d["disruptions"]),
            wip_penalty=d["wipPenalty"],
            faults=FaultPlan.from_dict(d["faults"]),
            policy=Policy.from_dict(d["policy"]),
            plan=Schedule.from_list(d["plan"]) if d.get("plan") is not None else None,
            optimize=d["optimize"],
            halt_on_failure=d["haltOnFailure"],
            global_fallback=d["globalFallback"],
            instance_path=d.get("instancePath"),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        """Read a TOML or JSON config whose ``instance`` names an instance file."""
        p = Path(path)
        text = p.read_text(encoding="utf-8")
        if p.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            d = tomllib.loads(text)
        else:
            d = json.loads(text)
        inst_path = (p.parent / d["instance"]).resolve() if not Path(d["instance"]).is_absolute() else d["instance"]
        events = [parse_breakdown(b) for b in d.get("breakdowns", [])]
        events += [parse_shock(s, d.get("shockAt", 0)) for s in d.get("shocks", [])]
        faults = FaultPlan.load(p.parent / d["faults"]) if d.get("faults") else FaultPlan()
        policy = load_step_policy(p.parent / d["policyFile"]) if d.get("policyFile") else STEP_POLICY
        return cls(load_instance(inst_path), d.get("planner", "spt"), int(d.get("seed", 0)),
                   int(d.get("repairBudget", 5)), tuple(events), float(d.get("wipPenalty", 1.0)), faults,
                   policy, instance_path=str(inst_path))


def load_step_policy(path) -> Policy:
    """The policy governing pipeline steps, taken from an IR document: its
    workflow default if declared, else its first policy."""
    ir = load_ir(path)
    name = ir.default_policy_name()
    if name is not None:
        return ir.policies[name]
    if not ir.policies:
        raise ValueError(f"{path}: no policies declared")
    return next(iter(ir.policies.values()))


@dataclass(frozen=True)
class RunResult:
    final_schedule: Schedule
    makespan: int
    optimization_skipped: bool
    repair_iterations: int
    edit_radius: EditRadius
    log_path: str | None
    critical_ops: tuple[tuple[str, int], ...]
    seed: int = 0
    instance: str = ""
    valid: bool = True
    skip_reason: str | None = None
    wip_units: float = 0
    disruptions_handled: int = 0
    wall_time: float = field(default=0.0, compare=False)
    run_id: str = ""
    downtime: tuple[Downtime, ...] = ()

    def to_dict(self) -> dict:
        return {
            "runId": self.run_id,
            "instance": self.instance,
            "seed": self.seed,
            "makespan": self.makespan,
            "valid": self.valid,
            "optimizationSkipped": self.optimization_skipped,
            "skipReason": self.skip_reason,
            "repairIterations": self.repair_iterations,
            "editRadius": self.edit_radius.to_dict(),
            "wipUnits": self.wip_units,
            "disruptionsHandled": self.disruptions_handled,
            "criticalOps": [list(k) for k in self.critical_ops],
            "logPath": self.log_path,
            "wallTime": self.wall_time,
            "downtime": [w.to_dict() for w in self.downtime],
            "finalSchedule": self.final_schedule.to_list(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunResult":
        r = d["editRadius"]
        return cls(Schedule.from_list(d["finalSchedule"]), d["makespan"], d["optimizationSkipped"],
                   d["repairIterations"], EditRadius(r["opsTouched"], r["jobsTouched"]), d.get("logPath"),
                   tuple(tuple(k) for k in d.get("criticalOps", [])), d.get("seed", 0), d.get("instance", ""),
                   d.get("valid", True), d.get("skipReason"), d.get("wipUnits", 0), d.get("disruptionsHandled", 0),
                   d.get("wallTime", 0.0), d.get("runId", ""),
                   tuple(Downtime(w["machine"], w["from"], w["to"]) for w in d.get("downtime", [])))


# step tasks; each is deterministic in its arguments

def plan_task(instance: JsspInstance, rule: str, seed: int) -> Schedule:
    return seed_plan(instance, rule, seed)


def isolated_validate(candidate: Schedule, log_slice: Sequence[LogEntry], instance: JsspInstance) -> ValidationReport:
    """Check a candidate using only the problem instance and a log slice;
    downtime and duration shocks come from the disruption entries in the slice."""
    events = [DisruptionEvent.from_dict(e.payload["event"]) for e in log_slice
              if e.event_type == "StartNode" and "event" in e.payload]
    return validate_schedule(candidate, shocked_instance(instance, events), downtime_of(events))


def default_registry() -> dict[str, Callable]:
    return {
        "plan": plan_task,
        "validate": isolated_validate,
        "repair": repair,
        "escalate": repair_with_escalation,
        "optimize": optimize,
        "contain": contain_disruption,
    }


def _report_payload(schedule: Schedule, report: ValidationReport, **extra) -> dict:
    payload = {"schedule": schedule.digest(), "errors": len(report.errors), "codes": report.codes()}
    if schedule.entries:
        payload["makespan"] = makespan(schedule)
    payload.update(extra)
    return payload


class _Run:
    def __init__(self, config: RunConfig, registry: Mapping[str, Callable], log: VersionedLog):
        self.cfg = config
        self.reg = registry
        self.log = log
        self.corr = config.run_id
        self.clock = VirtualClock()
        self.instance = config.instance
        self.events: list[DisruptionEvent] = []

    def emit(self, event: str, node: str, payload: Mapping | None = None) -> int:
        return self.log.append(event, node, payload, self.corr)

    def step(self, node: str, fn: Callable[[AttemptContext], object]):
        out = run_with_policy(fn, self.cfg.policy, self.cfg.faults, self.log, self.clock, node_id=node,
                              seed=self.cfg.seed, correlation_id=self.corr)
        if out.status != "success":
            self.halt(f"step {node!r} ended {out.status} ({out.error_class})", None)
        return out.result

    def validate(self, schedule: Schedule, node: str, **extra) -> ValidationReport:
        window = self.log.slice(node_id="disrupt", correlation_id=self.corr, event_types=("StartNode",),
                                max_entries=max(1, len(self.cfg.disruptions)))
        report = self.step(node, lambda ctx: self.reg["validate"](schedule, window, self.cfg.instance))
        self.emit("ValidatePass" if report.valid else "ValidateFail", node, _report_payload(schedule, report, **extra))
        return report

    def commit(self, node: str, schedule: Schedule, payload: dict) -> None:
        self.emit("RepairCommit", node, payload)
        self.log.snapshot({"schedule": schedule.to_list(), "instance": self.instance.to_dict()})

    def halt(self, message: str, schedule: Schedule | None):
        self.emit("EndNode", PIPELINE, {"halted": True, "reason": message})
        raise PipelineHalted(message, self.log.latest_snapshot(), self.log, schedule)

    def plan(self) -> Schedule:
        cfg = self.cfg
        self.emit("StartNode", "plan", {"rule": cfg.planner_rule, "seed": cfg.seed,
                                        "supplied": cfg.plan is not None})

        def task(ctx: AttemptContext) -> Schedule:
            sched = cfg.plan if cfg.plan is not None else self.reg["plan"](self.instance, cfg.planner_rule, cfg.seed)
            if ctx.injection is not None and ctx.injection.fault == "constraintViolation":
                label = ctx.injection.label or "precedence-swap"
                if label not in REPAIR_FAULTS:
                    raise ValueError(f"unknown constraint violation {label!r}")
                sched, _ = corrupt(sched, self.instance, label, random.Random(cfg.seed))
            return sched

        return self.step("plan", task)

    def repair_loop(self, schedule: Schedule, report: ValidationReport):
        cfg = self.cfg

        def observer(k, current, cand_report, committed, candidate):
            if k > 1:
                self.emit("ValidateFail", "repair", _report_payload(schedule_box[0], current, iteration=k))
            self.emit("RepairStart", "repair", {"iteration": k, "errors": len(current.errors)})
            self.emit("RepairApply", "repair", {"iteration": k, "candidate": candidate.digest(),
                                                "errorsAfter": len(cand_report.errors), "committed": committed})
            if committed:
                schedule_box[0] = candidate
                self.commit("repair", candidate, {"iteration": k, "errors": len(cand_report.errors)})

        schedule_box = [schedule]
        result = self.step("repair", lambda ctx: self.reg["repair"](
            schedule, self.instance, budget=cfg.repair_budget, observer=observer))
        return result

    def run(self) -> RunResult:
        cfg = self.cfg
        t0 = time.perf_counter()
        self.emit("StartNode", PIPELINE, {"config": cfg.to_payload(), "runId": self.corr})
        # 1-2: plan and validate
        current = self.plan()
        report = self.validate(current, "validate")
        iterations = 0
        radius = EditRadius(0, 0)
        skipped, reason = False, None
        if not report.valid:
            # 3: bounded repair
            planned = current
            result = self.repair_loop(current, report)
            iterations = result.iterations_used
            current = result.schedule
            # 4: revalidate, escalating once the budget is spent
            report = self.validate(current, "revalidate")
            if not report.valid:
                self.emit("RepairStart", "escalate", {"errors": len(report.errors)})
                esc = self.step("escalate", lambda ctx: self.reg["escalate"](
                    current, self.instance, cfg.repair_budget, rule=cfg.planner_rule, seed=cfg.seed,
                    global_fallback=cfg.global_fallback))
                iterations += esc.iterations_used
                self.emit("RepairApply", "escalate", {"escalations": esc.escalations, "errorsAfter": esc.errors_after,
                                                      "global": esc.fell_back_to_global})
                if esc.errors_after <= len(report.errors):
                    current = esc.schedule
                if esc.errors_after == 0:
                    self.commit("escalate", current, {"errors": 0})
                report = self.validate(current, "revalidate")
                if not report.valid:
                    if cfg.halt_on_failure:
                        self.halt("schedule validation failed after repair", current)
                    skipped, reason = True, "infeasible"
            radius = loose_radius(planned, current)
        # 5-6: optimize, then adopt only a valid result
        if not skipped and not cfg.optimize:
            skipped, reason = True, "disabled"
        if not skipped:
            self.emit("StartNode", "optimize", {"makespan": makespan(current)})
            candidate = self.step("optimize", lambda ctx: self.reg["optimize"](current, self.instance))
            check = self.validate(candidate, "final-check")
            adopted = check.valid
            if adopted:
                current = candidate
            self.emit("EndNode", "optimize", {"adopted": adopted, "makespan": makespan(current)})
            self.log.snapshot({"schedule": current.to_list(), "instance": self.instance.to_dict()})
        # disruptions against the committed schedule
        wip_units = 0.0
        committed_before = current
        for ev in sorted(cfg.disruptions, key=lambda e: e.at_time):
            current, units = self.disrupt(current, ev)
            wip_units += units
        if cfg.disruptions:
            radius = loose_radius(committed_before, current)
        # 7: supervise
        final_report = validate_schedule(current, self.instance, downtime_of(self.events))
        crit = tuple(critical_operations(current))
        ms = makespan(current)
        self.emit("EndNode", PIPELINE, {
            "makespan": ms, "operations": len(current), "criticalOps": [list(k) for k in crit],
            "optimizationSkipped": skipped, "schedule": current.digest(), "valid": final_report.valid,
            "repairIterations": iterations, "editRadius": radius.to_dict(),
        })
        return RunResult(current, ms, skipped, iterations, radius,
                         str(self.log.path) if self.log.path else None, crit, cfg.seed, cfg.instance.name,
                         final_report.valid, reason, wip_units, len(cfg.disruptions),
                         time.perf_counter() - t0, self.corr, tuple(downtime_of(self.events)))

    def disrupt(self, schedule: Schedule, ev: DisruptionEvent) -> tuple[Schedule, float]:
        cfg = self.cfg
        self.events.append(ev)
        self.emit("StartNode", "disrupt", {"event": ev.to_dict()})
        self.emit("RepairStart", "contain", {"atTime": ev.at_time, "makespan": makespan(schedule)})
        windows = downtime_of(self.events[:-1])
        wip = WipModel.from_schedule(schedule, cfg.wip_penalty)
        c = self.step("contain", lambda ctx: self.reg["contain"](schedule, self.instance, ev, wip, downtime=windows,
                                                                 rule=cfg.planner_rule, seed=cfg.seed))
        if c.compensation is not None:
            self.emit("RepairApply", "compensate", {"makespan": makespan(c.compensation.schedule),
                                                    "editRadius": c.compensation.edit_radius.to_dict()})
            self.emit("RepairApply", "queue-reorder", {"makespan": makespan(c.reorder.schedule),
                                                       "wipUnits": c.reorder.wip_units})
        else:
            self.emit("RepairApply", "global-recompute", {"makespan": makespan(c.schedule)})
        self.instance = c.instance
        out = c.schedule
        report = self.validate(out, "contain")
        units = c.result.wip_units
        if not report.valid:
            self.emit("RepairStart", "escalate", {"errors": len(report.errors)})
            frozen = [e.key for e in out if e.end <= ev.at_time]
            esc = self.step("escalate", lambda ctx: self.reg["escalate"](
                out, self.instance, cfg.repair_budget, downtime=downtime_of(self.events), frozen=frozen,
                rule=cfg.planner_rule, seed=cfg.seed, global_fallback=cfg.global_fallback, at_time=ev.at_time))
            self.emit("RepairApply", "escalate", {"errorsAfter": esc.errors_after, "global": esc.fell_back_to_global})
            out = esc.schedule
            report = self.validate(out, "contain")
            if not report.valid:
                self.halt("schedule validation failed after disruption repair", out)
        self.commit("contain", out, {"makespan": makespan(out), "wipUnits": units,
                                     "editRadius": c.result.edit_radius.to_dict()})
        self.emit("EndNode", "disrupt", {"makespan": makespan(out)})
        return out, units


def run_pipeline(config: RunConfig, registry: Mapping[str, Callable] | None = None,
                 log: VersionedLog | None = None) -> RunResult:
    return _Run(config, registry or default_registry(), log if log is not None else VersionedLog()).run()


def rerun_from_log(log: VersionedLog, registry: Mapping[str, Callable], seed: int) -> VersionedLog:
    """Run again from the config recorded in the log's first entry."""
    head = log.entries[0]
    if head.event_type != "StartNode" or head.node_id != PIPELINE or "config" not in head.payload:
        raise ValueError("log does not start with a pipeline header")
    config = RunConfig.from_payload(head.payload["config"], seed)
    fresh = VersionedLog()
    try:
        run_pipeline(config, registry, fresh)
    except PipelineHalted:
        pass
    return fresh


def supervise(results: Sequence[RunResult]) -> dict:
    if not results:
        raise EmptyInput("supervise needs at least one result")
    best = min(results, key=lambda r: (r.makespan, r.seed))
    n = len(results)
    return {
        "best": best,
        "meanEditRadius": sum(r.edit_radius.ops_touched for r in results) / n,
        "successFraction": sum(1 for r in results if r.valid) / n,
        "runs": n,
    }


def with_seed(config: RunConfig, seed: int) -> RunConfig:
    return replace(config, seed=seed)
