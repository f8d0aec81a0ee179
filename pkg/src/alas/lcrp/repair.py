"""Iterative five-phase schedule repair confined to the error neighborhood."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Iterable, Sequence

from ..jssp.disruption import successor_closure
from ..jssp.events import Downtime
from ..jssp.instance import JsspInstance, job_index, job_name, machine_name
from ..jssp.schedule import Key, Schedule, ScheduleEntry
from ..jssp.timetable import earliest_gap, queues_of
from ..jssp.validate import ValidationReport, Violation, makespan_threshold, validate_schedule
from .optimize import span_of, swap_descent
from .recompute import global_recompute
from .result import RepairResult, loose_radius

DEFAULT_SWEEPS = 3
MAX_ENLARGEMENTS = 3


def error_seeds(errors: Iterable[Violation], instance: JsspInstance) -> set[Key]:
    """Operations named by error scopes."""
    seeds: set[Key] = set()
    for err in errors:
        scope = err.scope
        job, step = scope.get("job"), scope.get("step")
        if job is not None and step is not None:
            seeds.add((str(job), step))
        elif job is not None and err.code == "missing-job":
            try:
                j = job_index(job)
            except ValueError:
                continue
            if 0 <= j < instance.job_count:
                seeds.update((job_name(j), k + 1) for k in range(len(instance.jobs[j])))
        other = scope.get("with")
        if other:
            seeds.add((str(other[0]), other[1]))
    return seeds


def neighborhood(schedule: Schedule, errors: Iterable[Violation], instance: JsspInstance,
                 hops: int = 0) -> set[Key]:
    """Error-scoped ops plus their job and machine successors, optionally
    widened by ``hops`` machine-queue predecessors."""
    seeds = error_seeds(errors, instance)
    present = set(schedule.by_key())
    found = set(successor_closure(schedule, seeds & present, hops))
    return found | (seeds - present)


def _phase_immediate(entries: dict[Key, ScheduleEntry], instance: JsspInstance, report: ValidationReport,
                     region: set[Key], threshold: int) -> None:
    """Phase I: drop unknown ops, add missing ones, fix machines and times."""
    for k in list(entries):
        if not instance.has_operation(*k):
            del entries[k]
    for k in instance.keys():
        if k not in entries:
            op = instance.operation(*k)
            entries[k] = ScheduleEntry(k[0], k[1], machine_name(op.machine), 0, op.duration, op.duration)
            region.add(k)
    late = {(e.scope.get("job"), e.scope.get("step")) for e in report.errors if e.code == "makespan"}
    for k in sorted(region & set(entries), key=lambda k: (job_index(k[0]), k[1])):
        e = entries[k]
        op = instance.operation(*k)
        start = e.start
        pred = entries.get((k[0], k[1] - 1))
        if k in late or start + op.duration > threshold:
            start = pred.end if pred is not None else 0
        elif pred is not None and start < pred.end:
            start = pred.end
        entries[k] = ScheduleEntry(e.job, e.step, machine_name(op.machine), start, start + op.duration, op.duration)


def _phase_jobs(entries: dict[Key, ScheduleEntry], region: set[Key], frozen: set[Key]) -> None:
    """Phase II: within each job, step k+1 starts no earlier than step k ends."""
    jobs: dict[str, list[Key]] = {}
    for k in entries:
        jobs.setdefault(k[0], []).append(k)
    for keys in jobs.values():
        keys.sort(key=lambda k: k[1])
        for prev, cur in zip(keys, keys[1:]):
            if cur in region and cur not in frozen and entries[cur].start < entries[prev].end:
                entries[cur] = entries[cur].moved(entries[prev].end)


def _phase_machines(entries: dict[Key, ScheduleEntry], region: set[Key], frozen: set[Key],
                    downtime: Sequence[Downtime]) -> None:
    """Phase III: right-shift insertion per machine.

    Ops outside the region and frozen ops keep their slots; region ops are
    placed one at a time, in start order subject to job order, at the first
    gap on their machine that respects job order and downtime.
    """
    busy: dict[int, list[tuple[int, int]]] = {}
    for w in downtime:
        busy.setdefault(w.machine, []).append((w.start, w.end))
    pending = []
    for k, e in entries.items():
        if k in region and k not in frozen:
            pending.append(k)
        else:
            busy.setdefault(e.machine_id, []).append((e.start, e.end))
    pending_set = set(pending)
    while pending:
        ready = [k for k in pending if (k[0], k[1] - 1) not in pending_set]
        k = min(ready, key=lambda k: (entries[k].start, job_index(k[0]), k[1]))
        e = entries[k]
        pred = entries.get((k[0], k[1] - 1))
        lb = max(0, e.start, pred.end if pred is not None else 0)
        m = e.machine_id
        t = earliest_gap(lb, e.duration, busy.setdefault(m, []))
        entries[k] = e.moved(t)
        busy[m].append((t, t + e.duration))
        pending.remove(k)
        pending_set.discard(k)


def _phase_improve(entries: dict[Key, ScheduleEntry], instance: JsspInstance, region: set[Key],
                   frozen: set[Key], downtime: Sequence[Downtime], sweeps: int) -> None:
    """Phase IV: adjacent swaps among region ops, kept on strict makespan gain."""
    schedule = Schedule(tuple(entries.values()))
    movable = {k for k in region if k not in frozen}
    if len(movable) < 2:
        return
    fixed = {k: e.start for k, e in entries.items() if k not in movable}
    starts = {k: e.start for k, e in entries.items()}
    before = span_of(instance, starts)
    _, after = swap_descent(instance, queues_of(schedule), dict(starts), movable, fixed, 0,
                            list(downtime), max_sweeps=sweeps)
    if span_of(instance, after) < before:
        for k in movable:
            if after[k] != entries[k].start:
                entries[k] = entries[k].moved(after[k])


def _phase_cleanup(entries: dict[Key, ScheduleEntry], region: set[Key], frozen: set[Key]) -> None:
    """Phase V: clamp negative starts and restore inverted intervals."""
    for k in region:
        if k in frozen or k not in entries:
            continue
        e = entries[k]
        if e.start < 0:
            entries[k] = e.moved(0)
        elif e.end <= e.start:
            entries[k] = e.moved(e.start)


def _order_like(entries: dict[Key, ScheduleEntry], template: Schedule) -> tuple[ScheduleEntry, ...]:
    order = {e.key: i for i, e in enumerate(template.entries)}
    return tuple(sorted(entries.values(), key=lambda e: (order.get(e.key, len(order)), job_index(e.job), e.step)))


def repair_iteration(schedule: Schedule, instance: JsspInstance, report: ValidationReport, *,
                     downtime: Sequence[Downtime] = (), frozen: Iterable[Key] = (), hops: int = 0,
                     sweeps: int = DEFAULT_SWEEPS) -> tuple[Schedule, set[Key]]:
    frozen = set(frozen)
    region = neighborhood(schedule, report.errors, instance, hops)
    entries = {e.key: e for e in schedule.entries}
    threshold = makespan_threshold(instance, schedule.entries, downtime)
    _phase_immediate(entries, instance, report, region, threshold)
    region &= set(entries)
    _phase_jobs(entries, region, frozen)
    _phase_machines(entries, region, frozen, downtime)
    candidate = Schedule(_order_like(entries, schedule), "repaired", schedule.version)
    if validate_schedule(candidate, instance, downtime).valid:
        _phase_improve(entries, instance, region, frozen, downtime, sweeps)
    _phase_cleanup(entries, region, frozen)
    return Schedule(_order_like(entries, schedule), "repaired", schedule.version), region


def _write_snapshot(directory, dataset: str, k: int, schedule: Schedule, errors: int, committed: bool) -> None:
    path = Path(directory) / f"{dataset}_repair_iteration_{k}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"iteration": k, "errors": errors, "committed": committed,
                                "schedule": schedule.to_list()}, indent=1), encoding="utf-8")


def repair(schedule: Schedule, instance: JsspInstance, errors: Sequence[Violation] | None = None,
           budget: int = 5, *, downtime: Iterable[Downtime] = (), frozen: Iterable[Key] = (),
           hops: int = 0, sweeps: int = DEFAULT_SWEEPS, snapshot_dir=None,
           dataset: str | None = None, observer: Callable | None = None) -> RepairResult:
    """Run up to ``budget`` repair iterations.

    An iteration is committed only when it does not raise the validator's
    error count, so the recorded history never increases. Ops outside the
    error neighborhood are never edited. ``observer(k, report, candidate_report,
    committed, candidate)`` sees every iteration before it is adopted.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    downtime = list(downtime)
    report = validate_schedule(schedule, instance, downtime)
    if errors is not None and not report.valid:
        report = ValidationReport(tuple(errors), report.warnings)
    before = len(report.errors)
    history = [before]
    if report.valid:
        return RepairResult(schedule, 0, 0, 1, loose_radius(schedule, schedule), history=(0,))
    current = schedule
    touched: set[Key] = set()
    used = 0
    for k in range(1, budget + 1):
        used = k
        candidate, region = repair_iteration(current, instance, report, downtime=downtime,
                                             frozen=frozen, hops=hops, sweeps=sweeps)
        cand_report = validate_schedule(candidate, instance, downtime)
        committed = len(cand_report.errors) <= len(report.errors)
        if observer is not None:
            observer(k, report, cand_report, committed, candidate)
        if committed:
            current, report = candidate, cand_report
            touched |= region
        history.append(len(report.errors))
        if snapshot_dir is not None:
            _write_snapshot(snapshot_dir, dataset or instance.name, k, current, len(report.errors), committed)
        if report.valid:
            break
    return RepairResult(current, before, len(report.errors), used, loose_radius(schedule, current),
                        history=tuple(history), neighborhood=tuple(sorted(touched)))


def repair_with_escalation(schedule: Schedule, instance: JsspInstance, budget: int = 5, *,
                           downtime: Iterable[Downtime] = (), frozen: Iterable[Key] = (),
                           rule: str = "spt", seed: int = 0, global_fallback: bool = True,
                           at_time: int = 0, snapshot_dir=None, dataset: str | None = None) -> RepairResult:
    """Repair; if errors remain, widen the neighborhood one machine-queue hop
    at a time, then fall back to global recompute."""
    downtime = list(downtime)
    result = repair(schedule, instance, budget=budget, downtime=downtime, frozen=frozen,
                    snapshot_dir=snapshot_dir, dataset=dataset)
    history = list(result.history)
    iterations = result.iterations_used
    hops = 0
    while result.errors_after and hops < MAX_ENLARGEMENTS:
        hops += 1
        result = repair(result.schedule, instance, budget=budget, downtime=downtime, frozen=frozen,
                        hops=hops)
        history.extend(result.history[1:])
        iterations += result.iterations_used
    before = history[0]
    if result.errors_after and global_fallback:
        fresh = global_recompute(instance, rule, seed, schedule=None if not frozen else result.schedule,
                                 at_time=at_time, downtime=downtime)
        after = len(validate_schedule(fresh, instance, downtime).errors)
        history.append(after)
        return RepairResult(fresh, before, after, iterations, loose_radius(schedule, fresh),
                            fell_back_to_global=True, history=tuple(history), escalations=hops)
    return RepairResult(result.schedule, before, result.errors_after, iterations,
                        loose_radius(schedule, result.schedule), history=tuple(history),
                        escalations=hops, neighborhood=result.neighborhood)
