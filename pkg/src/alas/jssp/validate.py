"""Schedule feasibility checker.

The validator only sees the candidate schedule, the dataset and declared
downtime. It never receives planner or repair state.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .events import Downtime
from .instance import JsspInstance, job_index, job_name, machine_index, machine_name
from .schedule import Schedule, ScheduleEntry

REQUIRED_FIELDS = ("job", "step", "machine", "start", "end")


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    scope: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "scope": dict(self.scope)}


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Violation, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [e.code for e in self.errors]

    def to_dict(self) -> dict:
        return {"valid": self.valid, "errors": [e.to_dict() for e in self.errors],
                "warnings": list(self.warnings)}


def makespan_threshold(instance: JsspInstance | None, entries: Sequence[ScheduleEntry],
                       downtime: Sequence[Downtime]) -> int:
    """Serial upper bound: all work back to back after every outage ends."""
    work = instance.total_duration() if instance is not None else sum(e.end - e.start for e in entries)
    return work + sum(w.end for w in downtime)


def _is_number(v: Any) -> bool:
    return isinstance(v, numbers.Real) and not isinstance(v, bool)


def _rows(schedule) -> list:
    if isinstance(schedule, Schedule):
        return [e.to_dict() for e in schedule.entries]
    if schedule is None:
        return []
    return list(schedule)


def _scope_of(row: Mapping) -> dict:
    scope = {}
    if "job" in row:
        scope["job"] = row["job"]
    if "step" in row:
        scope["step"] = row["step"]
    return scope


def validate_schedule(schedule: Schedule | Iterable[Mapping] | None,
                      instance: JsspInstance | None = None,
                      downtime: Sequence[Downtime] = (),
                      threshold: int | None = None) -> ValidationReport:
    rows = _rows(schedule)
    errors: list[Violation] = []
    warnings: list[str] = []
    if not rows:
        return ValidationReport((Violation("empty-schedule", "empty schedule"),))

    # fields and numeric types
    entries: list[ScheduleEntry] = []
    seen: set = set()
    for i, row in enumerate(rows):
        if not isinstance(row, Mapping):
            errors.append(Violation("bad-type", f"entry {i} is not a record", {"index": i}))
            continue
        missing = [f for f in REQUIRED_FIELDS if f not in row]
        if missing:
            errors.append(Violation("missing-field", f"entry {i} lacks {', '.join(missing)}",
                                    {**_scope_of(row), "index": i}))
            continue
        bad = [f for f in ("start", "end") if not _is_number(row[f])]
        if not isinstance(row["step"], int) or isinstance(row["step"], bool):
            bad.append("step")
        if "duration" in row and not _is_number(row["duration"]):
            bad.append("duration")
        if bad:
            errors.append(Violation("bad-type", f"entry {i} has non-numeric {', '.join(bad)}",
                                    {**_scope_of(row), "index": i}))
            continue
        try:
            job_index(row["job"])
            machine_index(row["machine"])
        except ValueError as exc:
            errors.append(Violation("bad-type", str(exc), {**_scope_of(row), "index": i}))
            continue
        start, end = row["start"], row["end"]
        entry = ScheduleEntry(str(row["job"]), row["step"], str(row["machine"]), start, end,
                              row.get("duration", end - start))
        if entry.key in seen:
            errors.append(Violation("duplicate-operation", f"{entry.job} step {entry.step} scheduled twice",
                                    {"job": entry.job, "step": entry.step}))
            continue
        seen.add(entry.key)
        entries.append(entry)

    # time ordering and duration consistency
    for e in entries:
        scope = {"job": e.job, "step": e.step}
        if not e.start < e.end:
            errors.append(Violation("time-order", f"{e.job} step {e.step}: start {e.start} >= end {e.end}", scope))
        if e.start < 0:
            errors.append(Violation("negative-start", f"{e.job} step {e.step} starts at {e.start}", scope))
        if e.end - e.start != e.duration:
            errors.append(Violation("duration-mismatch",
                                    f"{e.job} step {e.step}: end-start {e.end - e.start} != duration {e.duration}",
                                    scope))
        if instance is not None:
            if not instance.has_operation(e.job, e.step):
                errors.append(Violation("unknown-operation", f"{e.job} step {e.step} not in dataset", scope))
                continue
            op = instance.operation(e.job, e.step)
            if machine_index(e.machine) != op.machine:
                errors.append(Violation("wrong-machine",
                                        f"{e.job} step {e.step} must run on {machine_name(op.machine)}",
                                        {**scope, "machine": e.machine}))
            if e.duration != op.duration:
                errors.append(Violation("duration-mismatch",
                                        f"{e.job} step {e.step}: duration {e.duration} != dataset {op.duration}",
                                        scope))

    # makespan bound
    if entries:
        limit = threshold if threshold is not None else makespan_threshold(instance, entries, downtime)
        last = max(entries, key=lambda e: (e.end, -job_index(e.job), -e.step))
        if last.end <= 0 or last.end > limit:
            errors.append(Violation("makespan", f"makespan {last.end} outside (0, {limit}]",
                                    {"job": last.job, "step": last.step}))

    # job precedence
    by_job: dict[str, list[ScheduleEntry]] = {}
    for e in entries:
        by_job.setdefault(e.job, []).append(e)
    for job in sorted(by_job, key=job_index):
        ops = sorted(by_job[job], key=lambda e: e.step)
        for prev, cur in zip(ops, ops[1:]):
            if cur.start < prev.end:
                errors.append(Violation("precedence",
                                        f"{job} step {cur.step} starts at {cur.start} before step {prev.step} ends at {prev.end}",
                                        {"job": job, "step": cur.step}))

    # machine capacity
    by_machine: dict[str, list[ScheduleEntry]] = {}
    for e in entries:
        by_machine.setdefault(e.machine, []).append(e)
    for machine in sorted(by_machine, key=machine_index):
        ops = sorted(by_machine[machine], key=lambda e: (e.start, e.end, job_index(e.job), e.step))
        holder = None
        for e in ops:
            if holder is not None and e.start < holder.end:
                errors.append(Violation("machine-overlap",
                                        f"{machine}: {e.job} step {e.step} overlaps {holder.job} step {holder.step}",
                                        {"machine": machine, "job": e.job, "step": e.step,
                                         "with": [holder.job, holder.step]}))
            if holder is None or e.end > holder.end:
                holder = e

    # dataset coverage
    if instance is not None:
        present_jobs = set(by_job)
        for j in range(instance.job_count):
            if job_name(j) not in present_jobs:
                errors.append(Violation("missing-job", f"{job_name(j)} absent", {"job": job_name(j)}))
        present_machines = {machine_index(m) for m in by_machine}
        used = sorted({op.machine for ops in instance.jobs for op in ops})
        for m in used:
            if m not in present_machines:
                errors.append(Violation("missing-machine", f"{machine_name(m)} absent",
                                        {"machine": machine_name(m)}))
        for key in instance.keys():
            if key not in seen and key[0] in present_jobs:
                errors.append(Violation("missing-operation", f"{key[0]} step {key[1]} absent",
                                        {"job": key[0], "step": key[1]}))
    else:
        warnings.append("no dataset given: coverage checks skipped")

    # declared downtime
    for w in downtime:
        for e in by_machine.get(machine_name(w.machine), ()):
            if w.overlaps(e.start, e.end):
                errors.append(Violation("downtime-overlap",
                                        f"{e.job} step {e.step} runs during downtime [{w.start},{w.end}) on {e.machine}",
                                        {"machine": e.machine, "job": e.job, "step": e.step}))

    return ValidationReport(tuple(errors), tuple(warnings))
