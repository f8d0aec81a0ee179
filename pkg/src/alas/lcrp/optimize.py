"""Makespan-only improvement of a feasible schedule."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from ..jssp.events import Downtime
from ..jssp.instance import JsspInstance
from ..jssp.schedule import Key, Schedule
from ..jssp.timetable import queues_of, schedule_from_starts, timetable
from ..jssp.validate import validate_schedule


class PreconditionViolated(ValueError):
    pass


def span_of(instance: JsspInstance, starts: Mapping[Key, int]) -> int:
    return max(s + instance.operation(*k).duration for k, s in starts.items())


def queues_feasible(instance: JsspInstance, queues: Mapping[int, Sequence[Key]],
                    starts: Mapping[Key, int]) -> bool:
    """Consecutive queue entries must not overlap (fixed ops can collide)."""
    for q in queues.values():
        for a, b in zip(q, q[1:]):
            if starts[a] + instance.operation(*a).duration > starts[b]:
                return False
    return True


def retime(instance: JsspInstance, queues: Mapping[int, Sequence[Key]], fixed: Mapping[Key, int],
           not_before: int, downtime: Sequence[Downtime]) -> dict[Key, int] | None:
    release = {k: not_before for q in queues.values() for k in q if k not in fixed}
    starts = timetable(instance, queues, fixed=fixed, release=release, downtime=downtime)
    if starts is None or not queues_feasible(instance, queues, starts):
        return None
    return starts


def swap_descent(instance: JsspInstance, queues: dict[int, list[Key]], starts: dict[Key, int],
                 movable, fixed: Mapping[Key, int], not_before: int, downtime: Sequence[Downtime],
                 max_sweeps: int | None = None) -> tuple[dict[int, list[Key]], dict[Key, int]]:
    """Adjacent-swap descent on machine queues; a swap is kept only when it
    strictly lowers makespan. Stops after a sweep without improvement."""
    best = span_of(instance, starts)
    sweeps = 0
    improved = True
    while improved and (max_sweeps is None or sweeps < max_sweeps):
        improved = False
        sweeps += 1
        for m in sorted(queues):
            q = queues[m]
            i = 0
            while i < len(q) - 1:
                if q[i] in movable and q[i + 1] in movable:
                    q[i], q[i + 1] = q[i + 1], q[i]
                    trial = retime(instance, queues, fixed, not_before, downtime)
                    if trial is not None and span_of(instance, trial) < best:
                        starts, best, improved = trial, span_of(instance, trial), True
                    else:
                        q[i], q[i + 1] = q[i + 1], q[i]
                i += 1
    return queues, starts


def optimize(schedule: Schedule, instance: JsspInstance, *, downtime: Iterable[Downtime] = (),
             frozen: Iterable[Key] = (), not_before: int = 0) -> Schedule:
    """Left-shift compaction followed by adjacent-swap descent.

    Frozen ops keep their slot and other ops never start before
    ``not_before``. Changes are adopted only on a strict makespan decrease,
    so a locally optimal input comes back unchanged.
    """
    downtime = list(downtime)
    report = validate_schedule(schedule, instance, downtime)
    if not report.valid:
        raise PreconditionViolated(f"optimize needs a valid schedule: {report.codes()}")
    by_key = schedule.by_key()
    frozen = set(frozen)
    fixed = {k: by_key[k].start for k in frozen}
    movable = set(by_key) - frozen
    current = {k: e.start for k, e in by_key.items()}
    best = span_of(instance, current)
    queues = queues_of(schedule)

    compact = retime(instance, queues, fixed, not_before, downtime)
    adopted = False
    if compact is not None and span_of(instance, compact) < best:
        current, best, adopted = compact, span_of(instance, compact), True
    base = compact if compact is not None else current
    queues, after = swap_descent(instance, queues, dict(base), movable, fixed, not_before, downtime)
    if span_of(instance, after) < best:
        current, adopted = after, True
    if not adopted:
        return schedule
    return schedule_from_starts(instance, current, template=schedule, provenance="optimized")
