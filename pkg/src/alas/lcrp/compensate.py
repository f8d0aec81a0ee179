"""Disruption containment: right-shift compensation, then WIP-priced queue reordering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from ..jssp.disruption import apply_disruption, successor_closure
from ..jssp.events import DisruptionEvent, Downtime, shocked_instance
from ..jssp.instance import JsspInstance, job_index
from ..jssp.schedule import Key, Schedule, makespan
from ..jssp.timetable import queues_of, schedule_from_starts, timetable
from ..jssp.validate import validate_schedule
from .optimize import queues_feasible, span_of
from .result import EditRadius, RepairResult, edit_radius


@dataclass
class WipModel:
    """Cost of disturbing work already released to the shop floor.

    One unit is one machine queue whose committed processing order changes;
    the reordered queue also pays ``setup_time`` before the first op that
    leaves its committed position. With ``distance_weighted`` a unit is one
    time step of advance across an op's committed start instead.
    """

    penalty_per_unit: float = 1.0
    committed_starts: dict = field(default_factory=dict)
    setup_time: int = 1
    distance_weighted: bool = False

    def __post_init__(self):
        if self.penalty_per_unit < 0:
            raise ValueError("penaltyPerUnit must be non-negative")

    @classmethod
    def from_schedule(cls, schedule: Schedule, penalty_per_unit: float = 1.0, **kw) -> "WipModel":
        return cls(penalty_per_unit, {e.key: e.start for e in schedule.entries}, **kw)


class InfeasibleLocally(RuntimeError):
    """Right-shifts inside the neighborhood cannot meet the due date."""

    def __init__(self, message: str, result: RepairResult | None = None):
        super().__init__(message)
        self.result = result


def _windows(event: DisruptionEvent, downtime: Iterable[Downtime] | None) -> list[Downtime]:
    windows = list(downtime) if downtime is not None else []
    if event.breakdown is not None and event.breakdown not in windows:
        windows.append(event.breakdown)
    return windows


def _error_count(schedule: Schedule, instance: JsspInstance, windows) -> int:
    return len(validate_schedule(schedule, instance, windows).errors)


def local_compensate(schedule: Schedule, instance: JsspInstance, event: DisruptionEvent,
                     wip: WipModel | None = None, *, downtime: Iterable[Downtime] | None = None,
                     due_date: int | None = None, hops: int = 0) -> RepairResult:
    """Shift the affected operations right until the disruption is absorbed.

    Interrupted work restarts from scratch after the outage, every dependent
    moves to its earliest feasible start, nothing moves before its committed
    start, and all other entries are returned untouched.
    """
    windows = _windows(event, downtime)
    work = shocked_instance(instance, [event])
    mark = apply_disruption(schedule, instance, event)
    affected = mark.affected if not hops else tuple(successor_closure(schedule, mark.direct, hops))
    errors_before = _error_count(schedule, work, windows)
    if not affected:
        return RepairResult(schedule, errors_before, errors_before, 1, EditRadius())

    committed = wip.committed_starts if wip is not None else {}
    by_key = schedule.by_key()
    moving = set(affected)
    fixed = {k: e.start for k, e in by_key.items() if k not in moving}
    release = {k: max(by_key[k].start, committed.get(k, by_key[k].start)) for k in moving}
    starts = timetable(work, queues_of(schedule), fixed=fixed, release=release, downtime=windows)
    if starts is None:
        raise InfeasibleLocally("machine queues contradict job order")
    updates = {}
    for k in moving:
        op = work.operation(*k)
        e = by_key[k]
        if (starts[k], op.duration) != (e.start, e.duration):
            updates[k] = e.moved(starts[k], op.duration)
    out = schedule.replaced(updates, provenance="repaired")
    result = RepairResult(out, errors_before, _error_count(out, work, windows), 1,
                          edit_radius(schedule, out), neighborhood=tuple(affected))
    if due_date is not None and makespan(out) > due_date:
        raise InfeasibleLocally(f"makespan {makespan(out)} misses due date {due_date}", result)
    return result


def _setup_map(queues: Mapping[int, Sequence[Key]], committed: Mapping[int, Sequence[Key]],
               setup_time: int) -> dict[Key, int]:
    gaps = {}
    for m, q in queues.items():
        base = committed.get(m, [])
        for pos, k in enumerate(q):
            if pos >= len(base) or base[pos] != k:
                if setup_time:
                    gaps[k] = setup_time
                break
    return gaps


def _reordered(queues, committed) -> int:
    return sum(1 for m, q in queues.items() if list(q) != list(committed.get(m, [])))


def queue_reorder(schedule: Schedule, instance: JsspInstance, event: DisruptionEvent,
                  wip: WipModel | None = None, *, downtime: Iterable[Downtime] | None = None,
                  neighborhood: Iterable[Key] | None = None, max_moves: int = 50) -> RepairResult:
    """Best-improvement search over queue edits inside the neighborhood.

    Candidate edits, tried per machine by queue position: defer a job's last
    operation behind the rest of its machine's movable queue, or swap two
    adjacent movable operations. A move is taken when its makespan gain
    beats the WIP charge it adds; the search stops when no move pays.
    """
    wip = wip or WipModel()
    windows = _windows(event, downtime)
    work = shocked_instance(instance, [event])
    by_key = schedule.by_key()
    at = event.at_time
    committed_starts = wip.committed_starts
    if neighborhood is None:
        if committed_starts:
            neighborhood = [k for k, e in by_key.items() if e.start != committed_starts.get(k, e.start)]
        else:
            neighborhood = [k for k, e in by_key.items() if e.start >= at]
    movable = {k for k in neighborhood if k in by_key and by_key[k].start >= at}
    errors_before = _error_count(schedule, work, windows)
    if not movable:
        return RepairResult(schedule, errors_before, errors_before, 1, EditRadius())

    fixed = {k: e.start for k, e in by_key.items() if k not in movable}
    release = {k: max(at, committed_starts.get(k, 0)) for k in movable}
    committed_q = queues_of(schedule)

    def evaluate(queues):
        setup = _setup_map(queues, committed_q, wip.setup_time)
        starts = timetable(work, queues, fixed=fixed, release=release, downtime=windows, setup=setup)
        if starts is None or not queues_feasible(work, queues, starts):
            return None
        if wip.distance_weighted:
            units = sum(max(0, by_key[k].start - starts[k]) for k in movable)
        else:
            units = _reordered(queues, committed_q)
        return span_of(work, starts), units, starts

    last_of_job = {k: len(work.jobs[job_index(k[0])]) == k[1] for k in by_key}
    state_q = {m: list(q) for m, q in committed_q.items()}
    state_span, state_units = makespan(schedule), 0
    state_starts = None
    moves = 0
    while moves < max_moves:
        best = None
        for m in sorted(state_q):
            q = state_q[m]
            slots = [i for i, k in enumerate(q) if k in movable]
            for pos, k in enumerate(q):
                if k not in movable:
                    continue
                candidates = []
                if last_of_job[k] and pos != slots[-1]:
                    moved = [x for x in q if x != k]
                    moved.insert(moved.index(q[slots[-1]]) + 1, k)
                    candidates.append(moved)
                if pos + 1 < len(q) and q[pos + 1] in movable:
                    swapped = list(q)
                    swapped[pos], swapped[pos + 1] = swapped[pos + 1], swapped[pos]
                    candidates.append(swapped)
                for cand in candidates:
                    trial_q = dict(state_q)
                    trial_q[m] = cand
                    outcome = evaluate(trial_q)
                    if outcome is None:
                        continue
                    span, units, starts = outcome
                    delta = units - state_units
                    charge = wip.penalty_per_unit * delta if delta else 0.0
                    net = (state_span - span) - charge
                    if math.isnan(net) or net <= 0:
                        continue
                    if best is None or net > best[0]:
                        best = (net, trial_q, span, units, starts)
        if best is None:
            break
        _, state_q, state_span, state_units, state_starts = best
        moves += 1

    if state_starts is None:
        return RepairResult(schedule, errors_before, errors_before, 1, EditRadius(), wip_units=0,
                            neighborhood=tuple(sorted(movable)))
    updates = {}
    for k in movable:
        e = by_key[k]
        if state_starts[k] != e.start:
            updates[k] = e.moved(state_starts[k], work.operation(*k).duration)
    out = schedule.replaced(updates, provenance="repaired")
    return RepairResult(out, errors_before, _error_count(out, work, windows), 1 + moves,
                        edit_radius(schedule, out), wip_units=state_units,
                        neighborhood=tuple(sorted(movable)))
