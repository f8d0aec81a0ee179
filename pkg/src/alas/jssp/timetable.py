"""Start-time computation for fixed machine orders.

Every repair and optimization move in this package is expressed as a set of
machine queues; this module turns queues back into start times.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, Mapping, Sequence

from .events import Downtime
from .instance import JsspInstance, job_index, job_name, machine_name
from .schedule import Key, Schedule, ScheduleEntry


def windows_by_machine(downtime: Iterable[Downtime]) -> dict[int, list[Downtime]]:
    out: dict[int, list[Downtime]] = {}
    for w in downtime:
        out.setdefault(w.machine, []).append(w)
    for ws in out.values():
        ws.sort(key=lambda w: (w.start, w.end))
    return out


def earliest_clear(lb: int, duration: int, windows: Sequence[Downtime], setup: int = 0) -> int:
    """Smallest t >= lb with [t - setup, t + duration) clear of every window."""
    t = lb
    moved = True
    while moved:
        moved = False
        for w in windows:
            if w.overlaps(t - setup, t + duration):
                t = w.end + setup
                moved = True
    return t


def earliest_gap(lb: int, duration: int, busy: Sequence[tuple[int, int]]) -> int:
    """Smallest t >= lb with [t, t + duration) clear of the busy intervals."""
    t = lb
    for s, e in sorted(busy):
        if t + duration <= s:
            break
        if e > t:
            t = e
    return t


def queues_of(schedule: Schedule) -> dict[int, list[Key]]:
    return {q[0].machine_id: [e.key for e in q] for q in schedule.machine_queues().values()}


def timetable(instance: JsspInstance, queues: Mapping[int, Sequence[Key]], *,
              fixed: Mapping[Key, int] | None = None,
              release: Mapping[Key, int] | None = None,
              downtime: Iterable[Downtime] = (),
              setup: Mapping[Key, int] | None = None) -> dict[Key, int] | None:
    """Semi-active start times for the given machine orders.

    ``fixed`` ops keep their start; the rest start as early as job order,
    machine order, release times, downtime and setup gaps allow. Returns
    None when the queues contradict job order (a cycle).
    """
    fixed = fixed or {}
    release = release or {}
    setup = setup or {}
    windows = windows_by_machine(downtime)

    machine_of: dict[Key, int] = {}
    machine_prev: dict[Key, Key] = {}
    machine_next: dict[Key, Key] = {}
    for m, q in queues.items():
        for i, k in enumerate(q):
            machine_of[k] = m
            if i:
                machine_prev[k] = q[i - 1]
                machine_next[q[i - 1]] = k

    indeg: dict[Key, int] = {}
    for k in machine_of:
        n = 0
        if k in machine_prev:
            n += 1
        if (k[0], k[1] - 1) in machine_of:
            n += 1
        indeg[k] = n

    ready = deque(sorted((k for k, d in indeg.items() if d == 0), key=lambda k: (job_index(k[0]), k[1])))
    start: dict[Key, int] = {}
    end: dict[Key, int] = {}
    while ready:
        k = ready.popleft()
        dur = instance.operation(*k).duration
        if k in fixed:
            s = fixed[k]
        else:
            lb = release.get(k, 0)
            jp = (k[0], k[1] - 1)
            if jp in end:
                lb = max(lb, end[jp])
            gap = setup.get(k, 0)
            lb = max(lb, end[machine_prev[k]] + gap if k in machine_prev else gap)
            s = earliest_clear(lb, dur, windows.get(machine_of[k], ()), gap)
        start[k] = s
        end[k] = s + dur
        for succ in ((k[0], k[1] + 1), machine_next.get(k)):
            if succ is not None and succ in indeg:
                indeg[succ] -= 1
                if indeg[succ] == 0:
                    ready.append(succ)
    if len(start) != len(machine_of):
        return None
    return start


def schedule_from_starts(instance: JsspInstance, starts: Mapping[Key, int], template: Schedule | None = None,
                         provenance: str = "planner") -> Schedule:
    """Entries for ``starts``; entry order follows ``template`` when given."""
    if template is None:
        return Schedule.from_starts(instance, starts, provenance)
    entries = []
    for e in template.entries:
        op = instance.operation(e.job, e.step)
        s = starts.get(e.key, e.start)
        entries.append(ScheduleEntry(e.job, e.step, machine_name(op.machine), s, s + op.duration, op.duration))
    return Schedule(tuple(entries), provenance, template.version)


def all_keys(instance: JsspInstance) -> list[Key]:
    return [(job_name(j), k + 1) for j, ops in enumerate(instance.jobs) for k in range(len(ops))]
