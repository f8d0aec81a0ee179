"""Scoping a disruption to the set of operations it can reach."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .events import DisruptionEvent
from .instance import JsspInstance, job_index
from .schedule import Key, Schedule


@dataclass(frozen=True)
class DisruptionMark:
    schedule: Schedule
    event: DisruptionEvent
    direct: tuple[Key, ...] = ()
    affected: tuple[Key, ...] = ()
    restart_required: frozenset = field(default_factory=frozenset)

    @property
    def affected_set(self) -> set[Key]:
        return set(self.affected)


def successor_closure(schedule: Schedule, seeds, hops_back: int = 0) -> list[Key]:
    """Seeds plus everything reachable through job and machine succession,
    in schedule order. ``hops_back`` first widens the seeds by that many
    machine-queue predecessors."""
    by_key = schedule.by_key()
    machine_next: dict[Key, Key] = {}
    machine_prev: dict[Key, Key] = {}
    for q in schedule.machine_queues().values():
        for a, b in zip(q, q[1:]):
            machine_next[a.key] = b.key
            machine_prev[b.key] = a.key
    frontier = {k for k in seeds if k in by_key}
    for _ in range(hops_back):
        frontier |= {machine_prev[k] for k in frontier if k in machine_prev}
    found = set(frontier)
    todo = deque(frontier)
    while todo:
        k = todo.popleft()
        for nxt in ((k[0], k[1] + 1), machine_next.get(k)):
            if nxt is not None and nxt in by_key and nxt not in found:
                found.add(nxt)
                todo.append(nxt)
    return sorted(found, key=lambda k: (by_key[k].start, job_index(k[0]), k[1]))


def apply_disruption(schedule: Schedule, instance: JsspInstance, event: DisruptionEvent) -> DisruptionMark:
    direct: list[Key] = []
    restart: set[Key] = set()
    if event.breakdown is not None:
        w = event.breakdown
        for e in schedule.entries:
            if e.machine_id == w.machine and w.overlaps(e.start, e.end):
                direct.append(e.key)
                if e.start < w.start:
                    restart.add(e.key)
    else:
        shock = event.shock
        if (shock.job, shock.step) in schedule.by_key():
            direct.append((shock.job, shock.step))
    direct.sort(key=lambda k: (job_index(k[0]), k[1]))
    affected = successor_closure(schedule, direct) if direct else []
    return DisruptionMark(schedule, event, tuple(direct), tuple(affected), frozenset(restart))
