"""Targeted schedule corruptions for validator and repair testing."""

from __future__ import annotations

import random
from dataclasses import replace

from .instance import JsspInstance, machine_index, machine_name
from .schedule import Schedule, ScheduleEntry
from .validate import makespan_threshold

CATEGORIES = ("precedence-swap", "machine-double-book", "capacity-overflow", "deadline-miss")
# validator codes that count as catching each category
EXPECTED_CODES = {
    "precedence-swap": {"precedence"},
    "machine-double-book": {"machine-overlap"},
    "capacity-overflow": {"wrong-machine"},
    "deadline-miss": {"makespan"},
}
REPAIR_FAULTS = CATEGORIES + ("time-inconsistency", "negative-start")


def _set(entries: list[ScheduleEntry], idx: int, **changes) -> None:
    entries[idx] = replace(entries[idx], **changes)


def inject_fault(schedule: Schedule, instance: JsspInstance, category: str,
                 rng: random.Random) -> tuple[Schedule, dict]:
    """Apply one fault of ``category``; returns the corrupted schedule and the
    scope a validator must report for it."""
    entries = list(schedule.entries)
    index = {e.key: i for i, e in enumerate(entries)}
    if category == "precedence-swap":
        pairs = [(e.key, (e.job, e.step + 1)) for e in entries if (e.job, e.step + 1) in index]
        a, b = rng.choice(pairs)
        ea, eb = entries[index[a]], entries[index[b]]
        _set(entries, index[a], start=eb.start, end=eb.start + ea.duration)
        _set(entries, index[b], start=ea.start, end=ea.start + eb.duration)
        scope = {"job": b[0], "step": b[1]}
    elif category == "machine-double-book":
        queues = [q for q in schedule.machine_queues().values() if len(q) >= 2]
        q = rng.choice(queues)
        i = rng.randrange(len(q) - 1)
        victim = q[i + 1]
        _set(entries, index[victim.key], start=q[i].start, end=q[i].start + victim.duration)
        scope = {"machine": victim.machine}
    elif category == "capacity-overflow":
        e = rng.choice(entries)
        others = [m for m in range(instance.machine_count) if m != machine_index(e.machine)]
        wrong = machine_name(rng.choice(others))
        _set(entries, index[e.key], machine=wrong)
        scope = {"job": e.job, "step": e.step, "machine": wrong}
    elif category == "deadline-miss":
        e = rng.choice(entries)
        limit = makespan_threshold(instance, entries, ())
        s = limit + rng.randint(1, 5)
        _set(entries, index[e.key], start=s, end=s + e.duration)
        scope = {"job": e.job, "step": e.step}
    elif category == "time-inconsistency":
        e = rng.choice(entries)
        _set(entries, index[e.key], end=e.start + e.duration + rng.choice((-1, 1, 2)))
        scope = {"job": e.job, "step": e.step}
    elif category == "negative-start":
        e = rng.choice(entries)
        s = -rng.randint(1, 3)
        _set(entries, index[e.key], start=s, end=s + e.duration)
        scope = {"job": e.job, "step": e.step}
    else:
        raise ValueError(f"unknown fault category {category!r}")
    return Schedule(tuple(entries), "corrupted", schedule.version), scope


def corrupt_schedule(schedule: Schedule, instance: JsspInstance, count: int,
                     rng: random.Random, categories=REPAIR_FAULTS) -> Schedule:
    """Stack ``count`` random faults on one schedule."""
    for _ in range(count):
        schedule, _ = inject_fault(schedule, instance, rng.choice(categories), rng)
    return schedule


def scope_matches(error_scope: dict, expected: dict) -> bool:
    return all(error_scope.get(k) == v for k, v in expected.items())
