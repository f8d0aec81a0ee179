"""Dispatch-rule planners that stand in for a learned plan generator."""

from __future__ import annotations

import random
from typing import Iterable, Mapping

from .events import Downtime
from .instance import JsspInstance, job_name
from .schedule import Key, Schedule
from .timetable import earliest_gap

RULES = ("spt", "lpt", "fifo", "random")


def dispatch(instance: JsspInstance, rule: str = "spt", seed: int = 0, *,
             fixed: Mapping[Key, int] | None = None, not_before: int = 0,
             downtime: Iterable[Downtime] = (), provenance: str = "planner") -> Schedule:
    """Non-delay list scheduling.

    Ops in ``fixed`` keep their start and block their machine; every other op
    starts no earlier than ``not_before`` and never overlaps downtime. Among
    the ready ops that can start earliest, ``rule`` picks one; ties go to the
    lowest job index.
    """
    if rule not in RULES:
        raise ValueError(f"unknown planner rule {rule!r}; expected one of {', '.join(RULES)}")
    fixed = dict(fixed or {})
    rng = random.Random(seed)
    busy: dict[int, list[tuple[int, int]]] = {m: [] for m in range(instance.machine_count)}
    for w in downtime:
        busy.setdefault(w.machine, []).append((w.start, w.end))
    starts: dict[Key, int] = {}
    job_ready = [0] * instance.job_count
    next_step = [0] * instance.job_count

    # fixed ops are a prefix of each job; place them first
    for j, ops in enumerate(instance.jobs):
        for k, op in enumerate(ops):
            key = (job_name(j), k + 1)
            if key in fixed:
                s = fixed[key]
                starts[key] = s
                busy[op.machine].append((s, s + op.duration))
                job_ready[j] = max(job_ready[j], s + op.duration)
                next_step[j] = k + 1

    remaining = sum(len(ops) - next_step[j] for j, ops in enumerate(instance.jobs))
    while remaining:
        options = []
        for j, ops in enumerate(instance.jobs):
            k = next_step[j]
            if k >= len(ops):
                continue
            op = ops[k]
            est = earliest_gap(max(job_ready[j], not_before), op.duration, busy[op.machine])
            options.append((est, j, op))
        t = min(o[0] for o in options)
        candidates = [o for o in options if o[0] == t]
        if rule == "spt":
            pick = min(candidates, key=lambda o: (o[2].duration, o[1]))
        elif rule == "lpt":
            pick = min(candidates, key=lambda o: (-o[2].duration, o[1]))
        elif rule == "fifo":
            pick = min(candidates, key=lambda o: (job_ready[o[1]], o[1]))
        else:
            pick = rng.choice(candidates)
        est, j, op = pick
        key = (job_name(j), next_step[j] + 1)
        starts[key] = est
        busy[op.machine].append((est, est + op.duration))
        job_ready[j] = est + op.duration
        next_step[j] += 1
        remaining -= 1
    return Schedule.from_starts(instance, starts, provenance)


def seed_plan(instance: JsspInstance, rule: str = "spt", seed: int = 0) -> Schedule:
    return dispatch(instance, rule, seed)
