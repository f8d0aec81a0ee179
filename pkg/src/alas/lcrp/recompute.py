"""Global fallback: re-plan everything that has not started yet."""

from __future__ import annotations

from typing import Iterable

from ..jssp.events import Downtime
from ..jssp.instance import JsspInstance, job_name
from ..jssp.planners import dispatch
from ..jssp.schedule import Schedule
from .optimize import optimize


def global_recompute(instance: JsspInstance, rule: str = "spt", seed: int = 0, *,
                     schedule: Schedule | None = None, at_time: int = 0,
                     downtime: Iterable[Downtime] = ()) -> Schedule:
    """Keep ops completed by ``at_time``, dispatch the rest from ``at_time``
    and optimize the result. Work in progress at ``at_time`` is discarded."""
    windows = list(downtime)
    fixed: dict = {}
    if schedule is not None:
        by_key = schedule.by_key()
        for j, ops in enumerate(instance.jobs):
            for k, op in enumerate(ops):
                e = by_key.get((job_name(j), k + 1))
                if e is None or e.start + op.duration > at_time or e.machine_id != op.machine:
                    break
                if any(w.machine == op.machine and w.overlaps(e.start, e.start + op.duration) for w in windows):
                    break
                fixed[e.key] = e.start
    plan = dispatch(instance, rule, seed, fixed=fixed, not_before=at_time, downtime=windows,
                    provenance="repaired")
    out = optimize(plan, instance, downtime=windows, frozen=fixed, not_before=at_time)
    if schedule is not None:
        # keep the caller's entry order so edit radius lines up
        order = {e.key: i for i, e in enumerate(schedule.entries)}
        entries = sorted(out.entries, key=lambda e: order.get(e.key, len(order)))
        out = Schedule(tuple(entries), "repaired", schedule.version)
    return out
