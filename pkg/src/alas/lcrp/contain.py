"""Disruption handling with neighborhood enlargement and a global fallback."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from ..jssp.events import DisruptionEvent, Downtime, shocked_instance
from ..jssp.instance import JsspInstance
from ..jssp.schedule import Schedule, makespan
from ..jssp.validate import validate_schedule
from .compensate import InfeasibleLocally, WipModel, local_compensate, queue_reorder
from .recompute import global_recompute
from .repair import MAX_ENLARGEMENTS
from .result import RepairResult, edit_radius


@dataclass(frozen=True)
class Containment:
    compensation: RepairResult | None
    reorder: RepairResult | None
    result: RepairResult
    instance: JsspInstance

    @property
    def schedule(self) -> Schedule:
        return self.result.schedule


def contain_disruption(schedule: Schedule, instance: JsspInstance, event: DisruptionEvent,
                       wip: WipModel | None = None, *, downtime: Iterable[Downtime] = (),
                       due_date: int | None = None, rule: str = "spt", seed: int = 0) -> Containment:
    """Local compensation then queue reordering; on a missed due date the
    neighborhood grows one machine-queue hop at a time, and after the last
    enlargement the rest of the plan is recomputed globally."""
    windows = list(downtime)
    if event.breakdown is not None and event.breakdown not in windows:
        windows.append(event.breakdown)
    work = shocked_instance(instance, [event])
    wip = wip or WipModel.from_schedule(schedule)
    for hops in range(MAX_ENLARGEMENTS + 1):
        try:
            phase1 = local_compensate(schedule, instance, event, wip, downtime=windows, hops=hops)
        except InfeasibleLocally as exc:
            if exc.result is None:
                continue
            phase1 = exc.result
        phase2 = queue_reorder(phase1.schedule, instance, event, wip, downtime=windows,
                               neighborhood=phase1.neighborhood)
        out = phase2.schedule
        if due_date is None or makespan(out) <= due_date:
            errors = len(validate_schedule(out, work, windows).errors)
            total = RepairResult(out, phase1.errors_before, errors, phase1.iterations_used + phase2.iterations_used,
                                 edit_radius(schedule, out), wip_units=phase2.wip_units,
                                 history=(phase1.errors_before, phase1.errors_after, errors), escalations=hops,
                                 neighborhood=phase1.neighborhood)
            return Containment(phase1, phase2, total, work)
    fresh = global_recompute(work, rule, seed, schedule=schedule, at_time=event.at_time, downtime=windows)
    errors = len(validate_schedule(fresh, work, windows).errors)
    before = len(validate_schedule(schedule, work, windows).errors)
    total = RepairResult(fresh, before, errors, 1, edit_radius(schedule, fresh), fell_back_to_global=True,
                         history=(before, errors), escalations=MAX_ENLARGEMENTS)
    return Containment(None, None, total, work)
