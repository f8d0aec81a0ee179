"""Repair outcomes and the edit-radius containment metric."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..jssp.schedule import Schedule


class KeyMismatch(ValueError):
    """The two schedules do not cover the same operations."""


@dataclass(frozen=True)
class EditRadius:
    ops_touched: int = 0
    jobs_touched: int = 0

    def to_dict(self) -> dict:
        return {"opsTouched": self.ops_touched, "jobsTouched": self.jobs_touched}


def changed_keys(before: Schedule, after: Schedule) -> list:
    a, b = before.by_key(), after.by_key()
    keys = sorted(set(a) | set(b), key=lambda k: (k[0], k[1]))
    out = []
    for k in keys:
        x, y = a.get(k), b.get(k)
        if x is None or y is None or (x.machine, x.start, x.end) != (y.machine, y.start, y.end):
            out.append(k)
    return out


def edit_radius(before: Schedule, after: Schedule) -> EditRadius:
    if set(before.by_key()) != set(after.by_key()):
        raise KeyMismatch("schedules cover different operations")
    changed = changed_keys(before, after)
    return EditRadius(len(changed), len({k[0] for k in changed}))


def loose_radius(before: Schedule, after: Schedule) -> EditRadius:
    """Like edit_radius, but added or dropped operations count as touched."""
    changed = changed_keys(before, after)
    return EditRadius(len(changed), len({k[0] for k in changed}))


@dataclass(frozen=True)
class RepairResult:
    schedule: Schedule
    errors_before: int
    errors_after: int
    iterations_used: int
    edit_radius: EditRadius
    fell_back_to_global: bool = False
    wip_units: float = 0
    history: tuple[int, ...] = ()
    escalations: int = 0
    neighborhood: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule.to_list(),
            "errorsBefore": self.errors_before,
            "errorsAfter": self.errors_after,
            "iterationsUsed": self.iterations_used,
            "editRadius": self.edit_radius.to_dict(),
            "fellBackToGlobal": self.fell_back_to_global,
            "wipUnits": self.wip_units,
            "history": list(self.history),
            "escalations": self.escalations,
        }
