"""Disruption events injected against a committed schedule."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .instance import JsspInstance, job_index, job_name, machine_index


@dataclass(frozen=True)
class Downtime:
    """A machine outage covering the half-open interval [start, end)."""

    machine: int
    start: int
    end: int

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError("downtime window must have start < end")

    def overlaps(self, start: int, end: int) -> bool:
        return start < self.end and end > self.start

    def to_dict(self) -> dict:
        return {"machine": self.machine, "from": self.start, "to": self.end}


@dataclass(frozen=True)
class Shock:
    job: str
    step: int
    delta: int


@dataclass(frozen=True)
class DisruptionEvent:
    kind: str  # "machineBreakdown" | "durationShock"
    at_time: int
    breakdown: Downtime | None = None
    shock: Shock | None = None

    def __post_init__(self):
        if self.kind == "machineBreakdown":
            if self.breakdown is None:
                raise ValueError("machineBreakdown needs a breakdown window")
        elif self.kind == "durationShock":
            if self.shock is None:
                raise ValueError("durationShock needs a shock record")
        else:
            raise ValueError(f"unknown disruption kind {self.kind!r}")

    @classmethod
    def machine_breakdown(cls, machine: int | str, start: int, end: int,
                          at_time: int | None = None) -> "DisruptionEvent":
        window = Downtime(machine_index(machine), int(start), int(end))
        return cls("machineBreakdown", window.start if at_time is None else at_time, breakdown=window)

    @classmethod
    def duration_shock(cls, job: str | int, step: int, delta: int, at_time: int = 0) -> "DisruptionEvent":
        name = job_name(job) if isinstance(job, int) else job_name(job_index(job))
        return cls("durationShock", at_time, shock=Shock(name, int(step), int(delta)))

    def shocked_duration(self, instance: JsspInstance) -> int:
        assert self.shock is not None
        base = instance.operation(self.shock.job, self.shock.step).duration
        new = base + self.shock.delta
        if new < 1:
            raise ValueError("duration shock would leave duration < 1")
        return new

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "atTime": self.at_time}
        if self.breakdown:
            d["breakdown"] = self.breakdown.to_dict()
        if self.shock:
            d["shock"] = {"job": self.shock.job, "step": self.shock.step, "delta": self.shock.delta}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DisruptionEvent":
        if d["kind"] == "machineBreakdown":
            b = d["breakdown"]
            return cls.machine_breakdown(b["machine"], b["from"], b["to"], d.get("atTime"))
        s = d["shock"]
        return cls.duration_shock(s["job"], s["step"], s["delta"], d.get("atTime", 0))


_BREAKDOWN_RE = re.compile(r"^\s*([A-Za-z]*\d+):(-?\d+):(-?\d+)\s*$")
_SHOCK_RE = re.compile(r"^\s*([A-Za-z]*\d+):(\d+):([+-]?\d+)\s*$")


def parse_breakdown(text: str) -> DisruptionEvent:
    """``M1:5:8`` -> breakdown of machine 1 over [5, 8)."""
    m = _BREAKDOWN_RE.match(text)
    if not m:
        raise ValueError(f"breakdown must look like M1:5:8, got {text!r}")
    return DisruptionEvent.machine_breakdown(m.group(1), int(m.group(2)), int(m.group(3)))


def parse_shock(text: str, at_time: int = 0) -> DisruptionEvent:
    """``J5:3:+2`` -> duration of Job5 step 3 grows by 2."""
    m = _SHOCK_RE.match(text)
    if not m:
        raise ValueError(f"shock must look like J5:3:+2, got {text!r}")
    return DisruptionEvent.duration_shock(m.group(1), int(m.group(2)), int(m.group(3)), at_time)


def downtime_of(events: Iterable[DisruptionEvent]) -> list[Downtime]:
    return [e.breakdown for e in events if e.breakdown is not None]


def shocked_instance(instance: JsspInstance, events: Iterable[DisruptionEvent]) -> JsspInstance:
    overrides: dict = {}
    current = instance
    for e in events:
        if e.shock is not None:
            overrides[(e.shock.job, e.shock.step)] = e.shocked_duration(current)
            current = instance.with_durations(overrides)
    return current
