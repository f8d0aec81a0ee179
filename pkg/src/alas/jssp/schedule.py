"""Schedules: flat lists of timed operation assignments."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .instance import JsspInstance, job_index, job_name, machine_index, machine_name

Key = tuple[str, int]


class EmptySchedule(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleEntry:
    job: str
    step: int
    machine: str
    start: int
    end: int
    duration: int

    @property
    def key(self) -> Key:
        return (self.job, self.step)

    @property
    def machine_id(self) -> int:
        return machine_index(self.machine)

    def moved(self, start: int, duration: int | None = None) -> "ScheduleEntry":
        d = self.duration if duration is None else duration
        return replace(self, start=start, end=start + d, duration=d)

    def to_dict(self) -> dict:
        return {"job": self.job, "step": self.step, "machine": self.machine,
                "start": self.start, "end": self.end, "duration": self.duration}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScheduleEntry":
        start, end = int(d["start"]), int(d["end"])
        return cls(job=str(d["job"]), step=int(d["step"]), machine=str(d["machine"]),
                   start=start, end=end, duration=int(d.get("duration", end - start)))


@dataclass(frozen=True)
class Schedule:
    entries: tuple[ScheduleEntry, ...]
    provenance: str = "planner"
    version: int = 0

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.key in seen:
                raise ValueError(f"duplicate entry for {e.key}")
            seen.add(e.key)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_key(self) -> dict[Key, ScheduleEntry]:
        return {e.key: e for e in self.entries}

    def replaced(self, updates: Mapping[Key, ScheduleEntry], provenance: str | None = None) -> "Schedule":
        """Copy with some entries swapped out; entry order is preserved."""
        entries = tuple(updates.get(e.key, e) for e in self.entries)
        return Schedule(entries, provenance or self.provenance, self.version)

    def machine_queues(self) -> dict[str, list[ScheduleEntry]]:
        queues: dict[str, list[ScheduleEntry]] = {}
        for e in self.entries:
            queues.setdefault(e.machine, []).append(e)
        for q in queues.values():
            q.sort(key=lambda e: (e.start, e.end, job_index(e.job), e.step))
        return dict(sorted(queues.items(), key=lambda kv: machine_index(kv[0])))

    def to_list(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_list(), indent=indent)

    def digest(self) -> str:
        rows = sorted((e.job, e.step, e.machine, e.start, e.end) for e in self.entries)
        return hashlib.sha256(json.dumps(rows).encode()).hexdigest()[:16]

    @classmethod
    def from_list(cls, rows: Iterable[Mapping], provenance: str = "planner", version: int = 0) -> "Schedule":
        return cls(tuple(ScheduleEntry.from_dict(r) for r in rows), provenance, version)

    @classmethod
    def from_json(cls, text: str, provenance: str = "planner") -> "Schedule":
        data = json.loads(text)
        if isinstance(data, dict):
            data = data.get("schedule", data.get("entries"))
        return cls.from_list(data, provenance)

    @classmethod
    def from_starts(cls, instance: JsspInstance, starts: Mapping[Key, int],
                    provenance: str = "planner") -> "Schedule":
        """Build a schedule from start times, taking machines and durations from the instance."""
        entries = []
        for j, ops in enumerate(instance.jobs):
            for k, op in enumerate(ops):
                key = (job_name(j), k + 1)
                if key in starts:
                    s = int(starts[key])
                    entries.append(ScheduleEntry(key[0], key[1], machine_name(op.machine),
                                                 s, s + op.duration, op.duration))
        return cls(tuple(entries), provenance)


def makespan(schedule: Schedule | Iterable[ScheduleEntry]) -> int:
    entries = list(schedule)
    if not entries:
        raise EmptySchedule("makespan of an empty schedule")
    return max(e.end for e in entries)


def critical_operations(schedule: Schedule) -> list[Key]:
    """Operations on one critical path, traced back from the last-finishing op.

    Each step follows a job or machine predecessor that ends exactly when the
    current op starts; ties prefer the job predecessor."""
    if not schedule.entries:
        return []
    by_key = schedule.by_key()
    machine_prev: dict[Key, ScheduleEntry] = {}
    for queue in schedule.machine_queues().values():
        for a, b in zip(queue, queue[1:]):
            machine_prev[b.key] = a
    current = max(schedule.entries, key=lambda e: (e.end, -job_index(e.job), -e.step))
    path = [current.key]
    while current.start > 0:
        job_prev = by_key.get((current.job, current.step - 1))
        nxt = None
        if job_prev is not None and job_prev.end == current.start:
            nxt = job_prev
        elif current.key in machine_prev and machine_prev[current.key].end == current.start:
            nxt = machine_prev[current.key]
        if nxt is None:
            break
        current = nxt
        path.append(current.key)
    path.reverse()
    return path
