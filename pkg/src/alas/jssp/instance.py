"""Job-shop instances and the OR-library text format."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence


class FormatError(ValueError):
    """Raised when instance text does not follow the OR-library layout."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Operation:
    machine: int
    duration: int


@dataclass(frozen=True)
class JsspInstance:
    name: str
    jobs: tuple[tuple[Operation, ...], ...]
    machine_count: int

    def __post_init__(self):
        for j, ops in enumerate(self.jobs):
            if not ops:
                raise ValueError(f"job {j + 1} has no operations")
            for op in ops:
                if not 0 <= op.machine < self.machine_count:
                    raise ValueError(f"job {j + 1}: machine {op.machine} out of range")
                if op.duration < 1:
                    raise ValueError(f"job {j + 1}: duration must be >= 1")

    @classmethod
    def from_lists(cls, jobs: Iterable[Sequence[tuple[int, int]]], machine_count: int | None = None,
                   name: str = "instance") -> "JsspInstance":
        built = tuple(tuple(Operation(int(m), int(d)) for m, d in job) for job in jobs)
        if machine_count is None:
            machine_count = 1 + max(op.machine for job in built for op in job)
        return cls(name=name, jobs=built, machine_count=machine_count)

    @property
    def job_count(self) -> int:
        return len(self.jobs)

    @property
    def op_count(self) -> int:
        return sum(len(ops) for ops in self.jobs)

    @property
    def max_ops_per_job(self) -> int:
        return max(len(ops) for ops in self.jobs)

    def total_duration(self) -> int:
        return sum(op.duration for ops in self.jobs for op in ops)

    def keys(self) -> list[tuple[str, int]]:
        return [(job_name(j), k + 1) for j, ops in enumerate(self.jobs) for k in range(len(ops))]

    def operation(self, job: str, step: int) -> Operation:
        j = job_index(job)
        if not 0 <= j < len(self.jobs) or not 1 <= step <= len(self.jobs[j]):
            raise KeyError((job, step))
        return self.jobs[j][step - 1]

    def has_operation(self, job: str, step: int) -> bool:
        try:
            self.operation(job, step)
        except (KeyError, ValueError):
            return False
        return True

    def with_durations(self, overrides: dict[tuple[str, int], int]) -> "JsspInstance":
        """Copy with some operation durations replaced (used for duration shocks)."""
        if not overrides:
            return self
        jobs = []
        for j, ops in enumerate(self.jobs):
            jobs.append(tuple(
                Operation(op.machine, overrides.get((job_name(j), k + 1), op.duration))
                for k, op in enumerate(ops)
            ))
        return JsspInstance(self.name, tuple(jobs), self.machine_count)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "machineCount": self.machine_count,
            "jobs": [[[op.machine, op.duration] for op in ops] for ops in self.jobs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JsspInstance":
        return cls.from_lists(data["jobs"], data["machineCount"], data.get("name", "instance"))


def job_name(index: int) -> str:
    return f"Job{index + 1}"


def machine_name(index: int) -> str:
    return f"Machine{index}"


_JOB_RE = re.compile(r"^(?:Job|J)(\d+)$", re.IGNORECASE)
_MACHINE_RE = re.compile(r"^(?:Machine|M)?(\d+)$", re.IGNORECASE)


def job_index(name: str) -> int:
    m = _JOB_RE.match(str(name).strip())
    if not m:
        raise ValueError(f"bad job name {name!r}")
    return int(m.group(1)) - 1


def machine_index(name: str | int) -> int:
    if isinstance(name, int):
        return name
    m = _MACHINE_RE.match(str(name).strip())
    if not m:
        raise ValueError(f"bad machine name {name!r}")
    return int(m.group(1))


def parse_instance(text: str, name: str = "instance") -> JsspInstance:
    """Parse OR-library job-shop text: a ``J M`` header, then one line of
    ``machine duration`` pairs per job. Blank lines and ``#`` comments are skipped."""
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise FormatError("empty instance")

    header_line, header = rows[0]
    if len(header) != 2:
        raise FormatError("header must hold job and machine counts", header_line)
    try:
        n_jobs, n_machines = int(header[0]), int(header[1])
    except ValueError:
        raise FormatError("header counts must be integers", header_line) from None
    if n_jobs < 1 or n_machines < 1:
        raise FormatError("job and machine counts must be positive", header_line)
    if len(rows) - 1 < n_jobs:
        raise FormatError(f"expected {n_jobs} job lines, found {len(rows) - 1}")

    jobs = []
    for lineno, tokens in rows[1:n_jobs + 1]:
        try:
            values = [int(t) for t in tokens]
        except ValueError:
            raise FormatError("non-integer token", lineno) from None
        if len(values) % 2 or not values:
            raise FormatError("expected machine/duration pairs", lineno)
        ops = []
        for machine, duration in zip(values[::2], values[1::2]):
            if not 0 <= machine < n_machines:
                raise FormatError(f"machine index {machine} outside 0..{n_machines - 1}", lineno)
            if duration < 1:
                raise FormatError(f"duration {duration} must be >= 1", lineno)
            ops.append(Operation(machine, duration))
        jobs.append(tuple(ops))
    for lineno, _ in rows[n_jobs + 1:]:
        raise FormatError("trailing data after job lines", lineno)
    return JsspInstance(name=name, jobs=tuple(jobs), machine_count=n_machines)


def format_instance(instance: JsspInstance) -> str:
    lines = [f"{instance.job_count} {instance.machine_count}"]
    for ops in instance.jobs:
        lines.append(" ".join(f"{op.machine} {op.duration}" for op in ops))
    return "\n".join(lines) + "\n"


def load_instance(path) -> JsspInstance:
    from pathlib import Path

    p = Path(path)
    return parse_instance(p.read_text(encoding="utf-8"), name=p.stem)
