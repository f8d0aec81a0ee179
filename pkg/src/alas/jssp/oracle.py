"""Exhaustive optimum for tiny instances, used as a test oracle."""

from __future__ import annotations

from dataclasses import dataclass

from .instance import JsspInstance, job_name
from .schedule import Schedule

MAX_OPS = 12


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OptimumResult:
    makespan: int
    schedule: Schedule


def brute_force_optimum(instance: JsspInstance, prune: bool = True) -> OptimumResult:
    """Enumerate every interleaving of job sequences, build the semi-active
    schedule for each and keep the shortest.

    With ``prune`` a work-remaining lower bound and a memo of visited states
    cut the search; both are exact, so the result matches plain enumeration.
    """
    if instance.op_count > MAX_OPS:
        raise TooLarge(f"{instance.op_count} operations exceeds the oracle limit of {MAX_OPS}")
    jobs = instance.jobs
    n_jobs, n_machines = instance.job_count, instance.machine_count
    job_tail = [[sum(op.duration for op in ops[k:]) for k in range(len(ops) + 1)] for ops in jobs]

    best = [float("inf"), None]
    seen: set = set()
    progress = [0] * n_jobs
    job_ready = [0] * n_jobs
    machine_ready = [0] * n_machines
    starts: dict = {}

    def machine_tail() -> list[int]:
        tail = [0] * n_machines
        for j, ops in enumerate(jobs):
            for op in ops[progress[j]:]:
                tail[op.machine] += op.duration
        return tail

    def search(done: int) -> None:
        if done == instance.op_count:
            span = max(job_ready)
            if span < best[0]:
                best[0], best[1] = span, dict(starts)
            return
        if prune:
            state = (tuple(progress), tuple(machine_ready), tuple(job_ready))
            if state in seen:
                return
            seen.add(state)
            tail = machine_tail()
            bound = max(max(job_ready[j] + job_tail[j][progress[j]] for j in range(n_jobs)),
                        max(machine_ready[m] + tail[m] for m in range(n_machines)))
            if bound >= best[0]:
                return
        for j in range(n_jobs):
            k = progress[j]
            if k == len(jobs[j]):
                continue
            op = jobs[j][k]
            s = max(job_ready[j], machine_ready[op.machine])
            saved = (job_ready[j], machine_ready[op.machine])
            starts[(job_name(j), k + 1)] = s
            progress[j] += 1
            job_ready[j] = machine_ready[op.machine] = s + op.duration
            search(done + 1)
            progress[j] -= 1
            job_ready[j], machine_ready[op.machine] = saved
            del starts[(job_name(j), k + 1)]

    search(0)
    return OptimumResult(int(best[0]), Schedule.from_starts(instance, best[1], provenance="oracle"))
