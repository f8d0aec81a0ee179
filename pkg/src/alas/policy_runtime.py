"""Running one task under a Policy on a virtual clock."""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .execlog import VersionedLog
from .ir.model import Backoff, LoopGuards, Policy

FAULT_KINDS = ("timeout", "toolFailure", "constraintViolation")
_FAULT_CLASS = {"timeout": "Timeout", "toolFailure": "ToolFailure"}
_MATCH_ALL = ("*", "States.ALL")


class LoopGuardExceeded(RuntimeError):
    pass


class TaskError(Exception):
    """A task failure carrying the error class used for retry/catch matching."""

    def __init__(self, error_class: str, message: str = ""):
        self.error_class = error_class
        super().__init__(message or error_class)


class VirtualClock:
    def __init__(self, now: float = 0.0):
        self.now = now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("time does not run backwards")
        self.now += seconds


@dataclass(frozen=True)
class Injection:
    node_id: str
    attempt_index: int
    fault: str
    label: str | None = None

    def __post_init__(self):
        if self.fault not in FAULT_KINDS:
            raise ValueError(f"fault {self.fault!r} not in {FAULT_KINDS}")
        if self.attempt_index < 1:
            raise ValueError("attemptIndex must be >= 1")

    def to_dict(self) -> dict:
        d = {"nodeId": self.node_id, "attemptIndex": self.attempt_index, "fault": self.fault}
        if self.label is not None:
            d["label"] = self.label
        return d


@dataclass(frozen=True)
class FaultPlan:
    injections: tuple[Injection, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "FaultPlan":
        return cls(tuple(Injection(i["nodeId"], int(i["attemptIndex"]), i["fault"], i.get("label"))
                         for i in d.get("injections", [])))

    @classmethod
    def load(cls, path) -> "FaultPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {"injections": [i.to_dict() for i in self.injections]}


def inject_fault(plan: FaultPlan, node_id: str, attempt_index: int) -> Injection | None:
    for inj in plan.injections:
        if inj.node_id == node_id and inj.attempt_index == attempt_index:
            return inj
    return None


def compute_backoff(backoff: Backoff, attempt: int, seed: int = 0) -> float:
    """Delay before retry number ``attempt`` (1-based)."""
    if attempt < 1:
        raise ValueError("attempt must be >= 1")
    base = backoff.base or 0
    delay = base if backoff.mode == "fixed" else base * 2 ** (attempt - 1)
    if backoff.cap is not None:
        delay = min(backoff.cap, delay)
    j = backoff.jitter or 0
    if j > 0:
        delay *= random.Random(f"{seed}:{attempt}").uniform(1 - j, 1 + j)
    return max(0.0, delay)


@dataclass(frozen=True)
class AttemptContext:
    attempt: int
    injection: Injection | None
    clock: VirtualClock


@dataclass(frozen=True)
class AttemptOutcome:
    status: str  # success | failedHandled | failedUnhandled | timedOut | compensated
    attempts: int
    delays_applied: tuple[float, ...] = ()
    result: Any = None
    error_class: str | None = None
    handler: str | None = None

    def to_dict(self) -> dict:
        return {"status": self.status, "attempts": self.attempts, "delaysApplied": list(self.delays_applied),
                "result": self.result, "errorClass": self.error_class, "handler": self.handler}


@dataclass
class LoopGuard:
    max_iters: int | None = None
    time_budget: float | None = None
    deadline_seconds: float | None = None
    clock: VirtualClock = field(default_factory=VirtualClock)
    iterations: int = 0
    started: float | None = None

    @classmethod
    def from_policy(cls, guards: LoopGuards, clock: VirtualClock) -> "LoopGuard":
        return cls(guards.max_iters, guards.time_budget, guards.deadline_seconds, clock)

    def tick(self) -> None:
        self.iterations += 1
        self.check()

    def check(self) -> None:
        if self.started is None:
            self.started = self.clock.now
        if self.max_iters is not None and self.iterations > self.max_iters:
            raise LoopGuardExceeded(f"{self.iterations} iterations exceed maxIters {self.max_iters}")
        elapsed = self.clock.now - self.started
        for label, bound in (("timeBudget", self.time_budget), ("deadlineSeconds", self.deadline_seconds)):
            if bound is not None and elapsed > bound:
                raise LoopGuardExceeded(f"elapsed {elapsed:g}s exceeds {label} {bound:g}s")


@dataclass(frozen=True)
class IdempotencyRecord:
    key: str
    state: str  # SUCCESS | PENDING
    result: Any = None


class IdempotencyStore:
    """Key -> record map with atomic check-and-set."""

    def __init__(self):
        self._records: dict[str, IdempotencyRecord] = {}
        self._cond = threading.Condition()

    def get(self, key: str) -> IdempotencyRecord | None:
        with self._cond:
            return self._records.get(key)

    def __contains__(self, key: str) -> bool:
        return self.get(key) is not None

    def __len__(self) -> int:
        with self._cond:
            return len(self._records)

    def execute(self, key: str, task: Callable[[], Any]) -> Any:
        with self._cond:
            while True:
                rec = self._records.get(key)
                if rec is None:
                    self._records[key] = IdempotencyRecord(key, "PENDING")
                    break
                if rec.state == "SUCCESS":
                    return rec.result
                self._cond.wait()
        try:
            result = task()
        except BaseException:
            with self._cond:
                self._records.pop(key, None)
                self._cond.notify_all()
            raise
        with self._cond:
            self._records[key] = IdempotencyRecord(key, "SUCCESS", result)
            self._cond.notify_all()
        return result


def idempotent_execute(key: str, task: Callable[[], Any], store: IdempotencyStore) -> Any:
    if not key:
        raise ValueError("idempotency key must be non-empty")
    return store.execute(key, task)


def _matches(error_class: str, classes) -> bool:
    return any(c == error_class or c in _MATCH_ALL for c in classes)


def run_with_policy(task: Callable[[AttemptContext], Any], policy: Policy, faults: FaultPlan | None = None,
                    log: VersionedLog | None = None, clock: VirtualClock | None = None, *,
                    node_id: str = "task", seed: int = 0, correlation_id: str = "",
                    loop_guard: LoopGuard | None = None,
                    compensation: Callable[[], Any] | None = None,
                    store: IdempotencyStore | None = None, idempotency_key: str | None = None) -> AttemptOutcome:
    """Attempt ``task`` up to 1 + retry.maxAttempts times.

    Injected timeouts and tool failures replace the attempt; an injected
    constraint violation is handed to the task through its context so the
    task can corrupt its own output.
    """
    faults = faults or FaultPlan()
    clock = clock or VirtualClock()

    def emit(event, payload):
        if log is not None:
            log.append(event, node_id, payload, correlation_id)

    retry = policy.retry
    limit = 1 + (retry.max_attempts if retry is not None else 0)
    delays: list[float] = []
    error_class = None
    attempt = 0
    for attempt in range(1, limit + 1):
        if loop_guard is not None:
            loop_guard.check()
        inj = inject_fault(faults, node_id, attempt)
        started = clock.now
        try:
            if inj is not None and inj.fault in _FAULT_CLASS:
                if inj.fault == "timeout" and policy.timeout is not None:
                    clock.advance(policy.timeout.seconds)
                raise TaskError(_FAULT_CLASS[inj.fault], inj.label or "")
            result = task(AttemptContext(attempt, inj, clock))
            if policy.timeout is not None and clock.now - started > policy.timeout.seconds:
                raise TaskError("Timeout")
            return AttemptOutcome("success", attempt, tuple(delays), result)
        except TaskError as exc:
            error_class = exc.error_class
        except LoopGuardExceeded:
            raise
        except Exception as exc:  # noqa: BLE001 - any task failure is routed by class name
            error_class = type(exc).__name__
        if error_class == "Timeout":
            emit("Timeout", {"attempt": attempt, "elapsed": clock.now - started,
                             "timeoutSeconds": policy.timeout.seconds if policy.timeout else None})
        retryable = retry is not None and (retry.retry_on is None or _matches(error_class, retry.retry_on))
        if attempt < limit and retryable:
            delay = compute_backoff(policy.backoff, attempt, seed) if policy.backoff is not None else 0.0
            delays.append(delay)
            emit("Retry", {"attempt": attempt, "nextAttempt": attempt + 1, "delay": delay,
                           "errorClass": error_class})
            clock.advance(delay)
            continue
        break

    for rule in policy.catch or ():
        if _matches(error_class, rule.errors):
            emit("Catch", {"errorClass": error_class, "handler": rule.handler, "attempts": attempt})
            return AttemptOutcome("failedHandled", attempt, tuple(delays), None, error_class, rule.handler)
    comp = policy.compensation
    if comp is not None and comp.effective_trigger == "onFailure":
        handler = compensation or (lambda: None)
        key = idempotency_key or f"{node_id}/compensation"
        if comp.safe_reinvoke and store is not None:
            idempotent_execute(key, handler, store)
        else:
            handler()
        emit("Compensate", {"errorClass": error_class, "handler": comp.handler, "attempts": attempt,
                            "idempotencyKey": key if comp.safe_reinvoke else None})
        return AttemptOutcome("compensated", attempt, tuple(delays), None, error_class, comp.handler)
    status = "timedOut" if error_class == "Timeout" else "failedUnhandled"
    return AttemptOutcome(status, attempt, tuple(delays), None, error_class)
