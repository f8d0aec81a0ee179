import threading

import pytest
from hypothesis import given, settings, strategies as st

from alas.execlog import VersionedLog
from alas.ir import Backoff, CatchRule, Compensation, IdempotencyKey, LoopGuards, Policy, Retry, Timeout, load_ir
from alas.policy_runtime import (FaultPlan, IdempotencyStore, Injection, LoopGuard, LoopGuardExceeded, TaskError,
                                 VirtualClock, compute_backoff, idempotent_execute, inject_fault, run_with_policy)

from conftest import DATA
from oracles import backoff_table

P_DEFAULT = load_ir(DATA / "policy_example.json").policies["p_default"]


def failing(plan_nodes, kind="toolFailure", node="n"):
    return FaultPlan(tuple(Injection(node, a, kind) for a in plan_nodes))


def events(log, kind):
    return [e for e in log.entries if e.event_type == kind]


# compute_backoff

def test_fixed_backoff():
    b = Backoff("fixed", 0.5, None, 0)
    assert [compute_backoff(b, a) for a in (1, 4, 9)] == [0.5, 0.5, 0.5]


def test_exponential_table():
    b = Backoff("exponential", 0.5, 8.0, 0)
    got = [compute_backoff(b, a) for a in range(1, 7)]
    assert got == backoff_table("exponential", 0.5, 8.0, 6) == [0.5, 1.0, 2.0, 4.0, 8.0, 8.0]


def test_jitter_band_and_reproducible():
    b = Backoff("exponential", 1, 100, 0.5)
    d = compute_backoff(b, 3, seed=42)
    assert 2 <= d <= 6
    assert d == compute_backoff(b, 3, seed=42)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["fixed", "exponential"]), st.floats(0, 10), st.floats(0, 50), st.floats(0, 1),
       st.integers(1, 12), st.integers(0, 1000))
def test_backoff_bounds(mode, base, extra, jitter, attempt, seed):
    b = Backoff(mode, base, base + extra, jitter)
    plain = backoff_table(mode, base, base + extra, attempt)[-1]
    d = compute_backoff(b, attempt, seed)
    assert d >= 0
    assert plain * (1 - jitter) - 1e-9 <= d <= plain * (1 + jitter) + 1e-9


# inject_fault

def test_inject_fault_matching():
    plan = FaultPlan((Injection("n1", 2, "timeout"),))
    assert inject_fault(FaultPlan(), "n1", 2) is None
    assert inject_fault(plan, "n1", 2).fault == "timeout"
    assert inject_fault(plan, "n1", 1) is None


def test_injection_validation():
    with pytest.raises(ValueError):
        Injection("n", 0, "timeout")
    with pytest.raises(ValueError):
        Injection("n", 1, "meteor")


def test_fault_plan_file(tmp_path):
    p = tmp_path / "f.json"
    p.write_text('{"injections":[{"nodeId":"plan","attemptIndex":1,"fault":"constraintViolation",'
                 '"label":"precedence-swap"}]}', encoding="utf-8")
    plan = FaultPlan.load(p)
    assert plan.injections == (Injection("plan", 1, "constraintViolation", "precedence-swap"),)
    assert FaultPlan.from_dict(plan.to_dict()) == plan


# run_with_policy

def test_first_try_success():
    log = VersionedLog()
    out = run_with_policy(lambda ctx: 42, P_DEFAULT, FaultPlan(), log, node_id="n")
    assert (out.status, out.attempts, out.result) == ("success", 1, 42)
    assert not events(log, "Retry")


def test_two_failures_then_success():
    policy = Policy(Retry(3, ("ToolFailure",)), Backoff("exponential", 0.5, 8.0, 0), timeout=Timeout(30))
    log, clock = VersionedLog(), VirtualClock()
    out = run_with_policy(lambda ctx: "ok", policy, failing([1, 2]), log, clock, node_id="n")
    assert out.status == "success" and out.attempts == 3
    assert [e.payload["delay"] for e in events(log, "Retry")] == [0.5, 1.0]
    assert out.delays_applied == (0.5, 1.0)
    assert clock.now == 1.5


def test_retry_only_listed_classes():
    policy = Policy(Retry(3, ("Timeout",)), Backoff("fixed", 1))
    out = run_with_policy(lambda ctx: 1, policy, failing([1]), VersionedLog(), node_id="n")
    assert out.status == "failedUnhandled" and out.attempts == 1 and out.error_class == "ToolFailure"


def test_timeouts_then_compensation():
    policy = Policy(Retry(2, ("Timeout",)), Backoff("fixed", 1), timeout=Timeout(5),
                    idempotency_key=IdempotencyKey(template="{nodeId}"),
                    compensation=Compensation("undo", True))
    calls = []
    log = VersionedLog()
    out = run_with_policy(lambda ctx: 1, policy, failing([1, 2, 3], "timeout"), log, node_id="n",
                          compensation=lambda: calls.append(1), store=IdempotencyStore())
    assert out.status == "compensated"
    assert len(events(log, "Compensate")) == 1 and len(events(log, "Timeout")) == 3
    assert calls == [1]


def test_catch_first_match_wins():
    policy = Policy(catch=(CatchRule(("Other",), "h0"), CatchRule(("ToolFailure",), "h1"), CatchRule(("*",), "h2")))
    log = VersionedLog()
    out = run_with_policy(lambda ctx: 1, policy, failing([1]), log, node_id="n")
    assert (out.status, out.handler) == ("failedHandled", "h1")
    assert [e.payload["handler"] for e in events(log, "Catch")] == ["h1"]


def test_virtual_elapsed_over_timeout():
    def slow(ctx):
        ctx.clock.advance(10)
        return 1

    out = run_with_policy(slow, Policy(timeout=Timeout(3)), FaultPlan(), VersionedLog(), node_id="n")
    assert out.status == "timedOut" and out.error_class == "Timeout"


def test_task_exception_class_name():
    def boom(ctx):
        raise TaskError("NetworkError")

    policy = Policy(Retry(1, ("NetworkError",)), Backoff("fixed", 0.25))
    out = run_with_policy(boom, policy, FaultPlan(), VersionedLog(), node_id="n")
    assert out.attempts == 2 and out.error_class == "NetworkError"


def test_constraint_violation_reaches_task():
    seen = []
    plan = FaultPlan((Injection("n", 1, "constraintViolation", "precedence-swap"),))
    run_with_policy(lambda ctx: seen.append(ctx.injection), Policy(), plan, VersionedLog(), node_id="n")
    assert seen[0].label == "precedence-swap"


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 5), st.sets(st.integers(1, 8)), st.sampled_from(["timeout", "toolFailure"]),
       st.integers(0, 100))
def test_attempts_bounded_and_reproducible(max_attempts, failing_attempts, kind, seed):
    policy = Policy(Retry(max_attempts, ("Timeout", "ToolFailure")), Backoff("exponential", 0.5, 8.0, 0.3),
                    timeout=Timeout(2))
    plan = failing(sorted(failing_attempts), kind)
    runs = [run_with_policy(lambda ctx: 1, policy, plan, VersionedLog(), node_id="n", seed=seed)
            for _ in range(2)]
    assert runs[0].attempts <= 1 + max_attempts
    assert runs[0].delays_applied == runs[1].delays_applied


@settings(max_examples=60, deadline=None)
@given(st.sets(st.integers(1, 6)), st.booleans())
def test_each_decision_logged_once(failing_attempts, with_catch):
    policy = Policy(Retry(3, ("ToolFailure",)), Backoff("fixed", 1),
                    catch=(CatchRule(("ToolFailure",), "h"),) if with_catch else None)
    log = VersionedLog()
    out = run_with_policy(lambda ctx: 1, policy, failing(sorted(failing_attempts)), log, node_id="n")
    assert len(events(log, "Retry")) == len(out.delays_applied)
    assert len(events(log, "Catch")) == (1 if out.status == "failedHandled" else 0)


# loop guards

def test_loop_guard_iterations():
    guard = LoopGuard.from_policy(LoopGuards(max_iters=2), VirtualClock())
    guard.tick()
    guard.tick()
    with pytest.raises(LoopGuardExceeded):
        guard.tick()


def test_loop_guard_time_budget_stops_retries():
    clock = VirtualClock()
    guard = LoopGuard(time_budget=1.0, clock=clock)
    policy = Policy(Retry(5, ("ToolFailure",)), Backoff("fixed", 0.75))
    with pytest.raises(LoopGuardExceeded):
        run_with_policy(lambda ctx: 1, policy, failing([1, 2, 3, 4]), VersionedLog(), clock, node_id="n",
                        loop_guard=guard)


# idempotency

def test_idempotent_execute_caches():
    store, calls = IdempotencyStore(), []

    def task():
        calls.append(1)
        return 7

    assert idempotent_execute("k", task, store) == 7
    assert idempotent_execute("k", task, store) == 7
    assert len(calls) == 1


def test_distinct_keys_both_run():
    store, calls = IdempotencyStore(), []
    for key in ("a", "b"):
        idempotent_execute(key, lambda: calls.append(key), store)
    assert len(calls) == 2


def test_empty_key_rejected():
    with pytest.raises(ValueError):
        idempotent_execute("", lambda: 1, IdempotencyStore())


def test_failure_clears_pending():
    store = IdempotencyStore()

    def bad():
        raise RuntimeError("x")

    with pytest.raises(RuntimeError):
        idempotent_execute("k", bad, store)
    assert "k" not in store
    assert idempotent_execute("k", lambda: 3, store) == 3


def test_pending_waiter_gets_same_result():
    store = IdempotencyStore()
    gate, started = threading.Event(), threading.Event()
    calls, results = [], []

    def slow():
        calls.append(1)
        started.set()
        gate.wait(5)
        return "value"

    first = threading.Thread(target=lambda: results.append(idempotent_execute("k", slow, store)))
    first.start()
    started.wait(5)
    assert store.get("k").state == "PENDING"
    second = threading.Thread(target=lambda: results.append(idempotent_execute("k", slow, store)))
    second.start()
    gate.set()
    first.join(5)
    second.join(5)
    assert results == ["value", "value"] and len(calls) == 1


def test_compensation_twice_same_key_one_effect():
    policy = Policy(idempotency_key=IdempotencyKey(template="{nodeId}"), compensation=Compensation("undo", True))
    store, effects = IdempotencyStore(), []
    for _ in range(2):
        out = run_with_policy(lambda ctx: 1, policy, failing([1]), VersionedLog(), node_id="n",
                              compensation=lambda: effects.append("undo"), store=store, idempotency_key="n/undo")
        assert out.status == "compensated"
    assert effects == ["undo"]
