"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import math
import random
import time

from alas.converters import random_ir, roundtrip_check
from alas.execlog import VersionedLog, replay
from alas.ir import load_ir
from alas.jssp import (JsspInstance, brute_force_optimum, makespan, parse_breakdown, seed_plan,
                       validate_schedule)
from alas.jssp.faults import CATEGORIES, EXPECTED_CODES, corrupt_schedule, inject_fault, scope_matches
from alas.lcrp import (WipModel, contain_disruption, edit_radius, global_recompute, local_compensate, optimize,
                       queue_reorder, repair, repair_with_escalation)
from alas.pipeline import PipelineHalted, RunConfig, default_registry, run_pipeline
from alas.policy_runtime import (FaultPlan, IdempotencyStore, Injection, VirtualClock, idempotent_execute,
                                 run_with_policy)

from conftest import DATA, as_pairs, random_instance
from oracles import exhaustive_optimum, naive_makespan, naive_violations

RESULTS = []


def verdict(name, ok, detail, elapsed, limit=None):
    within = limit is None or elapsed < limit
    line = f"{'PASS' if ok and within else 'FAIL'} {name}: {detail}; {elapsed:.2f}s" + \
        (f" (limit {limit}s)" if limit else "")
    RESULTS.append(line)
    print(line)
    assert ok, line
    assert within, line


def test_fixture_breakdown(fig2, fig2_plan):
    t = time.perf_counter()
    ev = parse_breakdown("M1:5:8")
    wip = WipModel.from_schedule(fig2_plan, penalty_per_unit=1.0)
    phase1 = local_compensate(fig2_plan, fig2, ev, wip)
    phase2 = queue_reorder(phase1.schedule, fig2, ev, wip, neighborhood=phase1.neighborhood)
    out = phase2.schedule
    early = [k for k, e in fig2_plan.by_key().items() if e.machine in ("Machine0", "Machine2") and e.end <= 5]
    kept = all(out.by_key()[k] == fig2_plan.by_key()[k] for k in early)
    valid = validate_schedule(out, fig2, [ev.breakdown]).valid
    elapsed = time.perf_counter() - t
    ok = makespan(fig2_plan) == 19 and makespan(out) == 22 and phase2.wip_units == 1 and kept and valid
    verdict("fixture 19 -> 22 with one WIP unit", ok,
            f"plan {makespan(fig2_plan)}, repaired {makespan(out)}, wip {phase2.wip_units}, "
            f"{len(early)} early M0/M2 ops kept={kept}, valid={valid}", elapsed, 1)


def test_validator_fault_injection():
    t = time.perf_counter()
    rng = random.Random(42)
    flagged = false_pos = 0
    for i in range(20):
        inst = random_instance(rng, 6, 4)
        plan = seed_plan(inst, "random", i)
        false_pos += not validate_schedule(plan, inst).valid
        category = CATEGORIES[i % 4]
        bad, scope = inject_fault(plan, inst, category, rng)
        report = validate_schedule(bad, inst)
        flagged += any(e.code in EXPECTED_CODES[category] and scope_matches(e.scope, scope) for e in report.errors)
    elapsed = time.perf_counter() - t
    verdict("validator fault injection", flagged == 20 and false_pos == 0,
            f"flagged {flagged}/20 with scope, false positives {false_pos}/20", elapsed, 5)


def test_repair_convergence():
    t = time.perf_counter()
    zero = 0
    monotone = True
    escalated_valid = escalated = 0
    for i in range(100):
        rng = random.Random(1000 + i)
        inst = random_instance(rng, 6, 4)
        bad = corrupt_schedule(seed_plan(inst, "random", i), inst, rng.randint(3, 10), rng)
        res = repair(bad, inst, budget=5)
        monotone &= all(a >= b for a, b in zip(res.history, res.history[1:])) and res.iterations_used <= 5
        if res.errors_after == 0:
            zero += 1
        else:
            escalated += 1
            escalated_valid += validate_schedule(repair_with_escalation(res.schedule, inst).schedule, inst).valid
    elapsed = time.perf_counter() - t
    verdict("repair convergence", monotone and zero >= 95 and escalated_valid == escalated,
            f"{zero}/100 reached zero, monotone={monotone}, escalated {escalated_valid}/{escalated} valid",
            elapsed, 30)


def _small_instance(rng):
    """At most 12 operations in total."""
    machines = rng.randint(2, 3)
    jobs = []
    while len(jobs) < 4:
        n = rng.randint(1, machines)
        if sum(map(len, jobs)) + n > 12:
            break
        jobs.append([(m, rng.randint(1, 6)) for m in rng.sample(range(machines), n)])
    return JsspInstance.from_lists(jobs, machines)


def test_oracle_equivalence(tiny):
    t = time.perf_counter()
    rng = random.Random(7)
    bounded = clean = 0
    for i in range(50):
        inst = _small_instance(rng)
        assert inst.op_count <= 12
        res = run_pipeline(RunConfig(inst, seed=i))
        opt = brute_force_optimum(inst).makespan
        rows = res.final_schedule.to_list()
        bounded += res.makespan >= opt == exhaustive_optimum(as_pairs(inst))
        clean += not naive_violations(rows, as_pairs(inst)) and naive_makespan(rows) == res.makespan
    tiny_ms = run_pipeline(RunConfig(tiny)).makespan
    tiny_opt = brute_force_optimum(tiny).makespan
    elapsed = time.perf_counter() - t
    verdict("oracle equivalence", bounded == 50 and clean == 50 and tiny_ms == tiny_opt,
            f"{bounded}/50 >= optimum, {clean}/50 pass naive checker, 2x2 {tiny_ms} vs optimum {tiny_opt}",
            elapsed, 60)


def test_containment_vs_global():
    t = time.perf_counter()
    local_r, global_r, local_d, global_d, pre = [], [], [], [], []
    valid = 0
    for i in range(50):
        rng = random.Random(2000 + i)
        inst = random_instance(rng, 6, 4)
        plan = optimize(seed_plan(inst, "spt"), inst)
        ms = makespan(plan)
        at = ms // 2
        ev = parse_breakdown(f"M{rng.randrange(4)}:{at}:{at + rng.randint(2, 6)}")
        local = contain_disruption(plan, inst, ev)
        glob = global_recompute(local.instance, "spt", schedule=plan, at_time=at, downtime=[ev.breakdown])
        valid += validate_schedule(local.schedule, inst, [ev.breakdown]).valid and \
            validate_schedule(glob, inst, [ev.breakdown]).valid
        local_r.append(local.result.edit_radius.ops_touched)
        global_r.append(edit_radius(plan, glob).ops_touched)
        local_d.append(makespan(local.schedule) - ms)
        global_d.append(makespan(glob) - ms)
        pre.append(ms)
    mean = lambda xs: sum(xs) / len(xs)  # noqa: E731
    # 5% tolerance taken relative to the mean pre-disruption makespan
    tol = 0.05 * mean(pre)
    ok = valid == 50 and mean(local_r) < mean(global_r) and mean(local_d) <= mean(global_d) + tol
    elapsed = time.perf_counter() - t
    verdict("containment vs global recompute", ok,
            f"edit radius {mean(local_r):.2f} vs {mean(global_r):.2f}, degradation {mean(local_d):.2f} vs "
            f"{mean(global_d):.2f} (+{tol:.2f} tolerance), {valid}/50 valid", elapsed, 60)


def test_round_trip_parity():
    t = time.perf_counter()
    counts = {"asl": 0, "argo": 0}
    for seed in range(200):
        ir = random_ir(random.Random(seed))
        for target in counts:
            counts[target] += roundtrip_check(ir, target).parity_ok
    elapsed = time.perf_counter() - t
    verdict("round-trip parity", counts == {"asl": 200, "argo": 200},
            f"asl {counts['asl']}/200, argo {counts['argo']}/200", elapsed, 10)


def _replay_config(i):
    rng = random.Random(3000 + i)
    inst = random_instance(rng, rng.randint(3, 6), rng.randint(2, 4), name=f"r{i}")
    inj = [Injection("plan", 1, "constraintViolation", CATEGORIES[i % 4])] if i % 2 else []
    if i % 3 == 0:
        inj.append(Injection("validate", 1, rng.choice(("timeout", "toolFailure"))))
    at = makespan(seed_plan(inst, "spt")) // 2
    events = (parse_breakdown(f"M{rng.randrange(inst.machine_count)}:{at}:{at + 3}"),) if i % 4 == 0 else ()
    return RunConfig(inst, planner_rule=("spt", "lpt", "random")[i % 3], seed=i * 17,
                     faults=FaultPlan(tuple(inj)), disruptions=events)


def test_replay_parity():
    t = time.perf_counter()
    matched = 0
    for i in range(20):
        cfg = _replay_config(i)
        log = VersionedLog()
        try:
            run_pipeline(cfg, log=log)
        except PipelineHalted:
            pass
        first = replay(log, default_registry(), cfg.seed)
        second = replay(log, default_registry(), cfg.seed)
        matched += first["parityOk"] and first == second
    elapsed = time.perf_counter() - t
    verdict("replay parity", matched == 20, f"{matched}/20 replays matched with identical final hash", elapsed, 20)


def test_policy_semantics():
    t = time.perf_counter()
    policy = load_ir(DATA / "policy_example.json").policies["p_default"]
    plan = FaultPlan((Injection("n", 1, "timeout"), Injection("n", 2, "timeout")))
    log, clock = VersionedLog(), VirtualClock()
    out = run_with_policy(lambda ctx: "ok", policy, plan, log, clock, node_id="n")
    delays = [e.payload["delay"] for e in log.entries if e.event_type == "Retry"]
    store, calls = IdempotencyStore(), []
    for _ in range(2):
        idempotent_execute("n/key", lambda: calls.append(1), store)
    ok = delays == [0.5, 1.0] and out.attempts == 3 and out.status == "success" and len(calls) == 1
    elapsed = time.perf_counter() - t
    verdict("policy semantics", ok, f"delays {delays}, attempts {out.attempts}, invocations {len(calls)}", elapsed)


def test_repair_scaling_trend():
    # observation only: log-log slope of median repair time against J*O_max
    t = time.perf_counter()
    xs, ys = [], []
    for jobs in (4, 8, 16, 32):
        times = []
        for s in range(5):
            rng = random.Random(jobs * 100 + s)
            inst = random_instance(rng, jobs, 4)
            bad = corrupt_schedule(seed_plan(inst, "random", s), inst, 5, rng)
            t0 = time.perf_counter()
            repair(bad, inst)
            times.append(time.perf_counter() - t0)
        xs.append(math.log(jobs * 4))
        ys.append(math.log(sorted(times)[2]))
    mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
    slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)
    verdict("repair scaling trend (observation)", slope <= 2.3, f"log-log slope {slope:.2f}",
            time.perf_counter() - t)
