import inspect
import json
import random
import re

import pytest
from hypothesis import given, settings, strategies as st

from alas.execlog import VersionedLog
from alas.jssp import JsspInstance, Schedule, makespan, parse_breakdown, seed_plan, validate_schedule
from alas.lcrp import EditRadius, RepairResult
from alas.pipeline import (CORE_EVENTS, EmptyInput, PipelineHalted, RunConfig, RunResult, default_registry,
                           isolated_validate, run_pipeline, supervise)
from alas.policy_runtime import FaultPlan, Injection

from conftest import DATA, random_instance

LETTER = dict(zip(CORE_EVENTS, "SEPFRAC"))
# plan, validate, repair iterations, revalidate, optional optimize/final-check, then one block per disruption
GRAMMAR = re.compile(r"SS(?:FRA*C?)*(?:F|P(?:SPE)?(?:SRA+(?:FRA*)*PCE)*)E")
FAULTS = ("precedence-swap", "machine-double-book", "capacity-overflow", "deadline-miss")


def core(log):
    return "".join(LETTER[e.event_type] for e in log.entries if e.event_type in LETTER)


def run(config):
    log = VersionedLog()
    try:
        return run_pipeline(config, log=log), log
    except PipelineHalted as exc:
        return exc, log


def random_config(seed):
    rng = random.Random(seed)
    inst = random_instance(rng, rng.randint(2, 6), rng.randint(2, 4))
    inj = []
    if rng.random() < 0.5:
        inj.append(Injection("plan", 1, "constraintViolation", rng.choice(FAULTS)))
    if rng.random() < 0.3:
        inj.append(Injection("validate", 1, "toolFailure"))
    events = ()
    if rng.random() < 0.5:
        at = rng.randint(0, makespan(seed_plan(inst, "spt")))
        events = (parse_breakdown(f"M{rng.randrange(inst.machine_count)}:{at}:{at + rng.randint(1, 5)}"),)
    return RunConfig(inst, seed=seed, faults=FaultPlan(tuple(inj)), disruptions=events,
                     optimize=rng.random() < 0.8, repair_budget=rng.randint(1, 5))


def test_single_op_instance():
    res = run_pipeline(RunConfig(JsspInstance.from_lists([[(0, 5)]], 1, "one")))
    assert res.makespan == 5 and res.valid and res.repair_iterations == 0


def test_5x3_breakdown_reaches_22(fig2, fig2_plan):
    log = VersionedLog()
    res = run_pipeline(RunConfig(fig2, disruptions=(parse_breakdown("M1:5:8"),), plan=fig2_plan, optimize=False),
                       log=log)
    assert res.makespan == 22 and res.valid and res.wip_units == 1
    kinds = [e.event_type for e in log.entries]
    assert "ValidateFail" not in kinds and "Compensate" not in kinds
    assert kinds.index("RepairCommit") > kinds.index("RepairApply")
    assert [(d.machine, d.start, d.end) for d in res.downtime] == [(1, 5, 8)]


def test_injected_violation_is_repaired(fig2):
    faults = FaultPlan((Injection("plan", 1, "constraintViolation", "machine-double-book"),))
    log = VersionedLog()
    res = run_pipeline(RunConfig(fig2, faults=faults), log=log)
    kinds = [e.event_type for e in log.entries]
    assert kinds.index("ValidateFail") < kinds.index("RepairStart")
    assert res.valid and validate_schedule(res.final_schedule, fig2).valid


def test_validator_tool_failure_is_retried(fig2):
    faults = FaultPlan((Injection("validate", 1, "toolFailure"),))
    log = VersionedLog()
    res = run_pipeline(RunConfig(fig2, faults=faults), log=log)
    assert res.valid
    retries = [e for e in log.entries if e.event_type == "Retry"]
    assert [e.payload["delay"] for e in retries] == [0.5]


def test_unrepairable_run_halts(fig2):
    faults = FaultPlan((Injection("plan", 1, "constraintViolation", "precedence-swap"),))
    with pytest.raises(PipelineHalted) as err:
        run_pipeline(RunConfig(fig2, faults=faults, repair_budget=1, global_fallback=False),
                     registry={**default_registry(), "repair": _no_repair, "escalate": _no_repair})
    halted = err.value
    assert halted.log.entries[-1].event_type == "EndNode" and halted.log.entries[-1].payload["halted"]
    assert GRAMMAR.fullmatch(core(halted.log))


def _no_repair(schedule, instance, *args, observer=None, **kwargs):
    """A repair step that never improves anything."""
    report = validate_schedule(schedule, instance)
    if observer is not None:
        observer(1, report, report, False, schedule)
    return RepairResult(schedule, len(report.errors), len(report.errors), 1, EditRadius())


def test_budget_validated(fig2):
    with pytest.raises(ValueError):
        RunConfig(fig2, repair_budget=0)


def test_isolated_validator_interface():
    assert list(inspect.signature(isolated_validate).parameters) == ["candidate", "log_slice", "instance"]


def test_isolated_validator_reads_downtime_from_log(fig2, fig2_plan):
    log = VersionedLog()
    log.append("StartNode", "disrupt", {"event": parse_breakdown("M1:5:8").to_dict()})
    assert not isolated_validate(fig2_plan, log.slice(node_id="disrupt"), fig2).valid
    assert isolated_validate(fig2_plan, [], fig2).valid


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_log_follows_step_grammar(seed):
    _, log = run(random_config(seed))
    assert GRAMMAR.fullmatch(core(log)), core(log)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_identical_config_identical_run(seed):
    (a, la), (b, lb) = run(random_config(seed)), run(random_config(seed))
    assert [e.event_key() for e in la.entries] == [e.event_key() for e in lb.entries]
    if isinstance(a, RunResult):
        assert a == b


def test_result_round_trips_through_json(fig2):
    res = run_pipeline(RunConfig(fig2, seed=3))
    back = RunResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert back == res


def test_critical_ops_end_at_makespan(fig2):
    res = run_pipeline(RunConfig(fig2))
    by_key = res.final_schedule.by_key()
    assert max(by_key[tuple(k)].end for k in res.critical_ops) == res.makespan


# supervise

def _result(ms, seed, valid=True, ops=0):
    return RunResult(Schedule(()), ms, False, 0, EditRadius(ops, ops), None, (), seed, "x", valid)


def test_supervise_single():
    r = _result(22, 0)
    assert supervise([r])["best"] is r


def test_supervise_best_makespan():
    out = supervise([_result(25, 0, ops=4), _result(22, 1, valid=False, ops=2)])
    assert out["best"].makespan == 22
    assert out["meanEditRadius"] == 3 and out["successFraction"] == 0.5


def test_supervise_tie_lowest_seed():
    assert supervise([_result(22, 2), _result(22, 1)])["best"].seed == 1


def test_supervise_empty():
    with pytest.raises(EmptyInput):
        supervise([])


# config files

def test_config_from_toml(tmp_path):
    (tmp_path / "f.json").write_text('{"injections":[{"nodeId":"validate","attemptIndex":1,"fault":"timeout"}]}',
                                     encoding="utf-8")
    (tmp_path / "run.toml").write_text(
        f'instance = "{(DATA / "fig2.jssp").as_posix()}"\nplanner = "lpt"\nseed = 4\nrepairBudget = 3\n'
        'breakdowns = ["M1:5:8"]\nwipPenalty = 2.0\nfaults = "f.json"\n', encoding="utf-8")
    cfg = RunConfig.load(tmp_path / "run.toml")
    assert (cfg.planner_rule, cfg.seed, cfg.repair_budget, cfg.wip_penalty) == ("lpt", 4, 3, 2.0)
    assert cfg.disruptions == (parse_breakdown("M1:5:8"),)
    assert cfg.faults.injections[0].fault == "timeout"


def test_config_from_json_relative_instance(tmp_path):
    (tmp_path / "i.jssp").write_text("2 2\n0 2 1 3\n1 1 0 4\n", encoding="utf-8")
    (tmp_path / "run.json").write_text('{"instance": "i.jssp", "shocks": ["J1:2:+1"], "shockAt": 2}',
                                       encoding="utf-8")
    cfg = RunConfig.load(tmp_path / "run.json")
    assert cfg.instance.job_count == 2 and cfg.disruptions[0].at_time == 2
    assert run_pipeline(cfg).valid
