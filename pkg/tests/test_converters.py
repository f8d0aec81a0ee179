import json
import random

import pytest
import yaml
from hypothesis import given, settings, strategies as st

from alas.converters import (UnsupportedConstruct, UnsupportedFeature, emit_argo, emit_asl, ingest_argo, ingest_asl,
                             random_ir, roundtrip_check)
from alas.ir import check_well_formed, ir_from_dict, load_ir
from alas.ir.guards import canonical

from conftest import DATA


def wf(nodes, edges=(), policies=None):
    return ir_from_dict({"Workflow": {"name": "w", "nodes": list(nodes), "edges": list(edges),
                                      "policies": policies or {"default": {}}, "schemas": {}, "logSchemas": {},
                                      "meta": {}}})


def node(nid, kind="task", **kw):
    return {"id": nid, "type": kind, "name": nid, "io": kw.pop("io", {}), **kw}


def seq(a, b, kind="sequence", guard=None):
    e = {"from": a, "to": b, "kind": kind}
    if guard is not None:
        e["guard"] = guard
    return e


def core_view(ir):
    """Node kinds, ordered edges and resolved policies: what must survive a round trip."""
    return ([(n.id, n.kind, n.policy_ref) for n in ir.nodes],
            [(e.src, e.dst, e.kind, canonical(e.guard) if e.guard else None) for e in ir.edges],
            ir.policies)


@pytest.fixture(scope="module")
def example():
    return load_ir(DATA / "policy_example.json")


# emit_asl

def test_task_timeout_becomes_timeout_seconds():
    doc = json.loads(emit_asl(wf([node("a")], policies={"default": {"timeout": {"seconds": 30}}})))
    state = doc["States"]["a"]
    assert doc["StartAt"] == "a"
    assert state["Type"] == "Task" and state["TimeoutSeconds"] == 30 and state["End"] is True


def test_parallel_with_two_branches():
    ir = wf([node("p", "parallel"), node("a"), node("b")], [seq("p", "a"), seq("p", "b")])
    state = json.loads(emit_asl(ir))["States"]["p"]
    assert state["Type"] == "Parallel"
    assert [b["StartAt"] for b in state["Branches"]] == ["a", "b"]


def test_compensation_routes_through_catch():
    # expected document written out by hand for a two-node fixture
    ir = wf([node("a", policyRef="comp"), node("b")], [seq("a", "b")],
            {"default": {}, "comp": {"idempotencyKey": {"template": "charge:{nodeId}"},
                                     "compensation": {"handler": "refund", "safeReinvoke": True}}})
    states = json.loads(emit_asl(ir))["States"]
    assert set(states) == {"a", "b", "__alas_compensation__refund"}
    a, b, h = states["a"], states["b"], states["__alas_compensation__refund"]
    assert a["Type"] == "Task" and a["Next"] == "b"
    assert a["Catch"] == [{"ErrorEquals": ["States.ALL"], "Next": "__alas_compensation__refund",
                           "ResultPath": "$.__alas_compensation"}]
    assert a["Parameters"] == {"__alas_idem_key": "charge:{nodeId}"}
    assert b["Type"] == "Task" and b["End"] is True and "Catch" not in b
    assert h["Type"] == "Task" and h["End"] is True


def _states(doc):
    """Every state in an ASL document, flattened across branches."""
    out = {}
    for name, st in doc["States"].items():
        out[name] = st
        for branch in st.get("Branches", []) + ([st["Iterator"]] if "Iterator" in st else []):
            out.update(_states(branch))
    return out


def test_retry_block(example):
    state = _states(json.loads(emit_asl(example)))["validate_plan"]
    (entry,) = state["Retry"]
    assert entry["ErrorEquals"] == ["Timeout", "NetworkError"]
    assert (entry["MaxAttempts"], entry["IntervalSeconds"], entry["BackoffRate"], entry["MaxDelaySeconds"]) == \
        (3, 0.5, 2.0, 8.0)


def test_choice_with_sequence_edge_unsupported():
    ir = wf([node("c", "choice", io={"output": {"x": "number"}}), node("a"), node("b")],
            [seq("c", "a", "branch", "x > 0"), seq("c", "b")])
    with pytest.raises(UnsupportedFeature):
        emit_asl(ir)


# emit_argo

def _argo(ir):
    doc = yaml.safe_load(emit_argo(ir))
    tasks = {t["name"]: t for t in doc["spec"]["templates"][0]["dag"]["tasks"]}
    templates = {t["name"]: t for t in doc["spec"]["templates"]}
    return doc, tasks, templates


def test_argo_document_shape(example):
    doc, tasks, templates = _argo(example)
    assert doc["apiVersion"] == "argoproj.io/v1alpha1" and doc["kind"] == "Workflow"
    retry = templates[tasks["validate_plan"]["template"]]["retryStrategy"]
    assert retry["limit"] == 3
    assert templates[tasks["validate_plan"]["template"]]["timeout"] == "30s"


def test_argo_when_clause():
    ir = wf([node("c", "choice", io={"output": {"x": "number"}}), node("a")], [seq("c", "a", "branch", "x > 0")])
    _, tasks, _ = _argo(ir)
    assert tasks["a"]["dependencies"] == ["c"]
    assert "{{tasks.c.outputs.parameters.x}} > 0" in tasks["a"]["when"]


def test_argo_map_fans_out_with_items():
    ir = wf([node("m", "map", params={"items": [1, 2, 3]})],
            policies={"default": {"loopGuards": {"maxIters": 3}}})
    _, tasks, _ = _argo(ir)
    assert tasks["m"]["withItems"] == [1, 2, 3]


def test_argo_compensation_is_exit_handler():
    ir = wf([node("a")], policies={"default": {"idempotencyKey": {"template": "{nodeId}"},
                                               "compensation": {"handler": "undo", "safeReinvoke": True}}})
    _, tasks, templates = _argo(ir)
    assert tasks["a"]["hooks"]["exit"]["template"] == "handler-undo"
    assert "handler-undo" in templates


# ingest

def test_asl_round_trip_on_example(example):
    assert core_view(ingest_asl(emit_asl(example))) == core_view(example)


def test_argo_round_trip_three_node_dag():
    ir = wf([node("a", io={"output": {"x": "number"}}), node("b"), node("c")],
            [seq("a", "b"), seq("a", "c"), seq("b", "c")],
            {"default": {"retry": {"maxAttempts": 2, "retryOn": ["Timeout"]},
                         "backoff": {"mode": "fixed", "base": 1}}})
    back = ingest_argo(emit_argo(ir))
    assert back == ir


def test_activity_arn_rejected():
    doc = {"StartAt": "a", "States": {"a": {"Type": "Task", "End": True,
                                            "Resource": "arn:aws:states:us-east-1:123456789012:activity:x"}}}
    with pytest.raises(UnsupportedConstruct, match="activity"):
        ingest_asl(json.dumps(doc))


@pytest.mark.parametrize("state", [{"Type": "Wait", "Seconds": 3, "End": True}, {"Type": "Succeed"}])
def test_other_state_types_rejected(state):
    with pytest.raises(UnsupportedConstruct):
        ingest_asl(json.dumps({"StartAt": "a", "States": {"a": state}}))


def test_argo_steps_template_rejected():
    doc = {"apiVersion": "argoproj.io/v1alpha1", "kind": "Workflow",
           "spec": {"entrypoint": "main", "templates": [{"name": "main", "steps": [[{"name": "s"}]]}]}}
    with pytest.raises(UnsupportedConstruct):
        ingest_argo(yaml.safe_dump(doc))


def test_foreign_asl_document():
    doc = {"StartAt": "a", "States": {
        "a": {"Type": "Task", "Resource": "arn:aws:lambda:us-east-1:1:function:f", "Next": "b",
              "TimeoutSeconds": 10, "Retry": [{"ErrorEquals": ["States.Timeout"], "MaxAttempts": 2,
                                                "IntervalSeconds": 1, "BackoffRate": 2.0}]},
        "b": {"Type": "Task", "Resource": "arn:aws:lambda:us-east-1:1:function:g", "End": True}}}
    ir = ingest_asl(json.dumps(doc))
    assert [n.id for n in ir.nodes] == ["a", "b"]
    assert [(e.src, e.dst) for e in ir.edges] == [("a", "b")]
    assert check_well_formed(ir) == []


# roundtrip_check

def test_example_parity_asl(example):
    report = roundtrip_check(example, "asl")
    assert report.parity_ok
    assert {"type", "ordering", "policy"} <= set(report.preserved)


def test_idempotency_key_is_lossy_but_parity_holds(example):
    report = roundtrip_check(example, "asl")
    lossy = {x["feature"]: x["fallbackUsed"] for x in report.lossy}
    assert lossy["idempotencyKey"] == "state input field"
    assert report.parity_ok


def test_compensation_preserved_under_argo(example):
    report = roundtrip_check(example, "argo")
    assert report.parity_ok
    assert "compensation" in report.preserved


def test_argo_default_edge_flagged_lossy():
    ir = wf([node("c", "choice", io={"output": {"x": "number"}}), node("a"), node("b")],
            [seq("c", "a", "branch", "x > 0"), seq("c", "b", "default")])
    report = roundtrip_check(ir, "argo")
    assert "default-edge" in {x["feature"] for x in report.lossy}


def test_report_serializes():
    d = roundtrip_check(random_ir(random.Random(1)), "asl").to_dict()
    assert set(d) == {"target", "preserved", "lossy", "parityOk", "mismatches"}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["asl", "argo"]))
def test_generated_irs_round_trip(seed, target):
    ir = random_ir(random.Random(seed))
    assert check_well_formed(ir) == []
    report = roundtrip_check(ir, target)
    assert report.parity_ok, report.mismatches


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_emission_is_deterministic(seed):
    ir = random_ir(random.Random(seed))
    clone = random_ir(random.Random(seed))
    assert emit_asl(ir) == emit_asl(clone)
    assert emit_argo(ir) == emit_argo(clone)
