"""IR -> engine -> IR parity checks."""

from __future__ import annotations

from ..ir.checks import resolved_policy_name
from ..ir.guards import GuardError, canonical
from ..ir.model import WorkflowIR
from .argo import emit_argo, ingest_argo
from .asl import emit_asl, ingest_asl
from .common import ConversionReport, UnsupportedConstruct, UnsupportedFeature

CORE = ("type", "ordering", "policy")
TARGETS = {"asl": (emit_asl, ingest_asl), "argo": (emit_argo, ingest_argo)}

# features that survive only through a declared fallback, per target
_FALLBACKS = {
    "asl": {"idempotencyKey": "state input field", "compensation": "handler task routed via Catch",
            "loopGuards": "comment residue", "jitter": "comment residue",
            "timeout(non-task)": "comment residue"},
    "argo": {"idempotencyKey": "state input field", "default-edge": "unconditioned dependency",
             "loopGuards": "annotation residue", "jitter": "annotation residue"},
}


def _guard_key(g):
    if g is None:
        return None
    try:
        return canonical(g)
    except GuardError:
        return g


def _kinds(ir: WorkflowIR):
    return [(n.id, n.kind) for n in ir.nodes]


def _ordering(ir: WorkflowIR):
    return [(e.src, e.dst, e.kind, _guard_key(e.guard)) for e in ir.edges]


def _policies(ir: WorkflowIR):
    per_node = []
    for n in ir.nodes:
        name = resolved_policy_name(ir, n)
        per_node.append((n.id, n.policy_ref, ir.policies[name] if name is not None else None))
    return per_node, ir.policies


def _features(ir: WorkflowIR) -> list[str]:
    found = []

    def add(name):
        if name not in found:
            found.append(name)

    for n in ir.nodes:
        add(n.kind)
        name = resolved_policy_name(ir, n)
        p = ir.policies.get(name) if name else None
        if p is None:
            continue
        for attr, label in (("retry", "retry"), ("backoff", "backoff"), ("catch", "catch"), ("timeout", "timeout"),
                            ("idempotency_key", "idempotencyKey"), ("compensation", "compensation"),
                            ("loop_guards", "loopGuards")):
            if getattr(p, attr) is not None:
                add(label)
        if p.backoff is not None and p.backoff.jitter is not None:
            add("jitter")
        if p.timeout is not None and n.kind != "task":
            add("timeout(non-task)")
    for e in ir.edges:
        if e.kind == "branch":
            add("guards")
        if e.kind == "default":
            add("default-edge")
    return found


def roundtrip_check(ir: WorkflowIR, target: str) -> ConversionReport:
    if target not in TARGETS:
        raise ValueError(f"unknown target {target!r}")
    emit, ingest = TARGETS[target]
    try:
        back = ingest(emit(ir))
    except (UnsupportedFeature, UnsupportedConstruct) as exc:
        return ConversionReport(target, (), (), False, (f"{type(exc).__name__}: {exc}",))
    mismatches = []
    if _kinds(ir) != _kinds(back):
        mismatches.append("type")
    if _ordering(ir) != _ordering(back):
        mismatches.append("ordering")
    if _policies(ir) != _policies(back):
        mismatches.append("policy")
    preserved = [c for c in CORE if c not in mismatches]
    lossy = []
    fallbacks = _FALLBACKS[target]
    for feature in _features(ir):
        if feature in fallbacks:
            lossy.append({"feature": feature, "fallbackUsed": fallbacks[feature]})
        if not mismatches:
            preserved.append(feature)
    return ConversionReport(target, tuple(preserved), tuple(lossy), not mismatches, tuple(mismatches))
