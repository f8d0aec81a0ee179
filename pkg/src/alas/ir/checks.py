"""Static checks over a parsed workflow: graph rules, policy rules, repair coverage."""

from __future__ import annotations

import math
import re
from typing import Iterable

from .guards import GuardError, parse_guard, type_errors
from .model import (EDIT_KINDS, Diagnostic, MissingPolicy, NodeSpec, Policy, RepairSpec, WorkflowIR)

_EDIT_FOR_TAG = {"time": "time-shift", "order": "order-swap", "resource": "resource-reassign"}
# disruption class -> edits able to address it (None = any edit)
DISRUPTION_EDITS = {
    "machine-breakdown": None,
    "duration-shock": {"time-shift", "order-swap"},
    "resource-swap": {"resource-reassign"},
    "order-change": {"order-swap"},
}


def _node_path(i: int, field: str = "") -> str:
    return f"Workflow.nodes[{i}]" + (f".{field}" if field else "")


def _edge_path(i: int, field: str = "") -> str:
    return f"Workflow.edges[{i}]" + (f".{field}" if field else "")


def resolve_policy(ir: WorkflowIR, node_id: str) -> Policy:
    node = ir.node(node_id)
    if node.policy_ref is not None:
        return ir.policies[node.policy_ref]
    default = ir.default_policy_name()
    if default is None:
        raise MissingPolicy(f"node {node_id!r} has no policyRef and the workflow has no default policy")
    return ir.policies[default]


def resolved_policy_name(ir: WorkflowIR, node: NodeSpec) -> str | None:
    return node.policy_ref if node.policy_ref is not None else ir.default_policy_name()


def _sccs(nodes: list[str], adj: dict[str, list[str]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative; components come out in discovery order."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            succ = adj.get(v, [])
            if pos < len(succ):
                work.append((v, pos + 1))
                w = succ[pos]
                if w not in index:
                    work.append((w, 0))
                elif w in on_stack:
                    low[v] = min(low[v], index[w])
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return out


def check_well_formed(ir: WorkflowIR) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    order = ir.node_index()
    kinds = {n.id: n.kind for n in ir.nodes}

    # rule 1: sequence edges acyclic unless the loop passes through a map node
    adj: dict[str, list[str]] = {}
    for e in ir.edges:
        if e.kind == "sequence":
            adj.setdefault(e.src, []).append(e.dst)
    for comp in _sccs([n.id for n in ir.nodes], adj):
        cyclic = len(comp) > 1 or comp[0] in adj.get(comp[0], [])
        if cyclic and not any(kinds[v] == "map" for v in comp):
            names = sorted(comp, key=order.get)
            diags.append(Diagnostic("WF1", "Workflow.edges", f"sequence cycle through {','.join(names)}"))

    # rule 2: branch edges carry a well-typed guard, other edges none
    for i, e in enumerate(ir.edges):
        if e.kind == "branch":
            if not e.guard:
                diags.append(Diagnostic("WF2", _edge_path(i, "guard"), f"branch edge {e.id} has no guard"))
                continue
            try:
                tree = parse_guard(e.guard)
            except GuardError as exc:
                diags.append(Diagnostic("WF2", _edge_path(i, "guard"), f"guard does not parse: {exc}"))
                continue
            io = ir.io_of(ir.node(e.src))
            visible = {**io.input, **io.output}
            for problem in type_errors(tree, visible):
                diags.append(Diagnostic("WF2", _edge_path(i, "guard"), f"guard on {e.id}: {problem}"))
        elif e.guard is not None:
            diags.append(Diagnostic("WF2", _edge_path(i, "guard"), f"{e.kind} edge {e.id} must not carry a guard"))

    # rule 3: every node resolves a policy
    default = ir.default_policy_name()
    for i, n in enumerate(ir.nodes):
        if n.policy_ref is None and default is None:
            diags.append(Diagnostic("WF3", _node_path(i, "policyRef"),
                                    f"node {n.id!r} has no policyRef and no workflow default exists"))

    # rule 4: producer output covers consumer required input
    for i, e in enumerate(ir.edges):
        out = ir.io_of(ir.node(e.src)).output
        for fname, ftype in ir.io_of(ir.node(e.dst)).input.items():
            if str(ftype).endswith("?"):
                continue
            if fname not in out:
                diags.append(Diagnostic("WF4", _edge_path(i), f"{e.dst} needs {fname!r} which {e.src} does not output"))
            elif str(out[fname]).rstrip("?") != str(ftype):
                diags.append(Diagnostic("WF4", _edge_path(i),
                                        f"{fname!r}: {e.src} outputs {out[fname]!r}, {e.dst} expects {ftype!r}"))

    # rule 5: compensating nodes are idempotent or keyed
    for i, n in enumerate(ir.nodes):
        name = resolved_policy_name(ir, n)
        if name is None:
            continue
        p = ir.policies[name]
        if p.compensation is not None and p.idempotency_key is None and n.capabilities.get("idempotent") is not True:
            diags.append(Diagnostic("WF5", _node_path(i),
                                    f"node {n.id!r} defines compensation without idempotency"))
    return diags


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def policy_invariant_errors(p: Policy) -> list[str]:
    """Violations of the per-policy invariants (retry bound, backoff ranges)."""
    out = []
    if p.retry is not None:
        ma = p.retry.max_attempts
        if not (isinstance(ma, int) and not isinstance(ma, bool)) or ma < 0:
            out.append("retry.maxAttempts must be a finite non-negative integer")
        if p.backoff is None:
            out.append("retry requires a backoff record")
    b = p.backoff
    if b is not None:
        if b.mode not in ("fixed", "exponential"):
            out.append(f"backoff.mode {b.mode!r} unknown")
        base = b.base if b.base is not None else 0
        if not _finite(base) or base < 0:
            out.append("backoff.base must be finite and >= 0")
        if b.cap is not None and (not _finite(b.cap) or b.cap < base):
            out.append("backoff.cap must be finite and >= base")
        if b.jitter is not None and (not _finite(b.jitter) or not 0 <= b.jitter <= 1):
            out.append("backoff.jitter must lie in [0, 1]")
    if p.timeout is not None and (not _finite(p.timeout.seconds) or p.timeout.seconds < 0):
        out.append("timeout.seconds must be finite and >= 0")
    lg = p.loop_guards
    if lg is not None:
        if lg.max_iters is not None and (not isinstance(lg.max_iters, int) or lg.max_iters < 1):
            out.append("loopGuards.maxIters must be a positive integer")
        for label, v in (("deadlineSeconds", lg.deadline_seconds), ("timeBudget", lg.time_budget)):
            if v is not None and (not _finite(v) or v < 0):
                out.append(f"loopGuards.{label} must be finite and >= 0")
    return out


_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")


def expand_key(template: str, node_id: str, run_id: str = "{runId}") -> str:
    """Expand a key template against the canonical binding (nodeId, inputs, runId);
    inputs stay symbolic so keys compare by shape."""
    def sub(m):
        name = m.group(1)
        if name == "nodeId":
            return node_id
        if name == "runId":
            return run_id
        return "<" + name + ">"
    return _PLACEHOLDER.sub(sub, template)


def idempotency_key_for(node: NodeSpec, policy: Policy, run_id: str = "{runId}") -> str | None:
    k = policy.idempotency_key
    if k is None:
        return None
    base = expand_key(k.template, node.id, run_id) if k.template is not None else f"path:{k.path}"
    scope = k.scope or "workflow"
    if scope == "node":
        return f"{node.id}/{base}"
    if scope == "resource":
        return f"{node.capabilities.get('resource', '')}/{base}"
    return base


def check_policies(ir: WorkflowIR) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    default = ir.default_policy_name()
    for i, n in enumerate(ir.nodes):
        if n.policy_ref is None and default is None:
            diags.append(Diagnostic("POL1", _node_path(i, "policyRef"), f"node {n.id!r} has no policy"))

    for name, p in ir.policies.items():
        base = f"Workflow.policies.{name}"
        for problem in policy_invariant_errors(p):
            field = problem.split(".", 1)[0].split(" ", 1)[0]
            diags.append(Diagnostic("POL2", f"{base}.{field}", problem))

    keys: dict[str, int] = {}
    for i, n in enumerate(ir.nodes):
        pname = resolved_policy_name(ir, n)
        if pname is None:
            continue
        p = ir.policies[pname]
        if n.kind == "task" and n.capabilities.get("external") is True:
            if p.timeout is None or not _finite(p.timeout.seconds):
                diags.append(Diagnostic("POL3", _node_path(i, "policyRef"),
                                        f"external task {n.id!r} needs a finite timeout"))
        if p.compensation is not None and p.idempotency_key is None and n.capabilities.get("idempotent") is not True:
            diags.append(Diagnostic("POL4", _node_path(i, "policyRef"),
                                    f"compensation on {n.id!r} needs idempotent effects or an idempotencyKey"))
        if n.kind == "map":
            lg = p.loop_guards
            bounded = lg is not None and ((lg.max_iters is not None and isinstance(lg.max_iters, int))
                                          or _finite(lg.time_budget))
            if not bounded:
                diags.append(Diagnostic("POL5", _node_path(i, "policyRef"),
                                        f"map node {n.id!r} needs loopGuards.maxIters or timeBudget"))
        key = idempotency_key_for(n, p)
        if key is not None:
            if key in keys:
                other = ir.nodes[keys[key]].id
                diags.append(Diagnostic("POL6", _node_path(i, "policyRef"),
                                        f"idempotency key {key!r} of {n.id!r} collides with {other!r}"))
            else:
                keys[key] = i
    return diags


def check_repair_coverage(ir: WorkflowIR, specs: Iterable[RepairSpec],
                          disruptions: Iterable[str]) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    node_ids = {n.id for n in ir.nodes}
    edges = {e.id: e for e in ir.edges}
    usable: list[RepairSpec] = []
    for i, spec in enumerate(specs):
        path = f"repairSpecs[{i}]"
        ok = True
        if spec.target not in node_ids and spec.target not in edges:
            diags.append(Diagnostic("COV4", f"{path}.target", f"unknown target {spec.target!r}"))
            ok = False
        unknown = sorted(set(spec.allowed_edits) - set(EDIT_KINDS))
        if unknown:
            diags.append(Diagnostic("COV3", f"{path}.allowedEdits", f"unknown edits {unknown}"))
            ok = False
        edge = edges.get(spec.target)
        if edge is not None:
            tag = edge.repairable or "none"
            allowed = set() if tag == "none" else {_EDIT_FOR_TAG[tag]}
            extra = sorted(set(spec.allowed_edits) - allowed)
            if extra:
                diags.append(Diagnostic("COV3", f"{path}.allowedEdits",
                                        f"edge {edge.id} is repairable={tag}; {extra} not permitted"))
                ok = False
        nb = spec.bounds.get("maxNeighborhood")
        if not _finite(nb) or nb < 1:
            diags.append(Diagnostic("COV2", f"{path}.bounds.maxNeighborhood", "maxNeighborhood must be finite"))
            ok = False
        if "time-shift" in spec.allowed_edits:
            ms = spec.bounds.get("maxShift")
            if not _finite(ms) or ms < 0:
                diags.append(Diagnostic("COV2", f"{path}.bounds.maxShift", "time-shift needs a finite maxShift"))
                ok = False
        if ok and spec.allowed_edits:
            usable.append(spec)
    for j, cls in enumerate(disruptions):
        if cls not in DISRUPTION_EDITS:
            diags.append(Diagnostic("COV5", f"disruptions[{j}]", f"unknown disruption class {cls!r}"))
            continue
        needed = DISRUPTION_EDITS[cls]
        if not any(needed is None or needed & set(s.allowed_edits) for s in usable):
            diags.append(Diagnostic("COV1", f"disruptions[{j}]", f"no bounded repair spec covers {cls}"))
    return diags
