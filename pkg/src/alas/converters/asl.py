"""Amazon States Language emission and ingestion.

Control flow must be block structured: a parallel node's branches run until
they meet at their nearest common successor, which becomes the Parallel
state's ``Next``. Fields ASL has no slot for travel in a ``Comment`` residue
prefixed ``alas:``.
"""

from __future__ import annotations

import json
import re

from ..ir.guards import GuardError, canonical, from_asl, parse_guard, to_asl, to_text
from ..ir.model import EdgeSpec, IoSchema, NodeSpec, Policy, WorkflowIR
from ..ir.parse import ir_from_dict
from .common import (UnsupportedConstruct, UnsupportedFeature, compact_json, fill_default_policy, merge_policy,
                     node_residue, order_edges, workflow_residue)

RESIDUE = "alas:"
CATCH_MARK = "alas-handler:"
COMPENSATION_MARK = "alas-compensation:"
ROOT = "__alas_root__"
IDEM = "__alas_idem_key"
ERROR_PATH = "$.error"
COMPENSATION_PATH = "$.__alas_compensation"
TASK_RESOURCE = "alas:task"
HANDLER_RESOURCE = "alas:handler"

_ACTIVITY = re.compile(r"^arn:[^:]+:states:[^:]*:[^:]*:activity:")
_TIMEOUT_NATIVE = {"task"}


def _policy_for(ir: WorkflowIR, node: NodeSpec) -> Policy | None:
    if node.policy_ref is not None:
        return ir.policies[node.policy_ref]
    default = ir.default_policy_name()
    return ir.policies[default] if default is not None else None


class _Emitter:
    def __init__(self, ir: WorkflowIR):
        self.ir = ir
        self.index = ir.node_index()
        self.out = {n.id: [] for n in ir.nodes}
        indeg = {n.id: 0 for n in ir.nodes}
        for e in ir.edges:
            self.out[e.src].append(e)
            indeg[e.dst] += 1
        self.roots = [n.id for n in ir.nodes if indeg[n.id] == 0]
        self.owner: dict[str, int] = {}
        self.blocks = 0

    def document(self) -> dict:
        if not self.ir.nodes:
            raise UnsupportedFeature("a workflow without nodes has no start state")
        if not self.roots:
            raise UnsupportedFeature("every node has a predecessor, so there is no start state")
        states: dict = {}
        block = self._new_block()
        if len(self.roots) == 1:
            start = self.roots[0]
            self._visit(start, None, states, block, False)
        else:
            start = ROOT
            states[ROOT] = self._parallel(None, self.roots, None, states, block)
        missing = [n.id for n in self.ir.nodes if n.id not in self.owner]
        if missing:
            raise UnsupportedFeature(f"nodes unreachable from an entry node: {missing}")
        return {"Comment": RESIDUE + compact_json(workflow_residue(self.ir)), "StartAt": start, "States": states}

    def _new_block(self) -> int:
        self.blocks += 1
        return self.blocks

    def _reach(self, start: str, skip: str | None) -> set[str]:
        seen, stack = set(), [start]
        while stack:
            nid = stack.pop()
            if nid in seen or nid == skip:
                continue
            seen.add(nid)
            stack.extend(e.dst for e in self.out[nid])
        return seen

    def _join(self, branches: list[str], skip: str | None) -> str | None:
        if len(branches) < 2:
            return None
        reach = {b: self._reach(b, skip) for b in branches}
        common = set.intersection(*reach.values())
        if not common:
            return None
        minimal = [c for c in common if not any(c in self._reach(d, skip) for d in common if d != c)]
        pool = minimal or list(common)
        join = min(pool, key=self.index.__getitem__)
        if join in branches:
            raise UnsupportedFeature(f"branch {join!r} is also the join of its parallel block")
        return join

    def _parallel(self, node_id, branches, stop, states, block) -> dict:
        join = self._join(branches, node_id)
        inner_stop = join if join is not None else stop
        state: dict = {"Type": "Parallel", "Branches": []}
        for b in branches:
            if b == inner_stop:
                raise UnsupportedFeature(f"parallel {node_id!r} has an empty branch")
            sub: dict = {}
            self._visit(b, inner_stop, sub, self._new_block(), True)
            state["Branches"].append({"StartAt": b, "States": sub})
        if join is not None and join != stop:
            state["Next"] = join
        else:
            state["End"] = True
        if node_id is None:
            state["Comment"] = "alas-root"
            if join is not None and join != stop:
                self._visit(join, stop, states, block, False)
        return state

    def _visit(self, nid: str, stop: str | None, states: dict, block: int, in_branch: bool) -> None:
        if nid == stop:
            return
        if nid in self.owner:
            if self.owner[nid] != block:
                raise UnsupportedFeature(f"node {nid!r} is reachable from two separate blocks")
            return
        self.owner[nid] = block
        states[nid] = None  # reserve emission order
        node = self.ir.node(nid)
        out = self.out[nid]
        residue = node_residue(self.ir, self.index[nid])
        for item in residue.get("out", []):
            if item["kind"] == "branch":
                edge = self.ir.edges[item["pos"]]
                item["guard"] = edge.guard
        follow: list[str] = []

        if node.kind == "choice":
            if any(e.kind == "sequence" for e in out):
                raise UnsupportedFeature(f"choice {nid!r} has a sequence edge")
            defaults = [e for e in out if e.kind == "default"]
            branches = [e for e in out if e.kind == "branch"]
            if len(defaults) > 1 or not branches:
                raise UnsupportedFeature(f"choice {nid!r} needs at least one branch and at most one default")
            choices = []
            for e in branches:
                if e.guard is None:
                    raise UnsupportedFeature(f"branch edge {e.id} has no guard")
                if e.dst == stop:
                    raise UnsupportedFeature(f"branch edge {e.id} leaves its parallel block")
                rule = to_asl(parse_guard(e.guard))
                rule["Next"] = e.dst
                choices.append(rule)
                follow.append(e.dst)
            state = {"Type": "Choice", "Choices": choices}
            if defaults:
                if defaults[0].dst == stop:
                    raise UnsupportedFeature(f"default edge {defaults[0].id} leaves its parallel block")
                state["Default"] = defaults[0].dst
                follow.append(defaults[0].dst)
        else:
            if any(e.kind != "sequence" for e in out):
                raise UnsupportedFeature(f"{node.kind} {nid!r} has a conditional edge; route it through a choice")
            if node.kind == "parallel":
                state = self._parallel(nid, [e.dst for e in out], stop, states, block)
                if "Next" in state:
                    follow.append(state["Next"])
            else:
                if len(out) > 1:
                    raise UnsupportedFeature(f"{node.kind} {nid!r} fans out without a parallel node")
                state = {"Type": "Task", "Resource": TASK_RESOURCE} if node.kind == "task" else {
                    "Type": "Map",
                    "Iterator": {"StartAt": f"{nid}__item",
                                 "States": {f"{nid}__item": {"Type": "Task", "Resource": TASK_RESOURCE,
                                                            "End": True}}}}
                if out and out[0].dst != stop:
                    state["Next"] = out[0].dst
                    follow.append(out[0].dst)
                else:
                    state["End"] = True
                    if not out and in_branch:
                        residue["terminal"] = True

        self._attach_policy(node, state, residue, states)
        ordered = {"Type": state.pop("Type")}
        ordered["Comment"] = RESIDUE + compact_json(residue)
        ordered.update(state)
        states[nid] = ordered
        for nxt in follow:
            self._visit(nxt, stop, states, block, in_branch)

    def _attach_policy(self, node: NodeSpec, state: dict, residue: dict, states: dict) -> None:
        params = dict(node.params)
        policy = _policy_for(self.ir, node)
        leftover: dict = {}
        if policy is not None and node.kind == "choice":
            leftover = policy.to_dict()
        elif policy is not None:
            if policy.retry is not None:
                entry: dict = {"ErrorEquals": list(policy.retry.retry_on) if policy.retry.retry_on is not None
                               else ["States.ALL"], "MaxAttempts": policy.retry.max_attempts}
                if policy.retry.retry_on is None:
                    residue["retryOnAll"] = True
                b = policy.backoff
                if b is not None:
                    if b.base is not None:
                        entry["IntervalSeconds"] = b.base
                    entry["BackoffRate"] = 2.0 if b.mode == "exponential" else 1.0
                    if b.cap is not None:
                        entry["MaxDelaySeconds"] = b.cap
                    if b.jitter is not None:
                        entry["JitterStrategy"] = "FULL" if b.jitter > 0 else "NONE"
                        residue["jitter"] = b.jitter
                state["Retry"] = [entry]
            elif policy.backoff is not None:
                leftover["backoff"] = policy.backoff.to_dict()
            if policy.timeout is not None:
                if node.kind in _TIMEOUT_NATIVE:
                    state["TimeoutSeconds"] = policy.timeout.seconds
                else:
                    leftover["timeout"] = policy.timeout.to_dict()
            catches = []
            if policy.catch is not None:
                if not policy.catch:
                    leftover["catch"] = []
                for rule in policy.catch:
                    target = self._handler_state(states, CATCH_MARK, rule.handler)
                    catches.append({"ErrorEquals": list(rule.errors), "Next": target, "ResultPath": ERROR_PATH})
            if policy.compensation is not None:
                c = policy.compensation
                target = self._handler_state(states, COMPENSATION_MARK, c.handler)
                catches.append({"ErrorEquals": ["States.ALL"], "Next": target, "ResultPath": COMPENSATION_PATH})
                residue["compensation"] = {k: v for k, v in c.to_dict().items() if k != "handler"}
            if catches:
                state["Catch"] = catches
            k = policy.idempotency_key
            if k is not None:
                if k.template is not None:
                    params[IDEM] = k.template
                if k.path is not None:
                    params[IDEM + ".$"] = k.path
                if k.scope is not None:
                    residue["idemScope"] = k.scope
            if policy.loop_guards is not None:
                leftover["loopGuards"] = policy.loop_guards.to_dict()
        if leftover:
            residue["policy"] = leftover
        if params:
            state["Parameters"] = params

    @staticmethod
    def _handler_state(states: dict, mark: str, handler: str) -> str:
        name = ("__alas_catch__" if mark == CATCH_MARK else "__alas_compensation__") + handler
        states.setdefault(name, {"Type": "Task", "Comment": mark + handler, "Resource": HANDLER_RESOURCE,
                                 "End": True})
        return name


def emit_asl(ir: WorkflowIR) -> str:
    return json.dumps(_Emitter(ir).document(), indent=2, ensure_ascii=False) + "\n"


# ingestion

def _residue(state: dict) -> dict:
    comment = state.get("Comment", "")
    if isinstance(comment, str) and comment.startswith(RESIDUE):
        return json.loads(comment[len(RESIDUE):])
    return {}


def _is_handler(state: dict) -> bool:
    comment = state.get("Comment", "")
    return isinstance(comment, str) and comment.startswith((CATCH_MARK, COMPENSATION_MARK))


def _handler_name(states: dict, target: str) -> str:
    comment = states.get(target, {}).get("Comment", "")
    for mark in (CATCH_MARK, COMPENSATION_MARK):
        if isinstance(comment, str) and comment.startswith(mark):
            return comment[len(mark):]
    return target


class _Ingester:
    def __init__(self, doc: dict):
        self.wf = _residue(doc)
        self.nodes: list[tuple[int, NodeSpec]] = []
        self.residues: dict[str, dict] = {}
        self.edges: list[EdgeSpec] = []
        self.policies: dict[str, dict] = {}
        self.seen = 0

    def block(self, states: dict, cont: str | None, where: str) -> None:
        if not isinstance(states, dict):
            raise UnsupportedConstruct(f"{where}: States must be an object")
        for name, st in states.items():
            if not isinstance(st, dict) or "Type" not in st:
                raise UnsupportedConstruct(f"{where}.{name}: state without a Type")
            if _is_handler(st):
                continue
            if name == ROOT:
                self._branches(name, st, cont, where, edges=False)
                continue
            self.state(name, st, states, cont, where)

    def _branches(self, name: str, st: dict, cont: str | None, where: str, edges: bool) -> None:
        inner = st.get("Next", cont)
        for i, branch in enumerate(st.get("Branches", [])):
            if edges:
                self.edges.append(EdgeSpec(name, branch["StartAt"]))
            self.block(branch.get("States", {}), inner, f"{where}.{name}.Branches[{i}]")

    def state(self, name: str, st: dict, states: dict, cont: str | None, where: str) -> None:
        typ = st["Type"]
        r = _residue(st)
        if typ == "Task":
            resource = st.get("Resource", "")
            if _ACTIVITY.match(str(resource)):
                raise UnsupportedConstruct(f"{where}.{name}: activity resource {resource!r} is outside the subset")
            kind = "task"
        elif typ == "Map":
            kind = "map"
        elif typ == "Parallel":
            kind = "parallel"
        elif typ == "Choice":
            kind = "choice"
        else:
            raise UnsupportedConstruct(f"{where}.{name}: {typ} states are outside the subset")

        if kind == "choice":
            for rule in st.get("Choices", []):
                body = {k: v for k, v in rule.items() if k != "Next"}
                try:
                    guard = to_text(from_asl(body))
                except GuardError as exc:
                    raise UnsupportedConstruct(f"{where}.{name}: {exc}") from None
                self.edges.append(EdgeSpec(name, rule["Next"], "branch", self._guard_text(r, rule["Next"], guard)))
            if "Default" in st:
                self.edges.append(EdgeSpec(name, st["Default"], "default"))
        elif kind == "parallel":
            self._branches(name, st, cont, where, edges=True)
        elif "Next" in st:
            self.edges.append(EdgeSpec(name, st["Next"]))
        elif cont is not None and not r.get("terminal"):
            self.edges.append(EdgeSpec(name, cont))

        params = dict(st.get("Parameters", {}))
        policy = self._policy(name, st, states, r, params, kind)
        ref = r.get("policyRef")
        pname = ref or self.wf.get("defaultPolicy")
        if policy or pname:
            pname = pname or f"{name}_policy"
            merge_policy(self.policies, pname, policy, f"{where}.{name}")
            if not r and ref is None:
                ref = pname
        io = r.get("io", {})
        node = NodeSpec(name, kind, r.get("name", name), dict(r.get("capabilities", {})), params,
                        io if isinstance(io, str) else IoSchema.from_dict(io), ref, r.get("logSchemaRef"))
        self.nodes.append((r.get("index", 10 ** 9 + self.seen), node))
        self.residues[name] = r
        self.seen += 1

    @staticmethod
    def _guard_text(r: dict, dst: str, native: str) -> str:
        for item in r.get("out", []):
            if item["to"] == dst and item["kind"] == "branch" and item.get("guard"):
                try:
                    if canonical(item["guard"]) == native:
                        return item["guard"]
                except GuardError:
                    pass
        return native

    @staticmethod
    def _policy(name: str, st: dict, states: dict, r: dict, params: dict, kind: str) -> dict:
        policy = dict(r.get("policy", {}))
        retries = st.get("Retry", [])
        if len(retries) > 1:
            raise UnsupportedConstruct(f"state {name!r}: more than one Retry entry")
        if retries:
            entry = retries[0]
            retry: dict = {"maxAttempts": entry.get("MaxAttempts", 3)}
            if not r.get("retryOnAll"):
                retry["retryOn"] = list(entry.get("ErrorEquals", []))
            policy["retry"] = retry
            if "BackoffRate" in entry or "IntervalSeconds" in entry:
                backoff: dict = {"mode": "fixed" if entry.get("BackoffRate", 2.0) == 1.0 else "exponential"}
                if "IntervalSeconds" in entry:
                    backoff["base"] = entry["IntervalSeconds"]
                if "MaxDelaySeconds" in entry:
                    backoff["cap"] = entry["MaxDelaySeconds"]
                if "jitter" in r:
                    backoff["jitter"] = r["jitter"]
                policy["backoff"] = backoff
        if "TimeoutSeconds" in st:
            policy["timeout"] = {"seconds": st["TimeoutSeconds"]}
        catches = []
        for entry in st.get("Catch", []):
            handler = _handler_name(states, entry["Next"])
            if entry.get("ResultPath") == COMPENSATION_PATH:
                policy["compensation"] = {"handler": handler, "safeReinvoke": False,
                                          **r.get("compensation", {})}
            else:
                catches.append({"errors": list(entry["ErrorEquals"]), "handler": handler})
        if catches:
            policy["catch"] = catches
        key = {}
        if IDEM in params:
            key["template"] = params.pop(IDEM)
        if IDEM + ".$" in params:
            key["path"] = params.pop(IDEM + ".$")
        if key:
            if "idemScope" in r:
                key["scope"] = r["idemScope"]
            policy["idempotencyKey"] = key
        return policy

    def result(self) -> WorkflowIR:
        self.nodes.sort(key=lambda pair: pair[0])
        nodes = [n for _, n in self.nodes]
        index = {n.id: i for i, n in enumerate(nodes)}
        edges = order_edges(self.edges, self.residues, index)
        policies = dict(self.wf.get("policies", {}))
        policies.update(self.policies)
        fill_default_policy(policies, nodes, self.wf)
        order = self.wf.get("policyOrder", [])
        policies = {k: policies[k] for k in sorted(policies, key=lambda k: (order.index(k) if k in order
                                                                             else len(order), k))}
        doc = {"Workflow": {
            "name": self.wf.get("name", "workflow"),
            "nodes": [n.to_dict() for n in nodes],
            "edges": [e.to_dict() for e in edges],
            "policies": policies,
            "schemas": self.wf.get("schemas", {}),
            "logSchemas": self.wf.get("logSchemas", {}),
            "meta": self.wf.get("meta", {}),
        }}
        return ir_from_dict(doc)


def ingest_asl(text: str) -> WorkflowIR:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UnsupportedConstruct(f"not JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or "States" not in doc or "StartAt" not in doc:
        raise UnsupportedConstruct("an ASL document needs StartAt and States")
    ing = _Ingester(doc)
    ing.block(doc["States"], None, "States")
    return ing.result()
