"""Argo Workflows (DAG template) emission and ingestion.

Every node becomes one DAG task backed by its own template. Edges become
``dependencies``; a branch edge puts its guard in the target's ``when``.
Fields Argo has no slot for travel in ``alas.io/*`` annotations.
"""

from __future__ import annotations

import json
import re

import yaml

from ..ir.guards import GuardError, canonical, from_argo, parse_guard, to_argo, to_text
from ..ir.model import EdgeSpec, IoSchema, NodeSpec, WorkflowIR
from ..ir.parse import ir_from_dict
from .asl import IDEM, _policy_for
from .common import (UnsupportedConstruct, UnsupportedFeature, compact_json, fill_default_policy, merge_policy,
                     node_residue, order_edges, workflow_residue)

API_VERSION = "argoproj.io/v1alpha1"
WF_ANNOTATION = "alas.io/workflow"
NODE_ANNOTATION = "alas.io/ir"
KIND_ANNOTATION = "alas.io/kind"
ENTRY = "main"
IMAGE = "alas-placeholder"
IDEM_PATH = IDEM + "_path"

_Loader = getattr(yaml, "CSafeLoader", yaml.SafeLoader)
_Dumper = getattr(yaml, "CSafeDumper", yaml.SafeDumper)

_TRIGGER_STATUS = {"onFailure": "Failed", "onCancel": "Error"}


def _duration(seconds) -> str:
    return f"{seconds!r}s"


def _seconds(text) -> float | int:
    if isinstance(text, (int, float)):
        return text
    m = re.fullmatch(r"(-?\d+(?:\.\d+)?(?:e-?\d+)?)s?", str(text).strip())
    if not m:
        raise UnsupportedConstruct(f"duration {text!r} is not in seconds")
    raw = m.group(1)
    return float(raw) if ("." in raw or "e" in raw) else int(raw)


def _error_expression(errors) -> str:
    if not errors:
        return "false"
    return "lastRetry.message matches '^(" + "|".join(re.escape(e) for e in errors) + ")$'"


def _errors_from(expr: str) -> list[str]:
    if expr.strip() == "false":
        return []
    m = re.fullmatch(r"lastRetry\.message matches '\^\((.*)\)\$'", expr.strip())
    if not m:
        raise UnsupportedConstruct(f"retry expression {expr!r} is outside the subset")
    return [re.sub(r"\\(.)", r"\1", part) for part in re.split(r"(?<!\\)\|", m.group(1))]


def _template_name(node_id: str) -> str:
    return f"{node_id}-tpl"


def _node_template(node: NodeSpec) -> dict:
    return {"name": _template_name(node.id), "container": {"image": IMAGE}}


class _Emitter:
    def __init__(self, ir: WorkflowIR):
        self.ir = ir
        self.index = ir.node_index()
        self.handlers: dict[str, dict] = {}

    def document(self) -> dict:
        tasks, templates = [], []
        for i, node in enumerate(self.ir.nodes):
            task, template = self._task(i, node)
            tasks.append(task)
            templates.append(template)
        return {
            "apiVersion": API_VERSION,
            "kind": "Workflow",
            "metadata": {"generateName": re.sub(r"[^a-z0-9-]+", "-", self.ir.name.lower()).strip("-") + "-",
                         "annotations": {WF_ANNOTATION: compact_json(workflow_residue(self.ir))}},
            "spec": {"entrypoint": ENTRY,
                     "templates": [{"name": ENTRY, "dag": {"tasks": tasks}}, *templates,
                                   *self.handlers.values()]},
        }

    def _handler(self, handler: str) -> str:
        name = f"handler-{handler}"
        self.handlers.setdefault(name, {"name": name, "metadata": {"annotations": {KIND_ANNOTATION: "handler"}},
                                        "container": {"image": IMAGE}})
        return name

    def _task(self, i: int, node: NodeSpec) -> tuple[dict, dict]:
        residue = node_residue(self.ir, i)
        for item in residue.get("out", []):
            if item["kind"] == "branch":
                item["guard"] = self.ir.edges[item["pos"]].guard
        task: dict = {"name": node.id, "template": _template_name(node.id)}
        incoming = [e for e in self.ir.edges if e.dst == node.id]
        deps = []
        for e in incoming:
            if e.src not in deps:
                deps.append(e.src)
        if deps:
            task["dependencies"] = deps
        guarded = [e for e in incoming if e.kind == "branch"]
        clauses = []
        for e in guarded:
            if e.guard is None:
                raise UnsupportedFeature(f"branch edge {e.id} has no guard")
            clauses.append(to_argo(parse_guard(e.guard), e.src))
        if len(clauses) == 1:
            task["when"] = clauses[0]
        elif clauses:
            task["when"] = " || ".join(f"({c})" for c in clauses)

        params = [{"name": k, "value": json.dumps(v)} for k, v in node.params.items()]
        template = _node_template(node)
        template["metadata"] = {"annotations": {KIND_ANNOTATION: node.kind}}
        if node.kind == "map":
            items = node.params.get("items")
            if isinstance(items, str):
                task["withParam"] = items
            else:
                task["withItems"] = list(items) if isinstance(items, list) else []
        policy = _policy_for(self.ir, node)
        leftover: dict = {}
        if policy is not None:
            if policy.retry is not None:
                strategy: dict = {"limit": policy.retry.max_attempts, "retryPolicy": "Always"}
                if policy.retry.retry_on is not None:
                    strategy["expression"] = _error_expression(policy.retry.retry_on)
                b = policy.backoff
                if b is not None:
                    backoff: dict = {"factor": 2 if b.mode == "exponential" else 1}
                    if b.base is not None:
                        backoff["duration"] = _duration(b.base)
                    if b.cap is not None:
                        backoff["cap"] = _duration(b.cap)
                    strategy["backoff"] = backoff
                    if b.jitter is not None:
                        residue["jitter"] = b.jitter
                template["retryStrategy"] = strategy
            elif policy.backoff is not None:
                leftover["backoff"] = policy.backoff.to_dict()
            if policy.timeout is not None:
                template["timeout"] = _duration(policy.timeout.seconds)
            hooks: dict = {}
            if policy.catch is not None:
                if not policy.catch:
                    leftover["catch"] = []
                for j, rule in enumerate(policy.catch):
                    hooks[f"catch-{j}"] = {"template": self._handler(rule.handler),
                                           "expression": _error_expression(rule.errors).replace(
                                               "lastRetry", f"tasks.{node.id}")}
            if policy.compensation is not None:
                c = policy.compensation
                status = _TRIGGER_STATUS.get(c.effective_trigger)
                hooks["exit"] = {"template": self._handler(c.handler),
                                 "expression": f'tasks.{node.id}.status == "{status}"' if status else "false"}
                residue["compensation"] = {k: v for k, v in c.to_dict().items() if k != "handler"}
            if hooks:
                task["hooks"] = hooks
            k = policy.idempotency_key
            if k is not None:
                if k.template is not None:
                    params.append({"name": IDEM, "value": k.template})
                if k.path is not None:
                    params.append({"name": IDEM_PATH, "value": k.path})
                if k.scope is not None:
                    residue["idemScope"] = k.scope
            if policy.loop_guards is not None:
                leftover["loopGuards"] = policy.loop_guards.to_dict()
        if leftover:
            residue["policy"] = leftover
        if params:
            task["arguments"] = {"parameters": params}
        template["metadata"]["annotations"][NODE_ANNOTATION] = compact_json(residue)
        return task, template


def emit_argo(ir: WorkflowIR) -> str:
    return yaml.dump(_Emitter(ir).document(), Dumper=_Dumper, sort_keys=False, allow_unicode=True, width=120)


def _hook_errors(expr: str, node_id: str) -> list[str]:
    return _errors_from(expr.replace(f"tasks.{node_id}", "lastRetry"))


def _split_when(when: str) -> list[str]:
    """Top-level ``||`` operands of a when clause."""
    parts, depth, start, i = [], 0, 0, 0
    quote = None
    while i < len(when):
        ch = when[i]
        if quote:
            if ch == "\\":
                i += 1
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif when.startswith("||", i) and depth == 0:
            parts.append(when[start:i].strip())
            start = i + 2
            i += 1
        i += 1
    parts.append(when[start:].strip())
    return parts


def _strip_parens(text: str) -> str:
    if text.startswith("(") and text.endswith(")") and _split_when(text[1:-1]) and _balanced(text[1:-1]):
        return text[1:-1]
    return text


def _balanced(text: str) -> bool:
    depth = 0
    for ch in text:
        depth += ch == "("
        depth -= ch == ")"
        if depth < 0:
            return False
    return depth == 0


def _restore_edges(raw, residues: dict[str, dict]) -> list[EdgeSpec]:
    """One dependency can stand for several stored edges; kinds come from the
    source residue when present, else from the presence of a guard."""
    edges = []
    for src, dst, guard in raw:
        stored = [item for item in residues.get(src, {}).get("out", []) if item["to"] == dst]
        if not stored:
            edges.append(EdgeSpec(src, dst, "branch" if guard else "sequence", guard))
            continue
        for item in stored:
            g = None
            if item["kind"] == "branch":
                g = guard
                try:
                    if item.get("guard") and guard and canonical(item["guard"]) == guard:
                        g = item["guard"]
                except GuardError:
                    pass
            edges.append(EdgeSpec(src, dst, item["kind"], g))
    return edges


_SOURCE = re.compile(r"\{\{tasks\.([^.}]+)\.outputs")


def ingest_argo(text: str) -> WorkflowIR:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise UnsupportedConstruct(f"not YAML: {exc}") from None
    if not isinstance(doc, dict) or doc.get("kind") != "Workflow" or not str(doc.get("apiVersion", "")).startswith(
            "argoproj.io/"):
        raise UnsupportedConstruct("expected an argoproj.io Workflow")
    spec = doc.get("spec", {})
    templates = {t["name"]: t for t in spec.get("templates", [])}
    entry = templates.get(spec.get("entrypoint"))
    if entry is None or "dag" not in entry:
        for t in templates.values():
            if "steps" in t:
                raise UnsupportedConstruct(f"template {t['name']!r}: steps templates are outside the subset")
        raise UnsupportedConstruct("the entrypoint must be a DAG template")
    annotations = doc.get("metadata", {}).get("annotations", {}) or {}
    wf = json.loads(annotations.get(WF_ANNOTATION, "{}"))

    nodes: list[tuple[int, NodeSpec]] = []
    residues: dict[str, dict] = {}
    raw_edges: list[tuple[str, str, str | None]] = []
    policies: dict[str, dict] = {}
    for seen, task in enumerate(entry["dag"].get("tasks", [])):
        name = task["name"]
        template = templates.get(task.get("template"))
        if template is None:
            raise UnsupportedConstruct(f"task {name!r}: template {task.get('template')!r} is not defined")
        for unsupported in ("resource", "suspend", "steps", "dag", "http", "plugin"):
            if unsupported in template:
                raise UnsupportedConstruct(f"template {template['name']!r}: {unsupported} is outside the subset")
        if "depends" in task:
            raise UnsupportedConstruct(f"task {name!r}: depends expressions are outside the subset")
        meta = (template.get("metadata") or {}).get("annotations", {}) or {}
        r = json.loads(meta.get(NODE_ANNOTATION, "{}"))
        kind = meta.get(KIND_ANNOTATION) or ("map" if ("withItems" in task or "withParam" in task) else "task")

        deps = list(task.get("dependencies", []))
        when = task.get("when")
        guards: dict[str, str] = {}
        if when:
            parts = [when] if len(set(_SOURCE.findall(when))) == 1 else [_strip_parens(p) for p in _split_when(when)]
            for part in parts:
                sources = set(_SOURCE.findall(part))
                if len(sources) != 1:
                    raise UnsupportedConstruct(f"task {name!r}: when clause must reference exactly one task")
                try:
                    guards[sources.pop()] = to_text(from_argo(part))
                except GuardError as exc:
                    raise UnsupportedConstruct(f"task {name!r}: {exc}") from None
        raw_edges.extend((src, name, guards.get(src)) for src in deps)

        params_list = (task.get("arguments") or {}).get("parameters", [])
        params, key = {}, {}
        for p in params_list:
            if p["name"] == IDEM:
                key["template"] = p["value"]
            elif p["name"] == IDEM_PATH:
                key["path"] = p["value"]
            else:
                try:
                    params[p["name"]] = json.loads(p["value"])
                except (TypeError, json.JSONDecodeError):
                    params[p["name"]] = p["value"]
        policy = dict(r.get("policy", {}))
        strategy = template.get("retryStrategy")
        if strategy:
            retry: dict = {"maxAttempts": int(strategy.get("limit", 3))}
            if "expression" in strategy:
                retry["retryOn"] = _errors_from(strategy["expression"])
            policy["retry"] = retry
            if "backoff" in strategy:
                b = strategy["backoff"]
                backoff: dict = {"mode": "fixed" if b.get("factor", 2) == 1 else "exponential"}
                if "duration" in b:
                    backoff["base"] = _seconds(b["duration"])
                if "cap" in b:
                    backoff["cap"] = _seconds(b["cap"])
                if "jitter" in r:
                    backoff["jitter"] = r["jitter"]
                policy["backoff"] = backoff
        if "timeout" in template:
            policy["timeout"] = {"seconds": _seconds(template["timeout"])}
        catches = []
        for hook_name, hook in (task.get("hooks") or {}).items():
            handler = hook["template"]
            handler = handler[len("handler-"):] if handler.startswith("handler-") else handler
            if hook_name == "exit":
                policy["compensation"] = {"handler": handler, "safeReinvoke": False, **r.get("compensation", {})}
            else:
                catches.append({"errors": _hook_errors(hook.get("expression", "false"), name), "handler": handler})
        if catches:
            policy["catch"] = catches
        if key:
            if "idemScope" in r:
                key["scope"] = r["idemScope"]
            policy["idempotencyKey"] = key
        ref = r.get("policyRef")
        pname = ref or wf.get("defaultPolicy")
        if policy or pname:
            pname = pname or f"{name}_policy"
            merge_policy(policies, pname, policy, f"task {name!r}")
            if not r and ref is None:
                ref = pname
        io = r.get("io", {})
        nodes.append((r.get("index", 10 ** 9 + seen), NodeSpec(
            name, kind, r.get("name", name), dict(r.get("capabilities", {})), params,
            io if isinstance(io, str) else IoSchema.from_dict(io), ref, r.get("logSchemaRef"))))
        residues[name] = r

    nodes.sort(key=lambda pair: pair[0])
    ordered = [n for _, n in nodes]
    index = {n.id: i for i, n in enumerate(ordered)}
    edges = order_edges(_restore_edges(raw_edges, residues), residues, index)
    all_policies = dict(wf.get("policies", {}))
    all_policies.update(policies)
    fill_default_policy(all_policies, ordered, wf)
    order = wf.get("policyOrder", [])
    all_policies = {k: all_policies[k] for k in sorted(all_policies, key=lambda k: (
        order.index(k) if k in order else len(order), k))}
    return ir_from_dict({"Workflow": {
        "name": wf.get("name", doc.get("metadata", {}).get("generateName", "workflow").rstrip("-") or "workflow"),
        "nodes": [n.to_dict() for n in ordered],
        "edges": [e.to_dict() for e in edges],
        "policies": all_policies,
        "schemas": wf.get("schemas", {}),
        "logSchemas": wf.get("logSchemas", {}),
        "meta": wf.get("meta", {}),
    }})
