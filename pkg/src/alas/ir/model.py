"""In-memory workflow IR: nodes, edges, policies and schemas."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

NODE_KINDS = ("task", "choice", "parallel", "map")
EDGE_KINDS = ("sequence", "branch", "default")
REPAIRABLE = ("time", "order", "resource", "none")
EDIT_KINDS = ("time-shift", "order-swap", "resource-reassign")
DEFAULT_POLICY_NAMES = ("default", "p_default")


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


@dataclass(frozen=True)
class Retry:
    max_attempts: int
    retry_on: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        return _drop_none({"maxAttempts": self.max_attempts,
                           "retryOn": list(self.retry_on) if self.retry_on is not None else None})

    @classmethod
    def from_dict(cls, d: dict) -> "Retry":
        on = d.get("retryOn")
        return cls(d["maxAttempts"], tuple(on) if on is not None else None)


@dataclass(frozen=True)
class Backoff:
    mode: str
    base: float | None = None
    cap: float | None = None
    jitter: float | None = None

    def to_dict(self) -> dict:
        return _drop_none({"mode": self.mode, "base": self.base, "cap": self.cap, "jitter": self.jitter})

    @classmethod
    def from_dict(cls, d: dict) -> "Backoff":
        return cls(d["mode"], d.get("base"), d.get("cap"), d.get("jitter"))


@dataclass(frozen=True)
class CatchRule:
    errors: tuple[str, ...]
    handler: str

    def to_dict(self) -> dict:
        return {"errors": list(self.errors), "handler": self.handler}

    @classmethod
    def from_dict(cls, d: dict) -> "CatchRule":
        return cls(tuple(d["errors"]), d["handler"])


@dataclass(frozen=True)
class Timeout:
    seconds: float

    def to_dict(self) -> dict:
        return {"seconds": self.seconds}


@dataclass(frozen=True)
class IdempotencyKey:
    path: str | None = None
    template: str | None = None
    scope: str | None = None

    def to_dict(self) -> dict:
        return _drop_none({"path": self.path, "template": self.template, "scope": self.scope})

    @classmethod
    def from_dict(cls, d: dict) -> "IdempotencyKey":
        return cls(d.get("path"), d.get("template"), d.get("scope"))


@dataclass(frozen=True)
class Compensation:
    handler: str
    safe_reinvoke: bool
    trigger: str | None = None

    @property
    def effective_trigger(self) -> str:
        return self.trigger or "onFailure"

    def to_dict(self) -> dict:
        return _drop_none({"handler": self.handler, "trigger": self.trigger, "safeReinvoke": self.safe_reinvoke})

    @classmethod
    def from_dict(cls, d: dict) -> "Compensation":
        return cls(d["handler"], d["safeReinvoke"], d.get("trigger"))


@dataclass(frozen=True)
class LoopGuards:
    max_iters: int | None = None
    deadline_seconds: float | None = None
    time_budget: float | None = None

    def to_dict(self) -> dict:
        return _drop_none({"maxIters": self.max_iters, "deadlineSeconds": self.deadline_seconds,
                           "timeBudget": self.time_budget})

    @classmethod
    def from_dict(cls, d: dict) -> "LoopGuards":
        return cls(d.get("maxIters"), d.get("deadlineSeconds"), d.get("timeBudget"))


@dataclass(frozen=True)
class Policy:
    retry: Retry | None = None
    backoff: Backoff | None = None
    catch: tuple[CatchRule, ...] | None = None
    timeout: Timeout | None = None
    idempotency_key: IdempotencyKey | None = None
    compensation: Compensation | None = None
    loop_guards: LoopGuards | None = None

    def to_dict(self) -> dict:
        return _drop_none({
            "retry": self.retry.to_dict() if self.retry else None,
            "backoff": self.backoff.to_dict() if self.backoff else None,
            "catch": [c.to_dict() for c in self.catch] if self.catch is not None else None,
            "timeout": self.timeout.to_dict() if self.timeout else None,
            "idempotencyKey": self.idempotency_key.to_dict() if self.idempotency_key else None,
            "compensation": self.compensation.to_dict() if self.compensation else None,
            "loopGuards": self.loop_guards.to_dict() if self.loop_guards else None,
        })

    @classmethod
    def from_dict(cls, d: dict) -> "Policy":
        return cls(
            retry=Retry.from_dict(d["retry"]) if "retry" in d else None,
            backoff=Backoff.from_dict(d["backoff"]) if "backoff" in d else None,
            catch=tuple(CatchRule.from_dict(c) for c in d["catch"]) if "catch" in d else None,
            timeout=Timeout(d["timeout"]["seconds"]) if "timeout" in d else None,
            idempotency_key=IdempotencyKey.from_dict(d["idempotencyKey"]) if "idempotencyKey" in d else None,
            compensation=Compensation.from_dict(d["compensation"]) if "compensation" in d else None,
            loop_guards=LoopGuards.from_dict(d["loopGuards"]) if "loopGuards" in d else None,
        )


@dataclass(frozen=True)
class IoSchema:
    input: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    error: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(self.extra)
        for name in ("input", "output", "error"):
            section = getattr(self, name)
            if section:
                d[name] = dict(section)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IoSchema":
        extra = {k: v for k, v in d.items() if k not in ("input", "output", "error")}
        return cls(dict(d.get("input", {})), dict(d.get("output", {})), dict(d.get("error", {})), extra)


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    name: str
    capabilities: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    io: IoSchema | str = field(default_factory=IoSchema)
    policy_ref: str | None = None
    log_schema_ref: str | None = None

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"node kind {self.kind!r} not in {NODE_KINDS}")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "type": self.kind, "name": self.name}
        if self.capabilities:
            d["capabilities"] = dict(self.capabilities)
        if self.params:
            d["params"] = dict(self.params)
        d["io"] = self.io if isinstance(self.io, str) else self.io.to_dict()
        if self.policy_ref is not None:
            d["policyRef"] = self.policy_ref
        if self.log_schema_ref is not None:
            d["logSchemaRef"] = self.log_schema_ref
        return d


@dataclass(frozen=True)
class EdgeSpec:
    src: str
    dst: str
    kind: str = "sequence"
    guard: str | None = None
    repairable: str | None = None

    @property
    def id(self) -> str:
        return f"{self.src}->{self.dst}"

    def to_dict(self) -> dict:
        return _drop_none({"from": self.src, "to": self.dst, "kind": self.kind, "guard": self.guard,
                           "repairable": self.repairable})


@dataclass(frozen=True)
class RepairSpec:
    target: str
    allowed_edits: frozenset = frozenset()
    bounds: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RepairSpec":
        return cls(d["target"], frozenset(d.get("allowedEdits", ())), dict(d.get("bounds", {})))


@dataclass(frozen=True)
class Diagnostic:
    rule_id: str
    path: str
    message: str

    def to_dict(self) -> dict:
        return {"ruleId": self.rule_id, "path": self.path, "message": self.message}


class MissingPolicy(LookupError):
    pass


@dataclass(frozen=True)
class WorkflowIR:
    name: str
    nodes: tuple[NodeSpec, ...] = ()
    edges: tuple[EdgeSpec, ...] = ()
    policies: dict = field(default_factory=dict)
    schemas: dict = field(default_factory=dict)
    log_schemas: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def io_of(self, node: NodeSpec) -> IoSchema:
        if isinstance(node.io, str):
            return self.schemas[node.io]
        return node.io

    def default_policy_name(self) -> str | None:
        named = self.meta.get("defaultPolicy")
        if isinstance(named, str) and named in self.policies:
            return named
        for candidate in DEFAULT_POLICY_NAMES:
            if candidate in self.policies:
                return candidate
        return None

    def successors(self, node_id: str) -> list[EdgeSpec]:
        return [e for e in self.edges if e.src == node_id]

    def to_dict(self) -> dict:
        return {"Workflow": {
            "name": self.name,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
            "policies": {k: p.to_dict() for k, p in self.policies.items()},
            "schemas": {k: s.to_dict() for k, s in self.schemas.items()},
            "logSchemas": {k: dict(v) for k, v in self.log_schemas.items()},
            "meta": dict(self.meta),
        }}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)
