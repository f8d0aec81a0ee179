"""Random well-formed IRs restricted to the features both engines carry."""

from __future__ import annotations

import random

from ..ir.guards import And, Cmp, Not, Or, normalize, to_text
from ..ir.model import (Backoff, CatchRule, Compensation, EdgeSpec, IdempotencyKey, IoSchema, LoopGuards, NodeSpec,
                        Policy, Retry, Timeout, WorkflowIR)

ERRORS = ("Timeout", "NetworkError", "ToolFailure", "States.TaskFailed")
CHOICE_OUTPUT = {"x": "number", "flag": "boolean", "label": "string"}
LABELS = ("ok", "retry", "it's", 'say "hi"')


def _policy(rng: random.Random) -> Policy:
    def maybe(p=0.5):
        return rng.random() < p

    retry = Retry(rng.randint(1, 5), tuple(rng.sample(ERRORS, rng.randint(0, 3))) if maybe(0.7) else None) \
        if maybe(0.7) else None
    backoff = Backoff(rng.choice(["fixed", "exponential"]), rng.choice([None, 0.5, 1, 2.0]),
                      rng.choice([None, 8.0, 30]), rng.choice([None, 0, 0.1])) if maybe(0.6) else None
    catch = tuple(CatchRule(tuple(rng.sample(ERRORS, rng.randint(1, 2))), rng.choice(["h1", "h2", "fallback"]))
                  for _ in range(rng.randint(0, 2))) if maybe() else None
    timeout = Timeout(rng.choice([5, 30, 12.5])) if maybe() else None
    key = None
    if maybe(0.6):
        key = IdempotencyKey(path=rng.choice([None, "$.requestId"]), template="node:{nodeId}|run:{runId}",
                             scope=rng.choice([None, "workflow", "node", "resource"]))
    comp = None
    if key is not None and maybe():
        comp = Compensation(rng.choice(["cleanup", "undo"]), maybe(), rng.choice([None, "onFailure", "onCancel",
                                                                                   "manual"]))
    guards = LoopGuards(rng.randint(1, 9), rng.choice([None, 60.0]), rng.choice([None, 10.0])) if maybe(0.3) else None
    return Policy(retry, backoff, catch, timeout, key, comp, guards)


def _guard(rng: random.Random, depth: int = 0):
    r = rng.random()
    if depth < 2 and r < 0.15:
        return Not(_guard(rng, depth + 1))
    if depth < 2 and r < 0.35:
        cls = And if rng.random() < 0.5 else Or
        return cls(tuple(_guard(rng, depth + 1) for _ in range(rng.randint(2, 3))))
    field = rng.choice(sorted(CHOICE_OUTPUT))
    if field == "x":
        return Cmp("x", rng.choice(["==", "!=", "<", "<=", ">", ">="]), rng.choice([0, 3, -2, 2.5]))
    if field == "flag":
        return Cmp("flag", rng.choice(["==", "!="]), rng.random() < 0.5)
    return Cmp("label", rng.choice(["==", "!="]), rng.choice(LABELS))


class _Builder:
    def __init__(self, rng: random.Random, policy_names: list[str]):
        self.rng = rng
        self.nodes: list[NodeSpec] = []
        self.edges: list[EdgeSpec] = []
        self.policy_names = policy_names

    def node(self, kind: str) -> str:
        rng = self.rng
        nid = f"n{len(self.nodes)}"
        params: dict = {}
        if kind == "map":
            params["items"] = rng.choice([[1, 2, 3], ["a", "b"], "{{inputs.parameters.batch}}"])
        elif rng.random() < 0.4:
            params["tool"] = rng.choice(["solver", "checker", "notify"])
        output = dict(CHOICE_OUTPUT) if kind == "choice" else (
            {"result": "string"} if rng.random() < 0.5 else {})
        io = IoSchema({"x": "number?"} if rng.random() < 0.3 else {}, output)
        caps = {"idempotent": True} if rng.random() < 0.2 else {}
        ref = rng.choice(self.policy_names + [None])
        self.nodes.append(NodeSpec(nid, kind, f"{kind} {nid}", caps, params, io, ref,
                                   "step" if rng.random() < 0.2 else None))
        return nid

    def edge(self, src: str, dst: str, kind: str = "sequence", guard: str | None = None) -> None:
        tag = self.rng.choice([None, None, "time", "order", "resource", "none"])
        self.edges.append(EdgeSpec(src, dst, kind, guard, tag))

    def region(self, size: int) -> tuple[str, str]:
        """A single-entry single-exit subgraph; returns (entry, exit)."""
        rng = self.rng
        entry = exit_ = None
        while size > 0:
            r = rng.random()
            if size >= 3 and r < 0.25:
                head, tail, used = self.diamond(size)
            elif size >= 4 and r < 0.45:
                head, tail, used = self.fork(size)
            else:
                head = tail = self.node("map" if rng.random() < 0.15 else "task")
                used = 1
            if exit_ is not None:
                self.edge(exit_, head)
            entry = entry or head
            exit_ = tail
            size -= used
        return entry, exit_

    def diamond(self, size: int):
        rng = self.rng
        c = self.node("choice")
        k = rng.randint(1, 3)
        join = None
        bodies = []
        budget = max(0, size - 2)
        empty_used = False
        for _ in range(k):
            if budget > 0 and (empty_used or rng.random() < 0.8):
                n = rng.randint(1, max(1, min(budget, 2)))
                bodies.append(self.region(n))
                budget -= n
            elif not empty_used:
                bodies.append(None)
                empty_used = True
        join = self.node("task")
        for body in bodies:
            guard = to_text(normalize(_guard(rng)))
            if body is None:
                self.edge(c, join, "branch", guard)
            else:
                self.edge(c, body[0], "branch", guard)
                self.edge(body[1], join)
        if rng.random() < 0.5:
            if not empty_used and rng.random() < 0.3:
                self.edge(c, join, "default")
            elif budget > 0:
                body = self.region(1)
                self.edge(c, body[0], "default")
                self.edge(body[1], join)
                budget -= 1
        return c, join, size - budget

    def fork(self, size: int):
        rng = self.rng
        p = self.node("parallel")
        budget = size - 2
        k = rng.randint(2, max(2, min(3, budget)))
        ends = []
        for i in range(k):
            n = max(1, budget // (k - i)) if i < k - 1 else max(1, budget)
            head, tail = self.region(n)
            budget -= n
            self.edge(p, head)
            ends.append(tail)
        join = self.node("task")
        for tail in ends:
            self.edge(tail, join)
        return p, join, size - max(0, budget)


def random_ir(rng: random.Random, max_nodes: int = 12) -> WorkflowIR:
    policies = {"default": _policy(rng)}
    for i in range(rng.randint(0, 2)):
        policies[f"p{i}"] = _policy(rng)
    for name, p in list(policies.items()):
        if p.compensation is not None and p.idempotency_key is None:
            policies[name] = Policy(p.retry, p.backoff, p.catch, p.timeout, IdempotencyKey(template="{nodeId}"),
                                    p.compensation, p.loop_guards)
    b = _Builder(rng, [k for k in policies if k != "default"])
    b.region(rng.randint(1, max_nodes))
    if rng.random() < 0.2:
        b.region(rng.randint(1, 3))
    nodes, edges = list(b.nodes), list(b.edges)
    if rng.random() < 0.5:
        rng.shuffle(edges)
    if rng.random() < 0.3:
        rng.shuffle(nodes)
    return WorkflowIR(f"generated-{rng.randint(0, 9999)}", tuple(nodes), tuple(edges), policies, {},
                      {"step": {"fields": ["nodeId", "eventType"]}}, {"generator": "random_ir"})
