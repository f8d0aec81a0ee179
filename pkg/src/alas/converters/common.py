"""Shared pieces for engine converters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..ir.model import EdgeSpec, WorkflowIR


class UnsupportedFeature(ValueError):
    """The IR uses a construct the target mapping cannot express."""


class UnsupportedConstruct(ValueError):
    """An ingested document uses a construct outside the supported subset."""


@dataclass(frozen=True)
class ConversionReport:
    target: str
    preserved: tuple[str, ...] = ()
    lossy: tuple[dict, ...] = ()
    parity_ok: bool = False
    mismatches: tuple[str, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {"target": self.target, "preserved": list(self.preserved), "lossy": [dict(x) for x in self.lossy],
                "parityOk": self.parity_ok, "mismatches": list(self.mismatches)}


def compact_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def used_policy_names(ir: WorkflowIR) -> set[str]:
    names = {n.policy_ref for n in ir.nodes if n.policy_ref is not None}
    if any(n.policy_ref is None for n in ir.nodes):
        default = ir.default_policy_name()
        if default is not None:
            names.add(default)
    return names


def workflow_residue(ir: WorkflowIR) -> dict:
    """Workflow-level fields no engine models natively."""
    used = used_policy_names(ir)
    residue = {
        "name": ir.name,
        "schemas": {k: s.to_dict() for k, s in ir.schemas.items()},
        "logSchemas": ir.log_schemas,
        "meta": ir.meta,
        "policies": {k: p.to_dict() for k, p in ir.policies.items() if k not in used},
        "policyOrder": list(ir.policies),
    }
    default = ir.default_policy_name()
    if default is not None and any(n.policy_ref is None for n in ir.nodes):
        residue["defaultPolicy"] = default
    return residue


def node_residue(ir: WorkflowIR, index: int) -> dict:
    n = ir.nodes[index]
    r: dict = {"index": index, "name": n.name, "io": n.io if isinstance(n.io, str) else n.io.to_dict()}
    if n.policy_ref is not None:
        r["policyRef"] = n.policy_ref
    if n.capabilities:
        r["capabilities"] = n.capabilities
    if n.log_schema_ref is not None:
        r["logSchemaRef"] = n.log_schema_ref
    out = []
    for pos, e in enumerate(ir.edges):
        if e.src == n.id:
            item = {"pos": pos, "to": e.dst, "kind": e.kind}
            if e.repairable is not None:
                item["repairable"] = e.repairable
            out.append(item)
    if out:
        r["out"] = out
    return r


def order_edges(edges: list[EdgeSpec], residues: dict[str, dict], index: dict[str, int]) -> list[EdgeSpec]:
    """Attach stored positions and repairable tags; fall back to (from, to) order."""
    placed = []
    for e in edges:
        info = None
        for item in residues.get(e.src, {}).get("out", []):
            if item["to"] == e.dst and item["kind"] == e.kind and not item.get("_used"):
                info = item
                item["_used"] = True
                break
        if info is not None and "repairable" in info:
            e = EdgeSpec(e.src, e.dst, e.kind, e.guard, info["repairable"])
        pos = info["pos"] if info is not None else None
        placed.append((pos, e))
    if placed and all(p is not None for p, _ in placed):
        placed.sort(key=lambda pe: pe[0])
    else:
        placed.sort(key=lambda pe: (index.get(pe[1].src, 0), index.get(pe[1].dst, 0)))
    return [e for _, e in placed]


def merge_policy(collected: dict[str, dict], name: str, policy: dict, where: str) -> None:
    if name in collected and collected[name] != policy:
        raise UnsupportedConstruct(f"{where}: policy {name!r} disagrees with an earlier state")
    collected[name] = policy


def fill_default_policy(policies: dict, nodes, wf: dict) -> None:
    """Documents from other tools carry no workflow residue; give their
    policy-less nodes an empty default so the IR stays well-formed."""
    if wf or "default" in policies:
        return
    if any(n.policy_ref is None for n in nodes):
        policies["default"] = {}
