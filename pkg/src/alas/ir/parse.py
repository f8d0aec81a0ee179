"""Reading IR documents into WorkflowIR values."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib.resources import files

import jsonschema

from .model import EdgeSpec, IoSchema, NodeSpec, Policy, WorkflowIR


class IRSyntaxError(SyntaxError):
    """The document is not well-formed JSON."""


class SchemaError(ValueError):
    """The document violates the IR schema or a structural invariant."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@lru_cache(maxsize=1)
def ir_schema() -> dict:
    return json.loads(files("alas.ir").joinpath("schema.json").read_text(encoding="utf-8"))


@lru_cache(maxsize=1)
def _validator() -> jsonschema.Draft7Validator:
    return jsonschema.Draft7Validator(ir_schema())


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise SchemaError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _json_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _normalize_fragment(doc: dict) -> dict:
    """Bare documents (no ``Workflow`` wrapper) get defaults for every
    omitted field; wrapped documents must be complete."""
    wf = {
        "name": doc.get("name", "workflow"),
        "nodes": [],
        "edges": doc.get("edges", []),
        "policies": doc.get("policies", {}),
        "schemas": doc.get("schemas", {}),
        "logSchemas": doc.get("logSchemas", {}),
        "meta": doc.get("meta", {}),
    }
    for node in doc.get("nodes", []):
        if isinstance(node, dict):
            node = dict(node)
            node.setdefault("name", node.get("id", ""))
            node.setdefault("io", {})
        wf["nodes"].append(node)
    return {"Workflow": wf}


def ir_from_dict(doc) -> WorkflowIR:
    if not isinstance(doc, dict):
        raise SchemaError("document must be an object")
    if "Workflow" not in doc:
        doc = _normalize_fragment(doc)
    err = jsonschema.exceptions.best_match(_validator().iter_errors(doc))
    if err is not None:
        raise SchemaError(err.message, _json_path(err.absolute_path))
    wf = doc["Workflow"]

    schemas = {k: IoSchema.from_dict(v) for k, v in wf["schemas"].items()}
    nodes = []
    seen = set()
    for i, n in enumerate(wf["nodes"]):
        if n["id"] in seen:
            raise SchemaError(f"duplicate node id {n['id']!r}", f"Workflow.nodes[{i}].id")
        seen.add(n["id"])
        io = n["io"]
        if isinstance(io, str):
            if io not in schemas:
                raise SchemaError(f"unknown schema {io!r}", f"Workflow.nodes[{i}].io")
        else:
            io = IoSchema.from_dict(io)
        if "policyRef" in n and n["policyRef"] not in wf["policies"]:
            raise SchemaError(f"unknown policy {n['policyRef']!r}", f"Workflow.nodes[{i}].policyRef")
        if "logSchemaRef" in n and n["logSchemaRef"] not in wf["logSchemas"]:
            raise SchemaError(f"unknown log schema {n['logSchemaRef']!r}", f"Workflow.nodes[{i}].logSchemaRef")
        nodes.append(NodeSpec(n["id"], n["type"], n["name"], dict(n.get("capabilities", {})),
                              dict(n.get("params", {})), io, n.get("policyRef"), n.get("logSchemaRef")))
    edges = []
    for i, e in enumerate(wf["edges"]):
        for end in ("from", "to"):
            if e[end] not in seen:
                raise SchemaError(f"edge endpoint {e[end]!r} is not a node", f"Workflow.edges[{i}].{end}")
        edges.append(EdgeSpec(e["from"], e["to"], e["kind"], e.get("guard"), e.get("repairable")))
    policies = {k: Policy.from_dict(v) for k, v in wf["policies"].items()}
    return WorkflowIR(wf["name"], tuple(nodes), tuple(edges), policies, schemas,
                      {k: dict(v) for k, v in wf["logSchemas"].items()}, dict(wf["meta"]))


def parse_ir(text: str) -> WorkflowIR:
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise IRSyntaxError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return ir_from_dict(doc)


def load_ir(path) -> WorkflowIR:
    from pathlib import Path

    return parse_ir(Path(path).read_text(encoding="utf-8"))
