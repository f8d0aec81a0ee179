"""Canonical workflow IR: parsing, guards and static checks."""

from .checks import check_policies, check_repair_coverage, check_well_formed, resolve_policy
from .model import (Backoff, CatchRule, Compensation, Diagnostic, EdgeSpec, IdempotencyKey, IoSchema, LoopGuards,
                    MissingPolicy, NodeSpec, Policy, RepairSpec, Retry, Timeout, WorkflowIR)
from .parse import IRSyntaxError, SchemaError, ir_from_dict, load_ir, parse_ir

__all__ = [
    "Backoff", "CatchRule", "Compensation", "Diagnostic", "EdgeSpec", "IRSyntaxError", "IdempotencyKey", "IoSchema",
    "LoopGuards", "MissingPolicy", "NodeSpec", "Policy", "RepairSpec", "Retry", "SchemaError", "Timeout",
    "WorkflowIR", "check_policies", "check_repair_coverage", "check_well_formed", "ir_from_dict", "load_ir",
    "parse_ir", "resolve_policy",
]
