"""Localized cascading repair of disrupted or corrupted schedules."""

from .compensate import InfeasibleLocally, WipModel, local_compensate, queue_reorder
from .contain import Containment, contain_disruption
from .optimize import PreconditionViolated, optimize
from .recompute import global_recompute
from .repair import repair, repair_with_escalation
from .result import EditRadius, KeyMismatch, RepairResult, edit_radius

__all__ = [
    "Containment", "EditRadius", "InfeasibleLocally", "KeyMismatch", "PreconditionViolated", "RepairResult",
    "WipModel", "contain_disruption", "edit_radius", "global_recompute", "local_compensate", "optimize",
    "queue_reorder", "repair", "repair_with_escalation",
]
