"""Job-shop scheduling domain model."""

from .disruption import DisruptionMark, apply_disruption
from .events import Downtime, DisruptionEvent, Shock, parse_breakdown, parse_shock
from .instance import FormatError, JsspInstance, Operation, format_instance, load_instance, parse_instance
from .oracle import TooLarge, brute_force_optimum
from .planners import seed_plan
from .schedule import EmptySchedule, Schedule, ScheduleEntry, critical_operations, makespan
from .validate import ValidationReport, Violation, validate_schedule

__all__ = [
    "DisruptionEvent", "DisruptionMark", "Downtime", "EmptySchedule", "FormatError", "JsspInstance",
    "Operation", "Schedule", "ScheduleEntry", "Shock", "TooLarge", "ValidationReport", "Violation",
    "apply_disruption", "brute_force_optimum", "critical_operations", "format_instance", "load_instance",
    "makespan", "parse_breakdown", "parse_instance", "parse_shock", "seed_plan", "validate_schedule",
]
