"""Disruption-aware planning engine: workflow IR, execution log, and localized schedule repair."""

__version__ = "0.1.0"
