"""Explicit-state model checking kernel."""

from .budget import NonTermination, NonTerminationError, run_budgeted
from .canonical import encode, fingerprint
from .dot import DotParseError, export_dot, parse_dot
from .explore import (
    LimitExceeded,
    Limits,
    ModelDefinition,
    StateGraph,
    Stats,
    Violation,
    explore,
)

__all__ = [
    "DotParseError",
    "LimitExceeded",
    "Limits",
    "ModelDefinition",
    "NonTermination",
    "NonTerminationError",
    "StateGraph",
    "Stats",
    "Violation",
    "encode",
    "explore",
    "export_dot",
    "fingerprint",
    "parse_dot",
    "run_budgeted",
]
