"""Core value types: messages, times, formulas, errors and settings."""

from .config import Settings
from .errors import AnalysisError, Diagnostic
from .messages import Knowledge, analyze_closure, can_derive
from .timing import ConstraintSystem, entails, is_satisfiable

__all__ = [
    "Settings",
    "AnalysisError",
    "Diagnostic",
    "Knowledge",
    "analyze_closure",
    "can_derive",
    "ConstraintSystem",
    "entails",
    "is_satisfiable",
]
