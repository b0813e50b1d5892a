"""Service modules for protocol execution, proof search and analysis."""

# Import the main entry points for easy access
from .analysis import Analyzer, AnalysisReport, analyze
from .logic import Prover, Rule, make_kb, prove, replay
from .protocol import EvidenceSpec, ProtocolSpec, RunConfig, run, terminal_states, validate

__all__ = [
    "Analyzer",
    "AnalysisReport",
    "analyze",
    "Prover",
    "Rule",
    "make_kb",
    "prove",
    "replay",
    "EvidenceSpec",
    "ProtocolSpec",
    "RunConfig",
    "run",
    "terminal_states",
    "validate",
]
