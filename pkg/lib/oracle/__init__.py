"""Brute-force reference checkers and random instance generators."""

from oracle.brute_force import (
    GridSpec,
    bf_closure,
    bf_derivable,
    bf_entails,
    bf_fairness,
    bf_sat,
    bf_timed_refutation,
    enumerate_truncations,
    mutate_derivation,
)

__all__ = [
    "GridSpec",
    "bf_closure",
    "bf_derivable",
    "bf_entails",
    "bf_fairness",
    "bf_sat",
    "bf_timed_refutation",
    "enumerate_truncations",
    "mutate_derivation",
]
