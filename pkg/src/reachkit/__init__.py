"""Exact reachability analysis for piecewise-linear networks."""

__version__ = "0.1.0"

from .core import (
    IDENTITY,
    RELU,
    Conjunct,
    LinearTerm,
    Network,
    Node,
    PWLFunction,
    Specification,
    eval_network,
)
from .verifier import BudgetExceeded, ReachInstance, ReachResult, VerifierConfig, decide

__all__ = [
    "IDENTITY",
    "RELU",
    "BudgetExceeded",
    "Conjunct",
    "LinearTerm",
    "Network",
    "Node",
    "PWLFunction",
    "ReachInstance",
    "ReachResult",
    "Specification",
    "VerifierConfig",
    "decide",
    "eval_network",
]
