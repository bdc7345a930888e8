"""Symbolic distillation of a trained surrogate."""

from .distill import (
    DerivativeSamples,
    DistillationError,
    SymbolicModel,
    distill,
    sample_derivatives,
    score_candidates,
    select_candidate,
)
from .expr import (
    complexity,
    diff,
    eval_expr,
    evaluate,
    expr_jacobian,
    parse_expr,
    simplify,
    to_string,
)
from .gp import Candidate, SrConfig, evolve, pareto

__all__ = [
    "Candidate",
    "DerivativeSamples",
    "DistillationError",
    "SrConfig",
    "SymbolicModel",
    "complexity",
    "diff",
    "distill",
    "eval_expr",
    "evaluate",
    "evolve",
    "expr_jacobian",
    "pareto",
    "parse_expr",
    "sample_derivatives",
    "score_candidates",
    "select_candidate",
    "simplify",
    "to_string",
]
