"""Direct-collocation synthesis of falsifying inputs."""

from .problem import (
    DEFAULT_STATE_BOUND,
    DefectPreconditioner,
    OcpProblem,
    extract_input,
    transcribe,
    trapezoid_rollout,
    warm_start,
)
from .solver import (
    CONVERGED,
    INFEASIBLE_STALL,
    ITERATION_LIMIT,
    BoxNlp,
    NlpSolution,
    Preconditioner,
    SolverConfig,
    projected_gradient,
    solve,
)

__all__ = [
    "BoxNlp",
    "CONVERGED",
    "DEFAULT_STATE_BOUND",
    "DefectPreconditioner",
    "INFEASIBLE_STALL",
    "ITERATION_LIMIT",
    "NlpSolution",
    "Preconditioner",
    "OcpProblem",
    "SolverConfig",
    "extract_input",
    "projected_gradient",
    "solve",
    "transcribe",
    "trapezoid_rollout",
    "warm_start",
]
