"""Signal temporal logic: parsing, normalization and robustness."""

from .formula import (
    Abs,
    And,
    BinOp,
    Const,
    Finally,
    Formula,
    Globally,
    Neg,
    NegPred,
    Not,
    Or,
    Pred,
    Predicate,
    Until,
    Var,
    formula_channels,
    formula_depth,
    formula_horizon,
    is_nnf,
    negate,
    to_nnf,
)
from .parser import StlSyntaxError, parse_formula
from .robustness import (
    EmptyIntervalError,
    HorizonError,
    RobustnessResult,
    SampledSignal,
    SmoothRobustness,
    UnknownChannelError,
    interval_indices,
    max_arity,
    robustness_exact,
    robustness_gradient_check,
    robustness_signal,
    robustness_smooth,
    soft_max,
    soft_min,
)

# Table-style benchmark specifications for a setpoint-tracking plant with
# input ``Ref`` and output ``Pos``.
NN_SPEC = (
    "G[1,37]((abs(Pos - Ref) > 0.005 + 0.03*abs(Ref)) "
    "-> F[0,2] G[0,1] !(0.005 + 0.03*abs(Ref) <= abs(Pos - Ref)))"
)
NN_BETA_SPEC = (
    "G[1,37]((abs(Pos - Ref) > 0.005 + 0.04*abs(Ref)) "
    "-> F[0,2] G[0,1] !(0.005 + 0.04*abs(Ref) <= abs(Pos - Ref)))"
)
NNX_SPEC = (
    "F[0,1](Pos > 3.2) & F[1,1.5](G[0,0.5](1.75 < Pos < 2.25)) "
    "& G[2,3](1.825 < Pos < 2.175)"
)
