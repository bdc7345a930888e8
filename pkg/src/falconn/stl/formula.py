"""STL abstract syntax: arithmetic predicate expressions and temporal formulas."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union


# ---------------------------------------------------------------------------
# predicate arithmetic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Const:
    value: float

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"

    def __str__(self):
        return f"-({self.arg})"


@dataclass(frozen=True)
class Abs:
    arg: "Expr"

    def __str__(self):
        return f"abs({self.arg})"


Expr = Union[Var, Const, BinOp, Neg, Abs]


def expr_channels(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, BinOp):
        return expr_channels(e.left) | expr_channels(e.right)
    return expr_channels(e.arg)


@dataclass(frozen=True)
class Predicate:
    """Atomic comparison ``lhs <relation> rhs``.

    The canonical form is ``expr > 0``: ``lhs > rhs`` and ``lhs >= rhs`` map
    to ``lhs - rhs``, ``lhs < rhs`` and ``lhs <= rhs`` map to ``rhs - lhs``.
    Strictness does not change the robustness value.
    """

    lhs: Expr
    relation: str
    rhs: Expr

    def __post_init__(self):
        if self.relation not in (">", ">=", "<", "<="):
            raise ValueError(f"unknown relation {self.relation!r}")

    @property
    def expr(self) -> Expr:
        if self.relation in (">", ">="):
            return BinOp("-", self.lhs, self.rhs)
        return BinOp("-", self.rhs, self.lhs)

    def __str__(self):
        return f"{self.lhs} {self.relation} {self.rhs}"


# ---------------------------------------------------------------------------
# temporal formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pred:
    predicate: Predicate

    def __str__(self):
        return f"({self.predicate})"


@dataclass(frozen=True)
class NegPred:
    predicate: Predicate

    def __str__(self):
        return f"!({self.predicate})"


@dataclass(frozen=True)
class Not:
    """General negation. Only present before NNF normalization."""

    child: "Formula"

    def __str__(self):
        return f"!({self.child})"


@dataclass(frozen=True)
class And:
    children: Tuple["Formula", ...]

    def __str__(self):
        return "(" + " & ".join(str(c) for c in self.children) + ")"


@dataclass(frozen=True)
class Or:
    children: Tuple["Formula", ...]

    def __str__(self):
        return "(" + " | ".join(str(c) for c in self.children) + ")"


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class Globally:
    a: float
    b: float
    child: "Formula"

    def __str__(self):
        return f"G[{_fmt(self.a)},{_fmt(self.b)}]{self.child}"


@dataclass(frozen=True)
class Finally:
    a: float
    b: float
    child: "Formula"

    def __str__(self):
        return f"F[{_fmt(self.a)},{_fmt(self.b)}]{self.child}"


@dataclass(frozen=True)
class Until:
    a: float
    b: float
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"({self.left} U[{_fmt(self.a)},{_fmt(self.b)}] {self.right})"


Formula = Union[Pred, NegPred, Not, And, Or, Globally, Finally, Until]
TEMPORAL = (Globally, Finally, Until)


def children(f: Formula) -> tuple:
    if isinstance(f, (Pred, NegPred)):
        return ()
    if isinstance(f, (Not, Globally, Finally)):
        return (f.child,)
    if isinstance(f, (And, Or)):
        return f.children
    return (f.left, f.right)


def to_nnf(f: Formula) -> Formula:
    """Push negations down to the predicates; flatten nested And/Or."""
    return _nnf(f, False)


def _nnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Pred):
        return NegPred(f.predicate) if neg else f
    if isinstance(f, NegPred):
        return Pred(f.predicate) if neg else f
    if isinstance(f, Not):
        return _nnf(f.child, not neg)
    if isinstance(f, (And, Or)):
        kids = tuple(_nnf(c, neg) for c in f.children)
        cls = type(f)
        if neg:
            cls = Or if cls is And else And
        flat = []
        for c in kids:
            flat.extend(c.children if isinstance(c, cls) else (c,))
        return cls(tuple(flat))
    if isinstance(f, Globally):
        return (Finally if neg else Globally)(f.a, f.b, _nnf(f.child, neg))
    if isinstance(f, Finally):
        return (Globally if neg else Finally)(f.a, f.b, _nnf(f.child, neg))
    if isinstance(f, Until):
        if neg:
            # Until has no dual in the fragment; callers negate at the root
            # only through the OCP, which never sees Until under negation.
            raise ValueError("negated Until is not expressible in negation normal form")
        return Until(f.a, f.b, _nnf(f.left, False), _nnf(f.right, False))
    raise TypeError(f"not a formula node: {f!r}")


def negate(f: Formula) -> Formula:
    return to_nnf(Not(f))


def is_nnf(f: Formula) -> bool:
    if isinstance(f, Not):
        return False
    return all(is_nnf(c) for c in children(f))


def formula_horizon(f: Formula) -> float:
    """Largest nested sum of upper interval bounds (seconds)."""
    if isinstance(f, (Pred, NegPred)):
        return 0.0
    if isinstance(f, Not):
        return formula_horizon(f.child)
    if isinstance(f, (And, Or)):
        return max(formula_horizon(c) for c in f.children)
    if isinstance(f, (Globally, Finally)):
        return f.b + formula_horizon(f.child)
    return f.b + max(formula_horizon(f.left), formula_horizon(f.right))


def formula_depth(f: Formula) -> int:
    """Number of min/max aggregation levels along the deepest path."""
    kids = children(f)
    if not kids:
        return 0
    if isinstance(f, Not):
        return formula_depth(f.child)
    if isinstance(f, Until):
        # outer max, pairwise min, prefix min over the left operand
        return max(3 + formula_depth(f.left), 2 + formula_depth(f.right))
    return 1 + max(formula_depth(c) for c in kids)


def formula_channels(f: Formula) -> set:
    if isinstance(f, (Pred, NegPred)):
        return expr_channels(f.predicate.expr)
    out = set()
    for c in children(f):
        out |= formula_channels(c)
    return out
