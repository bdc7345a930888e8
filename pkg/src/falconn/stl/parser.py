"""Recursive-descent parser for the textual STL language.

Grammar (EBNF)::

    formula     = implication ;
    implication = disjunction [ "->" implication ] ;
    disjunction = conjunction { "|" conjunction } ;
    conjunction = until { "&" until } ;
    until       = unary [ "U" interval unary ] ;
    unary       = ("!" | "~") unary
                | ("G" | "F") interval unary
                | comparison
                | "(" formula ")"
                | NAME ;                          (* named sub-formula *)
    interval    = "[" NUMBER "," NUMBER "]" ;
    comparison  = arith REL arith { REL arith } ;  (* chains become a conjunction *)
    REL         = ">" | ">=" | "<" | "<=" ;
    arith       = term { ("+" | "-") term } ;
    term        = factor { ("*" | "/") factor } ;
    factor      = "-" factor | NUMBER | NAME | "abs" "(" arith ")" | "(" arith ")" ;

``p -> q`` is desugared to ``!p | q``; the result is returned in negation
normal form.
"""

from __future__ import annotations

import re
from typing import Mapping, Optional

from .formula import (
    Abs,
    And,
    BinOp,
    Const,
    Finally,
    Formula,
    Globally,
    Neg,
    Not,
    Or,
    Pred,
    Predicate,
    Until,
    Var,
    to_nnf,
)


class StlSyntaxError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>->|>=|<=|[<>!~&|()\[\],+\-*/])
    """,
    re.VERBOSE,
)

_TEMPORAL = {"G", "F", "U"}
_RELS = {">", ">=", "<", "<="}


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise StlSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Backtrack(Exception):
    pass


class _Parser:
    def __init__(self, text: str, definitions: Mapping[str, Formula]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.defs = definitions

    # -- token helpers
    def peek(self, off=0):
        return self.toks[min(self.i + off, len(self.toks) - 1)]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def accept(self, value):
        if self.peek()[1] == value and self.peek()[0] in ("op", "name"):
            return self.next()
        return None

    def expect(self, value):
        tok = self.next()
        if tok[1] != value:
            got = tok[1] or "end of input"
            raise StlSyntaxError(f"expected {value!r}, got {got!r}", tok[2], self.text)
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return StlSyntaxError(message, tok[2], self.text)

    # -- formulas
    def parse(self) -> Formula:
        f = self.implication()
        tok = self.peek()
        if tok[0] != "eof":
            raise self.error(f"unexpected token {tok[1]!r}")
        return f

    def implication(self):
        lhs = self.disjunction()
        if self.accept("->"):
            rhs = self.implication()
            return Or((Not(lhs), rhs))
        return lhs

    def disjunction(self):
        parts = [self.conjunction()]
        while self.accept("|"):
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self):
        parts = [self.until()]
        while self.accept("&"):
            parts.append(self.until())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def until(self):
        lhs = self.unary()
        if self.peek()[1] == "U" and self.peek()[0] == "name":
            self.next()
            a, b = self.interval()
            rhs = self.unary()
            return Until(a, b, lhs, rhs)
        return lhs

    def interval(self):
        start = self.expect("[")
        a = self.signed_number()
        self.expect(",")
        b = self.signed_number()
        self.expect("]")
        if a < 0 or b < 0:
            raise StlSyntaxError("negative interval bound", start[2], self.text)
        if a > b:
            raise StlSyntaxError(f"inverted interval [{a}, {b}]", start[2], self.text)
        return a, b

    def signed_number(self):
        sign = -1.0 if self.accept("-") else 1.0
        tok = self.next()
        if tok[0] != "num":
            raise StlSyntaxError(f"expected number, got {tok[1]!r}", tok[2], self.text)
        return sign * float(tok[1])

    def unary(self):
        tok = self.peek()
        if tok[1] in ("!", "~") and tok[0] == "op":
            self.next()
            return Not(self.unary())
        if tok[0] == "name" and tok[1] in ("G", "F"):
            self.next()
            a, b = self.interval()
            child = self.unary()
            return (Globally if tok[1] == "G" else Finally)(a, b, child)
        if tok[0] == "name" and self.peek(1)[1] == "[" and tok[1] not in self.defs:
            raise self.error(f"unknown operator {tok[1]!r}", tok)
        save = self.i
        try:
            return self.comparison()
        except _Backtrack:
            self.i = save
        if self.accept("("):
            f = self.implication()
            self.expect(")")
            return f
        if tok[0] == "name" and tok[1] in self.defs:
            self.next()
            return self.defs[tok[1]]
        raise self.error(f"unexpected token {tok[1] or 'end of input'!r}", tok)

    def comparison(self):
        try:
            lhs = self.arith()
        except StlSyntaxError:
            raise _Backtrack()
        tok = self.peek()
        if not (tok[0] == "op" and tok[1] in _RELS):
            raise _Backtrack()
        preds = []
        while self.peek()[0] == "op" and self.peek()[1] in _RELS:
            rel = self.next()[1]
            rhs = self.arith()
            preds.append(Pred(Predicate(lhs, rel, rhs)))
            lhs = rhs
        return preds[0] if len(preds) == 1 else And(tuple(preds))

    # -- arithmetic
    def arith(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.next()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.next()[1]
            e = BinOp(op, e, self.factor())
        return e

    def factor(self):
        tok = self.next()
        if tok[0] == "op" and tok[1] == "-":
            return Neg(self.factor())
        if tok[0] == "num":
            return Const(float(tok[1]))
        if tok[0] == "name":
            if tok[1] == "abs":
                self.expect("(")
                e = self.arith()
                self.expect(")")
                return Abs(e)
            if tok[1] in _TEMPORAL or tok[1] in self.defs:
                raise StlSyntaxError(f"{tok[1]!r} is not a signal", tok[2], self.text)
            return Var(tok[1])
        if tok[0] == "op" and tok[1] == "(":
            e = self.arith()
            self.expect(")")
            return e
        raise StlSyntaxError(f"unexpected token {tok[1]!r}", tok[2], self.text)


def parse_formula(text: str, definitions: Optional[Mapping[str, str]] = None) -> Formula:
    """Parse ``text`` into an NNF formula.

    ``definitions`` maps names to formula strings that may be referenced as
    atoms, e.g. ``{"mu": "y > 0"}``.
    """
    defs = {}
    for name, body in (definitions or {}).items():
        defs[name] = _Parser(body, defs).parse()
    return to_nnf(_Parser(text, defs).parse())
