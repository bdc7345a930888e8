"""Expression trees over lifted states ``z<i>`` and inputs ``u<j>``.

Trees are nested tuples so they hash, compare and copy for free:

* ``("z", i)``, ``("u", j)`` variables
* ``("c", value)`` constants
* ``(op, child)`` with op in ``exp, sin, cos``
* ``(op, left, right)`` with op in ``+ - * /``

Division is protected: a denominator with magnitude below ``DIV_GUARD``
produces NaN, so the candidate is flagged non-finite instead of crashing.
"""

from __future__ import annotations

import re
from typing import Iterator, List, Tuple

import numpy as np

UNARY = ("exp", "sin", "cos")
BINARY = ("+", "-", "*", "/")
DIV_GUARD = 1e-12
EXP_CLIP = 700.0


def complexity(e) -> int:
    if e[0] in UNARY:
        return 1 + complexity(e[1])
    if e[0] in BINARY:
        return 1 + complexity(e[1]) + complexity(e[2])
    return 1


def variables(e) -> set:
    if e[0] in ("z", "u"):
        return {(e[0], e[1])}
    if e[0] == "c":
        return set()
    return set().union(*(variables(c) for c in e[1:]))


def n_constants(e) -> int:
    if e[0] == "c":
        return 1
    if e[0] in ("z", "u"):
        return 0
    return sum(n_constants(c) for c in e[1:])


def constants(e) -> List[float]:
    if e[0] == "c":
        return [e[1]]
    if e[0] in ("z", "u"):
        return []
    out = []
    for c in e[1:]:
        out.extend(constants(c))
    return out


def with_constants(e, values):
    it = iter(values)

    def rec(node):
        if node[0] == "c":
            return ("c", float(next(it)))
        if node[0] in ("z", "u"):
            return node
        return (node[0],) + tuple(rec(c) for c in node[1:])

    return rec(e)


def subtrees(e, path=()) -> Iterator[Tuple[tuple, tuple]]:
    """Yield ``(path, subtree)`` in pre-order; a path is a tuple of child slots."""
    yield path, e
    if e[0] in UNARY or e[0] in BINARY:
        for i, c in enumerate(e[1:], start=1):
            yield from subtrees(c, path + (i,))


def replace_at(e, path, new):
    if not path:
        return new
    i = path[0]
    return e[:i] + (replace_at(e[i], path[1:], new),) + e[i + 1:]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def evaluate(e, Z, U) -> np.ndarray:
    """Vectorized evaluation; ``Z`` is (N, n) and ``U`` is (N, m)."""
    with np.errstate(all="ignore"):
        return _eval(e, np.asarray(Z, float), np.asarray(U, float))


def _eval(e, Z, U):
    op = e[0]
    if op == "z":
        return Z[:, e[1]]
    if op == "u":
        return U[:, e[1]]
    if op == "c":
        return np.full(Z.shape[0], e[1])
    if op == "exp":
        a = _eval(e[1], Z, U)
        return np.where(a > EXP_CLIP, np.inf, np.exp(np.minimum(a, EXP_CLIP)))
    if op == "sin":
        return np.sin(_eval(e[1], Z, U))
    if op == "cos":
        return np.cos(_eval(e[1], Z, U))
    l = _eval(e[1], Z, U)
    r = _eval(e[2], Z, U)
    if op == "+":
        return l + r
    if op == "-":
        return l - r
    if op == "*":
        return l * r
    return np.where(np.abs(r) < DIV_GUARD, np.nan, l / np.where(np.abs(r) < DIV_GUARD, 1.0, r))


def eval_expr(e, z, u) -> float:
    """Scalar evaluation at one point; NaN/inf results mark a flagged candidate."""
    z = np.atleast_1d(np.asarray(z, float))[None, :]
    u = np.atleast_1d(np.asarray(u, float))[None, :]
    return float(evaluate(e, z, u)[0])


def is_finite_value(x) -> bool:
    return bool(np.all(np.isfinite(x)))


def eval_with_const_jac(e, Z, U):
    """Value and Jacobian with respect to the constants (forward mode, pre-order)."""
    nc = n_constants(e)
    counter = [0]
    with np.errstate(all="ignore"):
        return _evalj(e, Z, U, nc, counter)


def _evalj(e, Z, U, nc, counter):
    n = Z.shape[0]
    op = e[0]
    if op in ("z", "u"):
        return (Z if op == "z" else U)[:, e[1]], np.zeros((n, nc))
    if op == "c":
        J = np.zeros((n, nc))
        J[:, counter[0]] = 1.0
        counter[0] += 1
        return np.full(n, e[1]), J
    if op in UNARY:
        a, Ja = _evalj(e[1], Z, U, nc, counter)
        if op == "exp":
            v = np.where(a > EXP_CLIP, np.inf, np.exp(np.minimum(a, EXP_CLIP)))
            return v, v[:, None] * Ja
        if op == "sin":
            return np.sin(a), np.cos(a)[:, None] * Ja
        return np.cos(a), -np.sin(a)[:, None] * Ja
    l, Jl = _evalj(e[1], Z, U, nc, counter)
    r, Jr = _evalj(e[2], Z, U, nc, counter)
    if op == "+":
        return l + r, Jl + Jr
    if op == "-":
        return l - r, Jl - Jr
    if op == "*":
        return l * r, Jl * r[:, None] + l[:, None] * Jr
    bad = np.abs(r) < DIV_GUARD
    rs = np.where(bad, 1.0, r)
    v = np.where(bad, np.nan, l / rs)
    return v, (Jl - v[:, None] * Jr) / rs[:, None]


# ---------------------------------------------------------------------------
# symbolic differentiation
# ---------------------------------------------------------------------------

ZERO = ("c", 0.0)
ONE = ("c", 1.0)


def simplify(e):
    """Constant folding and the 0/1 identities; no algebraic rewriting."""
    op = e[0]
    if op in ("z", "u", "c"):
        return e
    kids = tuple(simplify(c) for c in e[1:])
    if all(k[0] == "c" for k in kids):
        with np.errstate(all="ignore"):
            v = float(_eval((op,) + kids, np.zeros((1, 1)), np.zeros((1, 1)))[0])
        if np.isfinite(v):
            return ("c", v)
    if op in UNARY:
        return (op,) + kids
    l, r = kids
    if op == "+":
        if l == ZERO:
            return r
        if r == ZERO:
            return l
    elif op == "-":
        if r == ZERO:
            return l
        if l == r:
            return ZERO
    elif op == "*":
        if l == ZERO or r == ZERO:
            return ZERO
        if l == ONE:
            return r
        if r == ONE:
            return l
    elif op == "/":
        if l == ZERO:
            return ZERO
        if r == ONE:
            return l
    return (op, l, r)


def diff(e, var):
    """Symbolic partial derivative of ``e`` with respect to ``var`` = ("z", i) or ("u", j)."""
    return simplify(_diff(e, tuple(var)))


def _diff(e, var):
    op = e[0]
    if op in ("z", "u"):
        return ONE if (op, e[1]) == var else ZERO
    if op == "c":
        return ZERO
    if op in UNARY:
        a = e[1]
        da = _diff(a, var)
        if op == "exp":
            return ("*", e, da)
        if op == "sin":
            return ("*", ("cos", a), da)
        return ("*", ("*", ("c", -1.0), ("sin", a)), da)
    l, r = e[1], e[2]
    dl, dr = _diff(l, var), _diff(r, var)
    if op in "+-":
        return (op, dl, dr)
    if op == "*":
        return ("+", ("*", dl, r), ("*", l, dr))
    # (dl - (l/r) dr) / r keeps the guard on |r| identical to the original
    return ("/", ("-", dl, ("*", e, dr)), r)


def expr_jacobian(e, n_states: int, n_inputs: int):
    """Symbolic partials: ``([de/dz_i for i], [de/du_j for j])``."""
    return (
        [diff(e, ("z", i)) for i in range(n_states)],
        [diff(e, ("u", j)) for j in range(n_inputs)],
    )


# ---------------------------------------------------------------------------
# text form
# ---------------------------------------------------------------------------


def to_string(e) -> str:
    op = e[0]
    if op in ("z", "u"):
        return f"{op}{e[1]}"
    if op == "c":
        return repr(float(e[1]))
    if op in UNARY:
        return f"{op}({to_string(e[1])})"
    return f"({to_string(e[1])} {op} {to_string(e[2])})"


_TOK = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|inf|nan)|([zu])(\d+)|(exp|sin|cos)|([-+*/()]))")


def parse_expr(text: str):
    """Inverse of :func:`to_string` (also accepts usual precedence without parentheses)."""
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse expression at {pos}: {text[pos:pos + 10]!r}")
        num, var, idx, fn, sym = m.groups()
        if num is not None:
            toks.append(("num", float(num)))
        elif var is not None:
            toks.append((var, int(idx)))
        elif fn is not None:
            toks.append(("fn", fn))
        else:
            toks.append(("sym", sym))
        pos = m.end()
    toks.append(("end", None))
    i = [0]

    def peek():
        return toks[i[0]]

    def take():
        t = toks[i[0]]
        i[0] += 1
        return t

    def expect(sym):
        t = take()
        if t != ("sym", sym):
            raise ValueError(f"expected {sym!r} in {text!r}")

    def add():
        e = mul()
        while peek() in (("sym", "+"), ("sym", "-")):
            op = take()[1]
            e = (op, e, mul())
        return e

    def mul():
        e = atom()
        while peek() in (("sym", "*"), ("sym", "/")):
            op = take()[1]
            e = (op, e, atom())
        return e

    def atom():
        t = take()
        if t[0] == "num":
            return ("c", t[1])
        if t[0] in ("z", "u"):
            return t
        if t == ("sym", "-"):
            nxt = peek()
            if nxt[0] == "num":
                take()
                return ("c", -nxt[1])
            return ("*", ("c", -1.0), atom())
        if t[0] == "fn":
            expect("(")
            a = add()
            expect(")")
            return (t[1], a)
        if t == ("sym", "("):
            a = add()
            expect(")")
            return a
        raise ValueError(f"unexpected token {t!r} in {text!r}")

    e = add()
    if peek()[0] != "end":
        raise ValueError(f"trailing input in {text!r}")
    return e
