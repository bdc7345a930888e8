"""Quantitative STL semantics on sampled signals.

Two evaluators share one compiled plan:

* exact: true min/max.
* smooth: every min/max replaced by its log-sum-exp form with sharpness ``k``,
  ``abs`` replaced by ``sqrt(x**2 + 1e-12)``; the gradient with respect to
  every channel sample is obtained by a reverse sweep over the plan.

Robustness signals are computed for all anchors at once. Windows that run
past the end of the trace are truncated, and windows with no sample at all
hold a finite placeholder; neither is ever reached when the horizon
precondition of the top-level call holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from .formula import (
    Abs,
    And,
    Const,
    Finally,
    Formula,
    Globally,
    Neg,
    NegPred,
    Not,
    Or,
    Pred,
    Until,
    Var,
    formula_channels,
    formula_horizon,
)

ABS_EPS = 1e-12
_SLOP = 1e-9


class HorizonError(ValueError):
    pass


class EmptyIntervalError(ValueError):
    pass


class UnknownChannelError(KeyError):
    pass


@dataclass
class SampledSignal:
    times: np.ndarray
    channels: Dict[str, np.ndarray]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("a signal needs at least one sample")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        chans = {}
        for name, vals in self.channels.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != self.times.shape:
                raise ValueError(f"channel {name!r} has {vals.size} samples, expected {self.times.size}")
            chans[name] = vals
        self.channels = chans

    def __len__(self):
        return self.times.size


@dataclass
class RobustnessResult:
    value: float
    mode: str  # "exact" or "smooth"
    k: Optional[float] = None
    gradient: Optional[Dict[str, np.ndarray]] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# interval binding
# ---------------------------------------------------------------------------


def _local_steps(times: np.ndarray) -> np.ndarray:
    if times.size == 1:
        return np.zeros(1)
    d = np.diff(times)
    return np.concatenate([d, d[-1:]])


def interval_indices(times, t_anchor: float, a: float, b: float) -> range:
    """Indices ``j`` with ``t_anchor + a - eps <= times[j] <= t_anchor + b + eps``.

    ``eps`` is half the sampling step at the sample nearest to ``t_anchor``.
    """
    times = np.asarray(times, dtype=float)
    near = int(np.argmin(np.abs(times - t_anchor)))
    eps = 0.5 * _local_steps(times)[near]
    lo, hi = _window_bounds(times, np.array([t_anchor]), np.array([eps]), a, b)
    if hi[0] < lo[0]:
        raise EmptyIntervalError(
            f"no sample in [{t_anchor + a}, {t_anchor + b}]; horizon or sampling mismatch"
        )
    return range(int(lo[0]), int(hi[0]) + 1)


def _window_bounds(times, anchors, eps, a, b):
    scale = _SLOP * max(1.0, abs(float(times[-1])))
    lo = np.searchsorted(times, anchors + a - eps - scale, side="left")
    hi = np.searchsorted(times, anchors + b + eps + scale, side="right") - 1
    return lo, hi


class _Window:
    """Padded gather indices of one temporal interval for every anchor."""

    def __init__(self, times: np.ndarray, a: float, b: float):
        n = times.size
        lo, hi = _window_bounds(times, times, 0.5 * _local_steps(times), a, b)
        hi = np.minimum(hi, n - 1)
        self.lo, self.hi = lo, hi
        self.empty = hi < lo
        width = np.where(self.empty, 0, hi - lo + 1)
        w = max(int(width.max()), 1)
        offs = np.arange(w)
        idx = lo[:, None] + offs[None, :]
        self.mask = offs[None, :] < width[:, None]
        self.idx = np.where(self.mask, idx, 0)
        self.max_width = int(width.max()) if n else 0


# ---------------------------------------------------------------------------
# predicate expressions
# ---------------------------------------------------------------------------


def _expr_value(e, env, smooth):
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnknownChannelError(f"signal has no channel {e.name!r}") from None
    if isinstance(e, Const):
        return np.full(env["__n__"], e.value)
    if isinstance(e, Neg):
        return -_expr_value(e.arg, env, smooth)
    if isinstance(e, Abs):
        x = _expr_value(e.arg, env, smooth)
        return np.sqrt(x * x + ABS_EPS) if smooth else np.abs(x)
    l = _expr_value(e.left, env, smooth)
    r = _expr_value(e.right, env, smooth)
    if e.op == "+":
        return l + r
    if e.op == "-":
        return l - r
    if e.op == "*":
        return l * r
    return l / r


def _expr_backward(e, env, adj, grads):
    """Accumulate d(sum adj * e)/d(channel) into ``grads`` (smooth semantics)."""
    if isinstance(e, Var):
        grads[e.name] += adj
        return
    if isinstance(e, Const):
        return
    if isinstance(e, Neg):
        _expr_backward(e.arg, env, -adj, grads)
        return
    if isinstance(e, Abs):
        x = _expr_value(e.arg, env, True)
        _expr_backward(e.arg, env, adj * x / np.sqrt(x * x + ABS_EPS), grads)
        return
    if e.op in "+-":
        _expr_backward(e.left, env, adj, grads)
        _expr_backward(e.right, env, adj if e.op == "+" else -adj, grads)
        return
    l = _expr_value(e.left, env, True)
    r = _expr_value(e.right, env, True)
    if e.op == "*":
        _expr_backward(e.left, env, adj * r, grads)
        _expr_backward(e.right, env, adj * l, grads)
    else:
        _expr_backward(e.left, env, adj / r, grads)
        _expr_backward(e.right, env, -adj * l / (r * r), grads)


# ---------------------------------------------------------------------------
# soft aggregation
# ---------------------------------------------------------------------------


def _soft(vals, mask, k, sign):
    """Row-wise soft max (sign=+1) or soft min (sign=-1) with softmax weights."""
    z = np.where(mask, sign * k * vals, -np.inf)
    m = z.max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    ez = np.where(mask, np.exp(z - m), 0.0)
    s = ez.sum(axis=1, keepdims=True)
    s_safe = np.where(s > 0, s, 1.0)
    lse = (m + np.log(s_safe))[:, 0]
    w = ez / s_safe
    return sign * lse / k, w


def soft_max(values, k: float) -> float:
    v, _ = _soft(np.asarray(values, float)[None, :], np.ones((1, len(values)), bool), k, 1.0)
    return float(v[0])


def soft_min(values, k: float) -> float:
    v, _ = _soft(np.asarray(values, float)[None, :], np.ones((1, len(values)), bool), k, -1.0)
    return float(v[0])


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("formula", "kids", "window", "cache", "arity")

    def __init__(self, formula, kids, window=None):
        self.formula = formula
        self.kids = kids
        self.window = window
        self.cache = None


def _compile(f: Formula, times: np.ndarray) -> _Node:
    if isinstance(f, (Pred, NegPred)):
        return _Node(f, ())
    if isinstance(f, Not):
        raise ValueError("formula must be in negation normal form")
    if isinstance(f, (And, Or)):
        return _Node(f, tuple(_compile(c, times) for c in f.children))
    if isinstance(f, (Globally, Finally)):
        return _Node(f, (_compile(f.child, times),), _Window(times, f.a, f.b))
    if isinstance(f, Until):
        return _Node(f, (_compile(f.left, times), _compile(f.right, times)), _Window(times, f.a, f.b))
    raise TypeError(f"not a formula node: {f!r}")


def _max_arity(node: _Node) -> int:
    here = 1
    if isinstance(node.formula, (And, Or)):
        here = len(node.kids)
    elif node.window is not None:
        here = max(node.window.max_width, 2 if isinstance(node.formula, Until) else 1)
    return max([here] + [_max_arity(c) for c in node.kids])


def _forward(node: _Node, env, smooth: bool, k: float) -> np.ndarray:
    f = node.formula
    if isinstance(f, (Pred, NegPred)):
        v = _expr_value(f.predicate.expr, env, smooth)
        v = np.asarray(v, dtype=float)
        return -v if isinstance(f, NegPred) else v
    kid_vals = [_forward(c, env, smooth, k) for c in node.kids]
    if isinstance(f, (And, Or)):
        stack = np.stack(kid_vals, axis=1)
        sign = -1.0 if isinstance(f, And) else 1.0
        if not smooth:
            return stack.min(axis=1) if sign < 0 else stack.max(axis=1)
        val, w = _soft(stack, np.ones(stack.shape, bool), k, sign)
        node.cache = w
        return val
    win = node.window
    if isinstance(f, (Globally, Finally)):
        sign = -1.0 if isinstance(f, Globally) else 1.0
        vals = kid_vals[0][win.idx]
        if not smooth:
            fill = np.inf if sign < 0 else -np.inf
            g = np.where(win.mask, vals, fill)
            out = g.min(axis=1) if sign < 0 else g.max(axis=1)
            return np.where(win.empty, 0.0, out)
        val, w = _soft(vals, win.mask, k, sign)
        node.cache = w
        return np.where(win.empty, 0.0, val)
    return _until_forward(node, kid_vals[0], kid_vals[1], smooth, k)


def _until_forward(node, left, right, smooth, k):
    win = node.window
    n = left.size
    out = np.zeros(n)
    caches = [None] * n
    for i in range(n):
        if win.empty[i]:
            continue
        lo, hi = int(win.lo[i]), int(win.hi[i]) + 1
        r2 = right[lo:hi]
        r1 = left[lo:hi]
        if not smooth:
            pre = np.minimum.accumulate(r1)
            out[i] = np.minimum(r2, pre).max()
            continue
        # prefix soft-min over [t+a, t'] for each t'
        lg = np.logaddexp.accumulate(-k * r1)
        pre = -lg / k
        pair = np.stack([r2, pre], axis=1)
        pv, pw = _soft(pair, np.ones(pair.shape, bool), k, -1.0)
        ov, ow = _soft(pv[None, :], np.ones((1, pv.size), bool), k, 1.0)
        out[i] = ov[0]
        caches[i] = (lo, hi, r1, lg, pw, ow[0])
    node.cache = caches
    return out


def _backward(node: _Node, adj: np.ndarray, env, grads, k: float):
    f = node.formula
    if isinstance(f, (Pred, NegPred)):
        _expr_backward(f.predicate.expr, env, -adj if isinstance(f, NegPred) else adj, grads)
        return
    if isinstance(f, (And, Or)):
        w = node.cache
        for j, c in enumerate(node.kids):
            _backward(c, adj * w[:, j], env, grads, k)
        return
    win = node.window
    n = adj.size
    if isinstance(f, (Globally, Finally)):
        contrib = np.where(win.mask & ~win.empty[:, None], adj[:, None] * node.cache, 0.0)
        child_adj = np.bincount(win.idx.ravel(), weights=contrib.ravel(), minlength=n)
        _backward(node.kids[0], child_adj, env, grads, k)
        return
    adj_l = np.zeros(n)
    adj_r = np.zeros(n)
    for i in range(n):
        c = node.cache[i]
        if c is None or adj[i] == 0.0:
            continue
        lo, hi, r1, lg, pw, ow = c
        g_pair = adj[i] * ow  # adjoint of each pair-min value
        adj_r[lo:hi] += g_pair * pw[:, 0]
        g_pre = g_pair * pw[:, 1]  # adjoint of each prefix soft-min, >= 0
        # d pre_j / d r1_i = exp(-k r1_i - lg_j) for i <= j
        with np.errstate(divide="ignore"):
            lt = np.log(g_pre) - lg
        rev = np.logaddexp.accumulate(lt[::-1])[::-1]
        adj_l[lo:hi] += np.exp(rev - k * r1)
    _backward(node.kids[0], adj_l, env, grads, k)
    _backward(node.kids[1], adj_r, env, grads, k)


def _env(signal: SampledSignal, f: Formula):
    missing = formula_channels(f) - set(signal.channels)
    if missing:
        raise UnknownChannelError(f"signal has no channel(s) {sorted(missing)}")
    env = dict(signal.channels)
    env["__n__"] = len(signal)
    return env


def _check_horizon(f, times, t_index):
    if not 0 <= t_index < times.size:
        raise IndexError(f"t_index {t_index} outside the trace")
    need = times[t_index] + formula_horizon(f)
    if need > times[-1] + _SLOP * max(1.0, abs(float(times[-1]))) + 0.5 * _local_steps(times)[-1]:
        raise HorizonError(
            f"formula needs the trace up to t={need:g}, trace ends at t={times[-1]:g}"
        )


# ---------------------------------------------------------------------------
# public evaluators
# ---------------------------------------------------------------------------


def robustness_signal(f: Formula, s: SampledSignal) -> np.ndarray:
    """Exact robustness at every anchor (entries past the horizon are truncated)."""
    return _forward(_compile(f, s.times), _env(s, f), False, 0.0)


def robustness_exact(f: Formula, s: SampledSignal, t_index: int = 0) -> float:
    _check_horizon(f, s.times, t_index)
    return float(robustness_signal(f, s)[t_index])


def robustness_smooth(f: Formula, s: SampledSignal, t_index: int = 0, k: float = 2.0) -> RobustnessResult:
    if not k > 0:
        raise ValueError("smoothing parameter k must be positive")
    _check_horizon(f, s.times, t_index)
    return SmoothRobustness(f, s.times, k, t_index)(s.channels)


class SmoothRobustness:
    """Smooth robustness of ``f`` at one anchor, compiled for a fixed time grid.

    Calling it with a channel mapping returns a :class:`RobustnessResult`
    carrying the gradient with respect to every sample of every channel.
    """

    def __init__(self, f: Formula, times, k: float, t_index: int = 0):
        self.formula = f
        self.times = np.asarray(times, dtype=float)
        self.k = float(k)
        self.t_index = t_index
        _check_horizon(f, self.times, t_index)
        self.plan = _compile(f, self.times)
        self.channels = sorted(formula_channels(f))
        self.max_arity = _max_arity(self.plan)

    def __call__(self, channels: Mapping[str, np.ndarray]) -> RobustnessResult:
        n = self.times.size
        env = {}
        for name in self.channels:
            if name not in channels:
                raise UnknownChannelError(f"signal has no channel {name!r}")
            env[name] = np.asarray(channels[name], dtype=float)
        env["__n__"] = n
        vals = _forward(self.plan, env, True, self.k)
        adj = np.zeros(n)
        adj[self.t_index] = 1.0
        grads = {name: np.zeros(n) for name in channels}
        _backward(self.plan, adj, env, grads, self.k)
        return RobustnessResult(float(vals[self.t_index]), "smooth", self.k, grads)


def max_arity(f: Formula, times) -> int:
    """Largest number of operands aggregated by any min/max in an evaluation."""
    return _max_arity(_compile(f, np.asarray(times, dtype=float)))


def robustness_gradient_check(f: Formula, s: SampledSignal, t_index: int = 0, k: float = 2.0) -> float:
    """Worst relative error of the analytic smooth gradient against central differences."""
    res = robustness_smooth(f, s, t_index, k)
    ev = SmoothRobustness(f, s.times, k, t_index)
    analytic, numeric = [], []
    for name in ev.channels:
        base = s.channels[name]
        for j in range(base.size):
            h = 1e-6 * max(1.0, abs(base[j]))
            up = dict(s.channels)
            dn = dict(s.channels)
            up[name] = base.copy()
            dn[name] = base.copy()
            up[name][j] += h
            dn[name][j] -= h
            numeric.append((ev(up).value - ev(dn).value) / (2 * h))
            analytic.append(res.gradient[name][j])
    analytic, numeric = np.array(analytic), np.array(numeric)
    scale = max(float(np.abs(numeric).max(initial=0.0)), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)
