"""Genetic programming over expression trees with gradient-refined constants."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.optimize import minimize

from . import expr as ex

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SrConfig:
    iterations: int = 100
    population: int = 50
    max_complexity: int = 30  # exclusive: emitted trees have fewer nodes
    tournament: int = 5
    crossover_rate: float = 0.3
    immigrant_rate: float = 0.1
    optimize_rate: float = 0.1
    const_opt_steps: int = 8
    final_opt_steps: int = 50
    parsimony: float = 0.01
    max_fit_points: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.population < 2 or self.tournament < 1:
            raise ValueError("iterations, population and tournament size must be positive")
        if self.max_complexity < 2:
            raise ValueError("complexity cap must allow at least one leaf")
        for name in ("crossover_rate", "immigrant_rate", "optimize_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class Candidate:
    expr: tuple
    complexity: int
    mse: float

    def __str__(self):
        return ex.to_string(self.expr)


def mse_of(e, Z, U, y) -> float:
    with np.errstate(all="ignore"):
        r = ex.evaluate(e, Z, U) - y
        v = float(np.mean(r * r))
    return v if np.isfinite(v) else np.inf


def optimize_constants(e, Z, U, y, steps: int):
    """A few BFGS steps on the derivative MSE; keeps the input tree if nothing improves."""
    c0 = np.array(ex.constants(e))
    if c0.size == 0 or steps <= 0:
        return e, mse_of(e, Z, U, y)
    n = y.size

    def fun(c):
        v, J = ex.eval_with_const_jac(ex.with_constants(e, c), Z, U)
        with np.errstate(all="ignore"):
            r = v - y
            f = float(np.mean(r * r))
        if not np.isfinite(f):
            return 1e300, np.zeros_like(c)
        with np.errstate(all="ignore"):
            g = (2.0 / n) * (r @ J)
        if not np.all(np.isfinite(g)):
            return 1e300, np.zeros_like(c)
        return f, g

    f0 = fun(c0)[0]
    with np.errstate(all="ignore"):
        res = minimize(fun, c0, jac=True, method="BFGS", options={"maxiter": steps, "gtol": 1e-14})
    if np.all(np.isfinite(res.x)) and res.fun < f0:
        e2 = ex.with_constants(e, res.x)
        return e2, mse_of(e2, Z, U, y)
    return e, (f0 if f0 < 1e300 else np.inf)


class _Generator:
    """Random trees and the variation operators."""

    def __init__(self, rng: np.random.Generator, n_states: int, n_inputs: int, cap: int):
        self.rng = rng
        self.leaves = [("z", i) for i in range(n_states)] + [("u", j) for j in range(n_inputs)]
        self.cap = cap

    def leaf(self):
        if self.rng.random() < 0.3:
            return ("c", float(np.round(self.rng.normal(0.0, 2.0), 6)))
        return self.leaves[self.rng.integers(len(self.leaves))]

    def tree(self, depth: int):
        if depth <= 0 or self.rng.random() < 0.3:
            return self.leaf()
        if self.rng.random() < 0.2:
            return (ex.UNARY[self.rng.integers(3)], self.tree(depth - 1))
        return (ex.BINARY[self.rng.integers(4)], self.tree(depth - 1), self.tree(depth - 1))

    def _pick(self, e, internal=False):
        nodes = [(p, s) for p, s in ex.subtrees(e) if not internal or s[0] in ex.UNARY + ex.BINARY]
        if not nodes:
            return None
        return nodes[self.rng.integers(len(nodes))]

    def crossover(self, a, b):
        pa, _ = self._pick(a)
        _, sb = self._pick(b)
        return ex.replace_at(a, pa, sb)

    def point(self, e):
        p, s = self._pick(e)
        if s[0] in ex.UNARY:
            ops = [o for o in ex.UNARY if o != s[0]]
            new = (ops[self.rng.integers(len(ops))], s[1])
        elif s[0] in ex.BINARY:
            ops = [o for o in ex.BINARY if o != s[0]]
            new = (ops[self.rng.integers(len(ops))], s[1], s[2])
        else:
            new = self.leaf()
        return ex.replace_at(e, p, new)

    def replace(self, e):
        p, _ = self._pick(e)
        return ex.replace_at(e, p, self.tree(2))

    def insert(self, e):
        p, s = self._pick(e)
        if self.rng.random() < 0.25:
            new = (ex.UNARY[self.rng.integers(3)], s)
        else:
            op = ex.BINARY[self.rng.integers(4)]
            other = self.leaf()
            new = (op, s, other) if self.rng.random() < 0.5 else (op, other, s)
        return ex.replace_at(e, p, new)

    def delete(self, e):
        picked = self._pick(e, internal=True)
        if picked is None:
            return self.leaf()
        p, s = picked
        return ex.replace_at(e, p, s[1 + self.rng.integers(len(s) - 1)])

    def jitter(self, e):
        c = ex.constants(e)
        if not c:
            return self.point(e)
        i = self.rng.integers(len(c))
        c = list(c)
        c[i] = c[i] * float(np.exp(0.3 * self.rng.normal())) + 0.1 * float(self.rng.normal())
        if self.rng.random() < 0.05:
            c[i] = -c[i]
        return ex.with_constants(e, c)

    def mutate(self, e):
        ops = (self.jitter, self.point, self.replace, self.insert, self.delete)
        weights = np.array([0.25, 0.2, 0.15, 0.25, 0.15])
        return ops[self.rng.choice(len(ops), p=weights)](e)


def _subsample(n: int, cap: int, rng) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.sort(rng.choice(n, size=cap, replace=False))


def evolve_row(Z, U, y, config: SrConfig, rng: np.random.Generator) -> List[Candidate]:
    """Evolve expressions for one target column; returns the Pareto front."""
    Z = np.asarray(Z, float)
    U = np.asarray(U, float)
    y = np.asarray(y, float)
    if y.size == 0:
        raise ValueError("evolve needs at least one sample")
    idx = _subsample(y.size, config.max_fit_points, rng)
    Zf, Uf, yf = Z[idx], U[idx], y[idx]
    gen = _Generator(rng, Z.shape[1], U.shape[1], config.max_complexity)
    cap = config.max_complexity
    hof = {}

    def consider(e, mse):
        c = ex.complexity(e)
        if c < cap and np.isfinite(mse) and (c not in hof or mse < hof[c][0]):
            hof[c] = (mse, e)

    def score(mse, e):
        return mse * (1.0 + config.parsimony * ex.complexity(e))

    # constants are always representable, so the front is never empty
    const = ("c", float(np.mean(yf)))
    pop = [(mse_of(const, Zf, Uf, yf), const)]
    while len(pop) < config.population:
        e = gen.tree(int(rng.integers(1, 4)))
        if ex.complexity(e) < cap:
            pop.append((mse_of(e, Zf, Uf, yf), e))
    for m, e in pop:
        consider(e, m)

    def tournament():
        picks = rng.choice(len(pop), size=min(config.tournament, len(pop)), replace=False)
        return min((pop[i] for i in picks), key=lambda me: score(*me))[1]

    for _ in range(config.iterations):
        children = []
        for _ in range(config.population):
            r = rng.random()
            if r < config.immigrant_rate:
                child = gen.tree(int(rng.integers(1, 4)))
            elif r < config.immigrant_rate + config.crossover_rate:
                child = gen.crossover(tournament(), tournament())
            else:
                child = gen.mutate(tournament())
            if ex.complexity(child) >= cap:
                continue
            if rng.random() < config.optimize_rate:
                child, m = optimize_constants(child, Zf, Uf, yf, config.const_opt_steps)
            else:
                m = mse_of(child, Zf, Uf, yf)
            consider(child, m)
            children.append((m, child))
        merged = {}
        for m, e in pop + children:
            merged.setdefault(e, m)
        ranked = sorted(((m, e) for e, m in merged.items()), key=lambda me: (score(*me), ex.complexity(me[1])))
        pop = ranked[: config.population]

    front = []
    for c in sorted(hof):
        m, e = hof[c]
        e, m = optimize_constants(e, Zf, Uf, yf, config.final_opt_steps)
        m = mse_of(e, Z, U, y)
        front.append(Candidate(e, c, m))
    return pareto(front)


def pareto(cands: Sequence[Candidate]) -> List[Candidate]:
    """Keep candidates that beat every simpler one; MSE strictly falls with complexity."""
    out = []
    best = np.inf
    for c in sorted(cands, key=lambda c: (c.complexity, c.mse)):
        if c.mse < best:
            out.append(c)
            best = c.mse
    return out


def evolve(Z, U, targets, config: SrConfig = SrConfig()) -> List[List[Candidate]]:
    """One Pareto front per target column (independent per-row regression)."""
    targets = np.asarray(targets, float)
    if targets.ndim == 1:
        targets = targets[:, None]
    seeds = np.random.SeedSequence(config.seed).spawn(targets.shape[1])
    fronts = []
    for r in range(targets.shape[1]):
        front = evolve_row(Z, U, targets[:, r], config, np.random.default_rng(seeds[r]))
        log.debug("row %d front: %s", r, [(c.complexity, c.mse) for c in front])
        fronts.append(front)
    return fronts
