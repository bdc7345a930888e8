"""Augmented-Lagrangian NLP solver with bound-constrained quasi-Newton inner solves.

The solver maximizes ``objective(w)`` subject to ``constraints(w) == 0`` and
box bounds. Each outer iteration minimizes

    -objective(w) + lam . c(w) + mu/2 |c(w)|^2

over the box with L-BFGS-B, then updates the multipliers. A major iteration
is one quasi-Newton step of an inner solve; the cap counts them across all
outer iterations.

The penalty term makes the inner problem badly conditioned along directions
that move constraint values (for collocation defects the condition number
grows like T^2). A problem may therefore offer ``preconditioner(w)``: a
linear change of variables ``w[idx] = w_ref[idx] + P^{-1} v`` taken from the
constraint Jacobian at the start of each outer iteration. Box bounds on the
transformed variables are then enforced through Powell-Hestenes-Rockafellar
inequality terms instead of the box.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

CONVERGED = "converged"
ITERATION_LIMIT = "iteration-limit"
INFEASIBLE_STALL = "infeasible-stall"


@dataclass(frozen=True)
class SolverConfig:
    max_major: int = 2000
    residual_tol: float = 1e-6
    gradient_tol: float = 1e-5
    mu0: float = 100.0
    mu_growth: float = 10.0
    mu_max: float = 1e12
    required_drop: float = 0.25
    max_outer: int = 100
    max_inner: int = 400
    memory: int = 10
    precondition: bool = True

    def __post_init__(self):
        if self.max_major < 1 or self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("iteration limits must be positive")
        if not (self.residual_tol > 0 and self.gradient_tol > 0 and self.mu0 > 0 and self.mu_growth > 1):
            raise ValueError("tolerances and penalty must be positive, growth above 1")


@dataclass
class NlpSolution:
    status: str
    objective: float
    w: np.ndarray
    residual: float
    iterations: int
    gradient_norm: float = float("nan")
    best_history: List[float] = field(default_factory=list)
    log: List[str] = field(default_factory=list)


class Preconditioner:
    """Linear map on a subset ``idx`` of the variables: ``dw[idx] = solve(v)``."""

    idx: np.ndarray

    def solve(self, v):  # P^{-1} v
        raise NotImplementedError

    def solve_t(self, g):  # P^{-T} g
        raise NotImplementedError


class _Abort(Exception):
    def __init__(self, w):
        self.w = w


def projected_gradient(w, g, lo, hi) -> np.ndarray:
    return w - np.clip(w - g, lo, hi)


class _Tracker:
    """Counts major iterations and keeps the best feasible objective seen."""

    def __init__(self, problem, config, w0):
        self.p = problem
        self.cfg = config
        self.count = 0
        self.best = -np.inf
        self.history = []
        self.lines = []
        self.prev = w0.copy()

    def step(self, w, lo, hi):
        self.count += 1
        val, _ = self.p.objective(w)
        res = _infeasibility(self.p, w, lo, hi)
        if np.isfinite(val) and res <= self.cfg.residual_tol:
            self.best = max(self.best, val)
        self.history.append(self.best)
        step = float(np.linalg.norm(w - self.prev))
        self.prev = w.copy()
        line = f"major {self.count:5d} objective {val: .9e} residual {res:.3e} step {step:.3e}"
        self.lines.append(line)
        log.info(line)


def _infeasibility(p, w, lo, hi) -> float:
    res = p.residual(w) if p.n_constraints else 0.0
    # bounds that live in the merit instead of the box can be slightly violated
    over = np.maximum(lo - w, w - hi)
    return max(res, float(np.max(over, initial=0.0)))


class _Merit:
    """Augmented Lagrangian in the (possibly transformed) inner variables."""

    def __init__(self, p, lam, mu, nu_lo, nu_hi, lo, hi, pre: Optional[Preconditioner], w_ref):
        self.p, self.lam, self.mu = p, lam, mu
        self.nu_lo, self.nu_hi = nu_lo, nu_hi
        self.lo, self.hi = lo, hi
        self.pre = pre
        self.w_ref = w_ref
        self.ncon = p.n_constraints

    def to_w(self, z):
        if self.pre is None:
            return z
        w = z.copy()
        w[self.pre.idx] = self.w_ref[self.pre.idx] + self.pre.solve(z[self.pre.idx])
        return w

    def start(self):
        if self.pre is None:
            return self.w_ref.copy()
        z = self.w_ref.copy()
        z[self.pre.idx] = 0.0
        return z

    def inner_bounds(self):
        if self.pre is None:
            return list(zip(self.lo, self.hi))
        lo = self.lo.copy()
        hi = self.hi.copy()
        lo[self.pre.idx] = -np.inf
        hi[self.pre.idx] = np.inf
        return [(a if np.isfinite(a) else None, b if np.isfinite(b) else None) for a, b in zip(lo, hi)]

    def value_grad_w(self, w):
        val, g = self.p.objective(w)
        f = -val
        grad = -g
        if self.ncon:
            c = self.p.constraints(w)
            f += float(self.lam @ c) + 0.5 * self.mu * float(c @ c)
            grad = grad + self.p.constraint_vjp(w, self.lam + self.mu * c)
        if self.pre is not None:
            idx = self.pre.idx
            mu = self.mu
            a = np.maximum(0.0, self.nu_lo + mu * (self.lo[idx] - w[idx]))
            b = np.maximum(0.0, self.nu_hi + mu * (w[idx] - self.hi[idx]))
            f += float((a @ a - self.nu_lo @ self.nu_lo + b @ b - self.nu_hi @ self.nu_hi) / (2 * mu))
            grad = grad.copy()
            grad[idx] += b - a
        return f, grad

    def __call__(self, z):
        w = self.to_w(z)
        f, grad = self.value_grad_w(w)
        if not np.isfinite(f) or not np.all(np.isfinite(grad)):
            raise _Abort(w.copy())
        if self.pre is not None:
            grad = grad.copy()
            grad[self.pre.idx] = self.pre.solve_t(grad[self.pre.idx])
        return f, grad


def solve(problem, init, config: SolverConfig = SolverConfig()) -> NlpSolution:
    """Local maximizer of the bounded, equality-constrained NLP ``problem``."""
    lo, hi = problem.bounds()
    w = np.clip(np.asarray(init, dtype=float), lo, hi)
    ncon = problem.n_constraints
    lam = np.zeros(ncon)
    mu = config.mu0
    tracker = _Tracker(problem, config, w)
    use_pre = config.precondition and ncon and hasattr(problem, "preconditioner")
    nu_lo = nu_hi = np.zeros(0)
    pg_norm = np.inf

    def finish(status, x):
        val, _ = problem.objective(x)
        res = _infeasibility(problem, x, lo, hi)
        line = f"finished: {status} after {tracker.count} major iterations, objective {val:.9e}, residual {res:.3e}"
        tracker.lines.append(line)
        log.info(line)
        return NlpSolution(status, float(val), x, res, tracker.count, pg_norm, tracker.history, tracker.lines)

    prev_viol = _infeasibility(problem, w, lo, hi)
    try:
        for _ in range(config.max_outer):
            remaining = config.max_major - tracker.count
            if remaining <= 0:
                return finish(ITERATION_LIMIT, w)
            pre = problem.preconditioner(w) if use_pre else None
            if pre is not None and nu_lo.size != pre.idx.size:
                nu_lo = np.zeros(pre.idx.size)
                nu_hi = np.zeros(pre.idx.size)
            merit = _Merit(problem, lam, mu, nu_lo, nu_hi, lo, hi, pre, w)
            res = minimize(
                merit, merit.start(), jac=True, method="L-BFGS-B", bounds=merit.inner_bounds(),
                callback=lambda z: tracker.step(merit.to_w(z), lo, hi),
                options={"maxiter": min(remaining, config.max_inner), "maxcor": config.memory,
                         "ftol": 1e-15, "gtol": 0.1 * config.gradient_tol, "maxls": 40},
            )
            w = merit.to_w(res.x)
            viol = _infeasibility(problem, w, lo, hi)
            if ncon:
                lam = lam + mu * problem.constraints(w)
            _, grad = problem.objective(w)
            grad = -grad + (problem.constraint_vjp(w, lam) if ncon else 0.0)
            if pre is not None:
                idx = pre.idx
                nu_lo = np.maximum(0.0, nu_lo + mu * (lo[idx] - w[idx]))
                nu_hi = np.maximum(0.0, nu_hi + mu * (w[idx] - hi[idx]))
                grad[idx] += nu_hi - nu_lo
            pg_norm = float(np.max(np.abs(projected_gradient(w, grad, lo, hi)), initial=0.0))
            log.debug("outer: violation %.3e gradient %.3e mu %.1e inner %d", viol, pg_norm, mu, res.nit)
            if viol < config.residual_tol and pg_norm < config.gradient_tol:
                return finish(CONVERGED, w)
            if tracker.count >= config.max_major:
                return finish(ITERATION_LIMIT, w)
            if viol > config.required_drop * prev_viol and viol >= config.residual_tol:
                if mu >= config.mu_max:
                    return finish(INFEASIBLE_STALL, w)
                mu *= config.mu_growth
            prev_viol = viol
        return finish(ITERATION_LIMIT, w)
    except _Abort as exc:
        line = f"non-finite evaluation after {tracker.count} major iterations"
        tracker.lines.append(line)
        log.warning(line)
        return NlpSolution(INFEASIBLE_STALL, float("nan"), exc.w, float("nan"), tracker.count, float("nan"),
                           tracker.history, tracker.lines)


class BoxNlp:
    """Small bound-constrained NLP from plain callables, for tests and tooling."""

    def __init__(self, objective, lo, hi, constraints=None, constraint_vjp=None):
        self._obj = objective
        self._lo = np.asarray(lo, float)
        self._hi = np.asarray(hi, float)
        self._con = constraints
        self._vjp = constraint_vjp
        self.n_vars = self._lo.size
        self.n_constraints = 0 if constraints is None else int(np.size(constraints(0.5 * (self._lo + self._hi))))

    def bounds(self):
        return self._lo, self._hi

    def objective(self, w):
        return self._obj(w)

    def constraints(self, w):
        return np.zeros(0) if self._con is None else np.asarray(self._con(w), float)

    def constraint_vjp(self, w, v):
        return np.zeros(self.n_vars) if self._vjp is None else self._vjp(w, v)

    def residual(self, w):
        c = self.constraints(w)
        return float(np.max(np.abs(c))) if c.size else 0.0
