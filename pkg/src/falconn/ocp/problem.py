"""Trapezoidal transcription of the falsification optimal-control problem.

Decision vector layout: states ``x_1 .. x_T`` (``x_0`` is fixed and left
out), then inputs ``u_0 .. u_T``, each block row-major. The objective to
maximize is the smooth robustness of the negated specification evaluated
on ``y_k = C x_k`` and ``u_k`` at ``t_k = k dt``.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..sim.integrate import DIVERGENCE_LIMIT, DivergenceError
from ..sim.signals import InputSignal
from ..stl import Formula, HorizonError, SmoothRobustness, formula_channels, formula_horizon, negate
from ..symreg.distill import SymbolicModel

DEFAULT_STATE_BOUND = 1e3


class OcpProblem:
    """Bounded NLP: maximize ``objective`` subject to ``defects == 0``.

    Anything exposing ``n_vars``, ``bounds()``, ``objective(w)``,
    ``constraints(w)`` and ``constraint_vjp(w, v)`` can be handed to the solver.
    """

    def __init__(
        self,
        sym: SymbolicModel,
        spec: Formula,
        dt: float,
        steps: int,
        x0,
        u_min,
        u_max,
        x_min=None,
        x_max=None,
        k: float = 2.0,
    ):
        self.sym = sym
        self.spec = spec
        self.dt = float(dt)
        self.T = int(steps)
        self.n = sym.dim
        self.m = sym.n_inputs
        self.x0 = np.asarray(x0, dtype=float).reshape(self.n)
        self.u_min = np.broadcast_to(np.asarray(u_min, float), (self.m,)).copy()
        self.u_max = np.broadcast_to(np.asarray(u_max, float), (self.m,)).copy()
        bound = DEFAULT_STATE_BOUND
        self.x_min = np.full(self.n, -bound) if x_min is None else np.broadcast_to(np.asarray(x_min, float), (self.n,)).copy()
        self.x_max = np.full(self.n, bound) if x_max is None else np.broadcast_to(np.asarray(x_max, float), (self.n,)).copy()
        self.k = float(k)
        self.times = np.arange(self.T + 1) * self.dt
        self.target = negate(spec)
        known = set(sym.output_names) | set(sym.input_names)
        missing = formula_channels(spec) - known
        if missing:
            raise KeyError(f"specification uses unknown channels {sorted(missing)}")
        self.monitor = SmoothRobustness(self.target, self.times, self.k)

    # -- layout ---------------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return self.T * self.n + (self.T + 1) * self.m

    @property
    def n_constraints(self) -> int:
        return self.T * self.n

    def split(self, w):
        """Full state trajectory (including ``x_0``) and inputs."""
        w = np.asarray(w, dtype=float)
        X = np.empty((self.T + 1, self.n))
        X[0] = self.x0
        X[1:] = w[: self.T * self.n].reshape(self.T, self.n)
        U = w[self.T * self.n:].reshape(self.T + 1, self.m)
        return X, U

    def pack(self, X, U) -> np.ndarray:
        X = np.asarray(X, float).reshape(self.T + 1, self.n)
        U = np.asarray(U, float).reshape(self.T + 1, self.m)
        return np.concatenate([X[1:].ravel(), U.ravel()])

    def bounds(self):
        lo = np.concatenate([np.tile(self.x_min, self.T), np.tile(self.u_min, self.T + 1)])
        hi = np.concatenate([np.tile(self.x_max, self.T), np.tile(self.u_max, self.T + 1)])
        return lo, hi

    def _split_grad(self, gX, gU):
        return np.concatenate([gX[1:].ravel(), gU.ravel()])

    # -- functions ------------------------------------------------------------

    def channels(self, X, U):
        Y = X @ self.sym.lifting.C.T
        env = {name: Y[:, i] for i, name in enumerate(self.sym.output_names)}
        env.update({name: U[:, j] for j, name in enumerate(self.sym.input_names)})
        return env

    def objective(self, w):
        """Smooth robustness of the negated spec and its gradient."""
        X, U = self.split(w)
        res = self.monitor(self.channels(X, U))
        C = self.sym.lifting.C
        gY = np.stack([res.gradient[name] for name in self.sym.output_names], axis=1)
        gU = np.stack([res.gradient[name] for name in self.sym.input_names], axis=1)
        return res.value, self._split_grad(gY @ C, gU)

    def constraints(self, w) -> np.ndarray:
        """Trapezoidal defects ``x_{k+1} - x_k - dt/2 (f_{k+1} + f_k)``, shape (T*n,)."""
        X, U = self.split(w)
        F = self.sym.vector_field(X, U)
        return (X[1:] - X[:-1] - 0.5 * self.dt * (F[1:] + F[:-1])).ravel()

    def constraint_vjp(self, w, v) -> np.ndarray:
        """``J_c(w)^T v`` for the defect Jacobian."""
        X, U = self.split(w)
        v = np.asarray(v, float).reshape(self.T, self.n)
        Jz, Ju = self.sym.jacobians(X, U)
        s = np.zeros((self.T + 1, self.n))
        s[1:] += v
        s[:-1] += v
        gX = np.zeros((self.T + 1, self.n))
        gX[1:] += v
        gX[:-1] -= v
        h = 0.5 * self.dt
        gX -= h * np.einsum("kij,ki->kj", Jz, s)
        gU = -h * np.einsum("kij,ki->kj", Ju, s)
        return self._split_grad(gX, gU)

    def residual(self, w) -> float:
        c = self.constraints(w)
        return float(np.max(np.abs(c))) if c.size else 0.0

    def preconditioner(self, w) -> Optional["DefectPreconditioner"]:
        """Inverse of the defect Jacobian with respect to the states at ``w``."""
        X, U = self.split(w)
        Jz, _ = self.sym.jacobians(X, U)
        if not np.all(np.isfinite(Jz)):
            return None
        return DefectPreconditioner.build(Jz, 0.5 * self.dt, self.T, self.n)


class DefectPreconditioner:
    """Block bidiagonal solves with ``D_k = I - h Jz_{k+1}`` and ``L_k = -(I + h Jz_k)``.

    Row ``k`` of the defect Jacobian holds ``D_k`` in column ``k+1`` and
    ``L_k`` in column ``k``; column 0 (``x_0``) is fixed and absent.
    """

    def __init__(self, Dinv, L, T, n):
        self.Dinv, self.L, self.T, self.n = Dinv, L, T, n
        self.idx = np.arange(T * n)

    @classmethod
    def build(cls, Jz, h, T, n):
        eye = np.eye(n)
        D = eye - h * Jz[1:]
        if np.any(np.linalg.cond(D) > 1e12):
            return None
        return cls(np.linalg.inv(D), -(eye + h * Jz[:-1]), T, n)

    def solve(self, v):
        v = v.reshape(self.T, self.n)
        x = np.empty_like(v)
        prev = np.zeros(self.n)
        for k in range(self.T):
            rhs = v[k] - (self.L[k] @ prev if k else 0.0)
            x[k] = prev = self.Dinv[k] @ rhs
        return x.ravel()

    def solve_t(self, g):
        g = g.reshape(self.T, self.n)
        y = np.empty_like(g)
        nxt = np.zeros(self.n)
        for k in range(self.T - 1, -1, -1):
            rhs = g[k] - (self.L[k + 1].T @ nxt if k + 1 < self.T else 0.0)
            y[k] = nxt = self.Dinv[k].T @ rhs
        return y.ravel()


def transcribe(
    sym: SymbolicModel,
    spec: Formula,
    dt: float,
    horizon: float,
    x0,
    u_bounds,
    x_bounds=None,
    k: float = 2.0,
) -> OcpProblem:
    if not dt > 0:
        raise ValueError("collocation step must be positive")
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a multiple of the collocation step {dt}")
    need = formula_horizon(spec)
    if need > steps * dt + 1e-9:
        raise HorizonError(f"specification horizon {need} exceeds the problem horizon {steps * dt}")
    u_min, u_max = u_bounds
    x_min, x_max = (None, None) if x_bounds is None else x_bounds
    return OcpProblem(sym, spec, dt, steps, x0, u_min, u_max, x_min, x_max, k)


def _trapezoid_step(sym: SymbolicModel, x, u0, u1, dt, tol=1e-13, max_iter=50):
    """Newton solve of the implicit trapezoid step from ``x`` under ``(u0, u1)``."""
    f0 = sym.vector_field(x[None], u0[None])[0]
    # explicit Heun predictor
    guess = x + dt * f0
    z = x + 0.5 * dt * (f0 + sym.vector_field(guess[None], u1[None])[0])
    eye = np.eye(x.size)
    for _ in range(max_iter):
        f1 = sym.vector_field(z[None], u1[None])[0]
        r = z - x - 0.5 * dt * (f0 + f1)
        if not np.all(np.isfinite(r)):
            break
        if np.max(np.abs(r)) <= tol * max(1.0, np.max(np.abs(z))):
            return z
        Jz, _ = sym.jacobians(z[None], u1[None])
        try:
            dz = np.linalg.solve(eye - 0.5 * dt * Jz[0], r)
        except np.linalg.LinAlgError:
            break
        z = z - dz
    f1 = sym.vector_field(z[None], u1[None])[0]
    r = z - x - 0.5 * dt * (f0 + f1)
    if np.all(np.isfinite(r)) and np.max(np.abs(r)) < 1e-10:
        return z
    return None


def trapezoid_rollout(sym: SymbolicModel, x0, U, dt) -> np.ndarray:
    """States satisfying every trapezoidal defect for inputs ``U`` (T+1, m)."""
    U = np.asarray(U, float)
    X = np.empty((U.shape[0], np.size(x0)))
    X[0] = x0
    with np.errstate(all="ignore"):
        for i in range(U.shape[0] - 1):
            z = _trapezoid_step(sym, X[i], U[i], U[i + 1], dt)
            if z is None or np.max(np.abs(z)) > DIVERGENCE_LIMIT:
                raise DivergenceError((i + 1) * dt)
            X[i + 1] = z
    return X


def warm_start(p: OcpProblem, u_init: InputSignal) -> np.ndarray:
    """Decision vector from a trapezoid-consistent rollout under ``u_init``."""
    U = np.clip(u_init.sample(p.times), p.u_min, p.u_max)
    X = trapezoid_rollout(p.sym, p.x0, U, p.dt)
    return p.pack(X, U)


def extract_input(w, p: OcpProblem, names: Optional[Sequence[str]] = None) -> InputSignal:
    """Zero-order hold of ``u_0 .. u_{T-1}`` on the collocation grid, clipped to bounds."""
    _, U = p.split(w)
    values = np.clip(U[: p.T], p.u_min, p.u_max)
    return InputSignal(p.times[: p.T], values, tuple(names or p.sym.input_names), p.T * p.dt)
