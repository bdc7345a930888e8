"""Symbolic surrogate: sampling derivatives, the model type, and candidate selection."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..sim.integrate import DIVERGENCE_LIMIT, DivergenceError
from ..sim.trace import Trace
from ..surrogate.lifting import StateLifting, build_lifting, initial_lifted_state
from ..surrogate.model import SurrogateModel, _rk4_rollout, _pairwise_sum, prepare
from . import expr as ex
from .gp import SrConfig, evolve

log = logging.getLogger(__name__)

MAX_COMBINATIONS = 512


class DistillationError(RuntimeError):
    """Every candidate was filtered out."""


@dataclass
class DerivativeSamples:
    Z: np.ndarray  # (N, n) lifted states
    U: np.ndarray  # (N, m) inputs
    target: np.ndarray  # (N, n) surrogate z'

    def __len__(self):
        return self.Z.shape[0]

    def driven_targets(self, lifting: StateLifting) -> np.ndarray:
        return self.target[:, lifting.driven_rows]


def _visited(model: SurrogateModel, dataset, step):
    Zs, Us = [], []
    for b in prepare(model, dataset, step):
        Z, _ = _rk4_rollout(model, model.theta, b.Z0, b.U, b.h)
        # the input held over the last interval is reused at the final point
        U = np.concatenate([b.U, b.U[:, -1:]], axis=1)
        Zs.append(Z.reshape(-1, Z.shape[-1]))
        Us.append(U.reshape(-1, U.shape[-1]))
    return np.concatenate(Zs), np.concatenate(Us)


def sample_derivatives(
    model: SurrogateModel,
    dataset: Sequence[Trace],
    n_extra: Optional[int] = None,
    perturb_scale: float = 0.25,
    seed: int = 0,
    step: Optional[float] = None,
) -> DerivativeSamples:
    """Evaluate the surrogate field along its own rollouts of the dataset inputs.

    ``n_extra`` points (default twice the trajectory points) are drawn around
    randomly chosen visited points with Gaussian state offsets of
    ``perturb_scale`` times the per-dimension standard deviation of the visited
    states. Inputs keep the value of the base point, so no sample leaves the
    input range the surrogate was trained on.
    """
    Z, U = _visited(model, dataset, step)
    n_extra = 2 * len(Z) if n_extra is None else int(n_extra)
    if n_extra > 0:
        rng = np.random.default_rng(seed)
        base = rng.integers(len(Z), size=n_extra)
        Ze = Z[base] + rng.normal(size=(n_extra, Z.shape[1])) * (perturb_scale * Z.std(axis=0))
        Z = np.concatenate([Z, Ze])
        U = np.concatenate([U, U[base]])
    return DerivativeSamples(Z, U, model.vector_field(Z, U))


@dataclass
class SymbolicModel:
    """One expression per driven row; ``z' = A z + B g(z, u)``."""

    exprs: Tuple[tuple, ...]
    lifting: StateLifting
    input_names: Tuple[str, ...]
    output_names: Tuple[str, ...]
    derivative_mse: Tuple[float, ...] = ()
    trajectory_mse: float = float("nan")
    _jac: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.exprs = tuple(self.exprs)
        if len(self.exprs) != self.lifting.n_outputs:
            raise ValueError("need one expression per driven row")

    @property
    def dim(self) -> int:
        return self.lifting.dim

    @property
    def n_inputs(self) -> int:
        return len(self.input_names)

    @property
    def complexities(self) -> Tuple[int, ...]:
        return tuple(ex.complexity(e) for e in self.exprs)

    def depends_on_input(self) -> bool:
        return any(v[0] == "u" for e in self.exprs for v in ex.variables(e))

    def driven(self, Z, U) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, float))
        U = np.atleast_2d(np.asarray(U, float))
        return np.stack([ex.evaluate(e, Z, U) for e in self.exprs], axis=1)

    def vector_field(self, Z, U) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, float))
        return Z @ self.lifting.A.T + self.driven(Z, U) @ self.lifting.B.T

    def jacobian_trees(self):
        if self._jac is None:
            self._jac = tuple(ex.expr_jacobian(e, self.dim, self.n_inputs) for e in self.exprs)
        return self._jac

    def jacobians(self, Z, U):
        """Field Jacobians ``(dF/dz, dF/du)`` with shapes (N, n, n) and (N, n, m)."""
        Z = np.atleast_2d(np.asarray(Z, float))
        U = np.atleast_2d(np.asarray(U, float))
        N = Z.shape[0]
        Jz = np.broadcast_to(self.lifting.A, (N, self.dim, self.dim)).copy()
        Ju = np.zeros((N, self.dim, self.n_inputs))
        for row, (dz, du) in zip(self.lifting.driven_rows, self.jacobian_trees()):
            for i, d in enumerate(dz):
                if d != ex.ZERO:
                    Jz[:, row, i] += ex.evaluate(d, Z, U)
            for j, d in enumerate(du):
                if d != ex.ZERO:
                    Ju[:, row, j] = ex.evaluate(d, Z, U)
        return Jz, Ju

    def initial_state(self, trace: Trace) -> np.ndarray:
        period = trace.period or float(trace.times[1] - trace.times[0])
        return initial_lifted_state(self.lifting, trace.output_array(list(self.output_names)), period)

    def rollout(self, Z0, U, h) -> np.ndarray:
        """Batched RK4 with held inputs; ``U`` is (batch, steps, m)."""
        Z0 = np.atleast_2d(np.asarray(Z0, float))
        steps = U.shape[1]
        out = np.empty((Z0.shape[0], steps + 1, Z0.shape[1]))
        out[:, 0] = z = Z0
        with np.errstate(all="ignore"):
            for i in range(steps):
                u = U[:, i]
                k1 = self.vector_field(z, u)
                k2 = self.vector_field(z + 0.5 * h * k1, u)
                k3 = self.vector_field(z + 0.5 * h * k2, u)
                k4 = self.vector_field(z + h * k3, u)
                z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(z)) or np.abs(z).max() > DIVERGENCE_LIMIT:
                    raise DivergenceError((i + 1) * h)
                out[:, i + 1] = z
        return out

    def trajectory_loss(self, dataset: Sequence[Trace], step: Optional[float] = None) -> float:
        """Sum over traces of the output MSE of a rollout; raises on divergence."""
        losses = []
        for b in prepare(self, dataset, step):
            Z = self.rollout(b.Z0, b.U, b.h)
            r = Z @ self.lifting.C.T - b.Y
            losses.extend((r ** 2).reshape(r.shape[0], -1).mean(axis=1).tolist())
        return float(_pairwise_sum(losses))

    def to_dict(self) -> dict:
        return {
            "exprs": [ex.to_string(e) for e in self.exprs],
            "orders": list(self.lifting.orders),
            "inputs": list(self.input_names),
            "outputs": list(self.output_names),
            "complexity": list(self.complexities),
            "derivative_mse": list(self.derivative_mse),
            "trajectory_mse": self.trajectory_mse,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SymbolicModel":
        lifting = build_lifting(len(d["outputs"]), d["orders"])
        return cls(
            tuple(ex.parse_expr(s) for s in d["exprs"]), lifting, tuple(d["inputs"]), tuple(d["outputs"]),
            tuple(d.get("derivative_mse", ())), d.get("trajectory_mse", float("nan")),
        )


def _driven_by_input(model: SymbolicModel, dataset, step) -> bool:
    if not model.depends_on_input():
        return False
    # a symbolic u dependence can still cancel numerically; check on the data
    Zs, Us = [], []
    for b in prepare(model, dataset, step):
        Zs.append(np.repeat(b.Z0, b.U.shape[1], axis=0))
        Us.append(b.U.reshape(-1, b.U.shape[-1]))
    Z, U = np.concatenate(Zs), np.concatenate(Us)
    for dz, du in model.jacobian_trees():
        for d in du:
            if d != ex.ZERO and np.any(np.abs(ex.evaluate(d, Z, U)) > 1e-12):
                return True
    return False


def score_candidates(fronts, dataset, lifting, input_names, output_names, step=None):
    """Trajectory loss of every filtered combination: list of (loss, model)."""
    fronts = [list(f) for f in fronts]
    if not fronts or any(not f for f in fronts):
        raise DistillationError("empty front")
    combos = list(itertools.islice(itertools.product(*fronts), MAX_COMBINATIONS))
    scored = []
    for combo in combos:
        m = SymbolicModel(
            tuple(c.expr for c in combo), lifting, tuple(input_names), tuple(output_names),
            tuple(c.mse for c in combo),
        )
        if not _driven_by_input(m, dataset, step):
            log.debug("rejected (no input dependence): %s", [str(c) for c in combo])
            continue
        try:
            loss = m.trajectory_loss(dataset, step)
        except DivergenceError:
            log.debug("rejected (unstable): %s", [str(c) for c in combo])
            continue
        if not np.isfinite(loss):
            continue
        m.trajectory_mse = loss
        scored.append((loss, m))
    return scored


def select_candidate(fronts, dataset, lifting, input_names, output_names, step=None) -> SymbolicModel:
    """Filter the fronts and return the minimum summed trajectory-MSE model.

    Ties go to the lower total complexity, then to front order.
    """
    scored = score_candidates(fronts, dataset, lifting, input_names, output_names, step)
    if not scored:
        raise DistillationError("all candidates were filtered out (no input dependence or unstable)")
    best = min(range(len(scored)), key=lambda i: (scored[i][0], sum(scored[i][1].complexities), i))
    return scored[best][1]


def distill(
    model: SurrogateModel,
    dataset: Sequence[Trace],
    config: SrConfig = SrConfig(),
    n_extra: Optional[int] = None,
    perturb_scale: float = 0.25,
    step: Optional[float] = None,
):
    """Sample, evolve and select. Returns ``(SymbolicModel, fronts)``."""
    samples = sample_derivatives(model, dataset, n_extra, perturb_scale, seed=config.seed, step=step)
    fronts = evolve(samples.Z, samples.U, samples.driven_targets(model.lifting), config)
    sym = select_candidate(fronts, dataset, model.lifting, model.input_names, model.output_names, step)
    return sym, fronts
