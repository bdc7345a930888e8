"""Hybrid neural ODE surrogate: lifted companion dynamics plus an MLP.

The lifted state evolves as ``z' = A z + B (f_k(z, u) + f_theta(z, u))``.
Losses are computed on a fixed-step RK4 unroll, and their gradients by an
exact reverse sweep through that unroll.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..sim.integrate import DIVERGENCE_LIMIT, DivergenceError
from ..sim.signals import InputSignal
from ..sim.trace import Trace
from .lifting import StateLifting, build_lifting, initial_lifted_state
from .mlp import Mlp

CHECKPOINT_VERSION = 1
ADAM_CONSTANTS = (0.9, 0.999, 1e-8)


# ---------------------------------------------------------------------------
# known dynamics
# ---------------------------------------------------------------------------


class LinearKnownDynamics:
    """Affine prior ``f_k(z, u) = z @ Kz.T + u @ Ku.T + c`` on the driven rows."""

    name = "linear"

    def __init__(self, Kz, Ku, c=None):
        self.Kz = np.atleast_2d(np.asarray(Kz, dtype=float))
        self.Ku = np.atleast_2d(np.asarray(Ku, dtype=float))
        self.c = np.zeros(self.Kz.shape[0]) if c is None else np.asarray(c, dtype=float)

    def __call__(self, Z, U):
        return Z @ self.Kz.T + U @ self.Ku.T + self.c

    def vjp_z(self, Z, U, g):
        return g @ self.Kz

    def to_dict(self):
        return {"name": self.name, "Kz": self.Kz.tolist(), "Ku": self.Ku.tolist(), "c": self.c.tolist()}


KNOWN_DYNAMICS = {"linear": lambda d: LinearKnownDynamics(d["Kz"], d["Ku"], d.get("c"))}


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class SurrogateModel:
    lifting: StateLifting
    mlp: Mlp
    input_names: Tuple[str, ...]
    output_names: Tuple[str, ...]
    f_k: Optional[object] = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, input_names, output_names, orders=2, hidden=(16, 8), f_k=None, seed=0, zero=False):
        lifting = build_lifting(len(output_names), orders)
        sizes = (lifting.dim + len(input_names),) + tuple(hidden) + (lifting.n_outputs,)
        mlp = Mlp(sizes) if zero else Mlp.init(sizes, np.random.default_rng(seed))
        return cls(lifting, mlp, tuple(input_names), tuple(output_names), f_k, seed)

    @property
    def theta(self) -> np.ndarray:
        return self.mlp.theta

    def with_theta(self, theta) -> "SurrogateModel":
        return SurrogateModel(
            self.lifting, Mlp(self.mlp.sizes, theta), self.input_names, self.output_names,
            self.f_k, self.seed, dict(self.meta),
        )

    def driven(self, Z, U, layers=None):
        """Driven-row derivative ``f_k + f_theta`` for a batch of (z, u)."""
        x = np.concatenate([Z, U], axis=1)
        out, acts = self.mlp.forward(x, layers)
        if self.f_k is not None:
            out = out + self.f_k(Z, U)
        return out, acts

    def vector_field(self, Z, U) -> np.ndarray:
        """Full lifted derivative ``A z + B (f_k + f_theta)``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        d, _ = self.driven(Z, U)
        return Z @ self.lifting.A.T + d @ self.lifting.B.T

    def initial_state(self, trace: Trace) -> np.ndarray:
        period = trace.period or float(trace.times[1] - trace.times[0])
        return initial_lifted_state(self.lifting, trace.output_array(list(self.output_names)), period)


# ---------------------------------------------------------------------------
# batched unroll
# ---------------------------------------------------------------------------


def _rk4_rollout(model: SurrogateModel, theta, Z0, U, h, keep=False):
    """Unroll RK4 for a batch. ``U`` has shape (batch, steps, m)."""
    layers = model.mlp.layers(theta)
    A, B = model.lifting.A, model.lifting.B
    steps = U.shape[1]
    Z = np.empty((Z0.shape[0], steps + 1, Z0.shape[1]))
    Z[:, 0] = Z0
    tape = [] if keep else None
    z = Z0
    for i in range(steps):
        u = U[:, i]
        stages = []
        ks = []
        s = z
        for c in (0.5, 0.5, 1.0, None):
            d, acts = model.driven(s, u, layers)
            k = s @ A.T + d @ B.T
            ks.append(k)
            if keep:
                stages.append((s, acts))
            if c is not None:
                s = z + (c * h) * k
        z = z + (h / 6.0) * (ks[0] + 2.0 * ks[1] + 2.0 * ks[2] + ks[3])
        if not np.all(np.isfinite(z)) or np.abs(z).max() > DIVERGENCE_LIMIT:
            raise DivergenceError((i + 1) * h)
        Z[:, i + 1] = z
        if keep:
            tape.append(stages)
    return Z, tape


def _field_vjp(model, layers, s, u, acts, g, grad_theta):
    """Pull ``g`` back through ``A s + B (f_k + f_theta)(s, u)``; returns d/ds."""
    A, B = model.lifting.A, model.lifting.B
    gd = g @ B
    gx = model.mlp.vjp(acts, gd, layers, grad_theta)
    gs = g @ A + gx[:, : s.shape[1]]
    if model.f_k is not None:
        gs = gs + model.f_k.vjp_z(s, u, gd)
    return gs


def _rk4_backward(model, theta, tape, U, h, adj_Z):
    """Reverse sweep; ``adj_Z`` holds dL/dZ at every grid point (batch, steps+1, n)."""
    layers = model.mlp.layers(theta)
    grad = np.zeros_like(theta)
    a = adj_Z[:, -1].copy()
    for i in range(len(tape) - 1, -1, -1):
        u = U[:, i]
        (s1, c1), (s2, c2), (s3, c3), (s4, c4) = tape[i]
        g4 = _field_vjp(model, layers, s4, u, c4, a * (h / 6.0), grad)
        g3 = _field_vjp(model, layers, s3, u, c3, a * (h / 3.0) + h * g4, grad)
        g2 = _field_vjp(model, layers, s2, u, c2, a * (h / 3.0) + 0.5 * h * g3, grad)
        g1 = _field_vjp(model, layers, s1, u, c1, a * (h / 6.0) + 0.5 * h * g2, grad)
        a = a + g4 + g3 + g2 + g1 + adj_Z[:, i]
    return grad


# ---------------------------------------------------------------------------
# dataset preparation
# ---------------------------------------------------------------------------


@dataclass
class _Batch:
    Z0: np.ndarray  # (B, n)
    U: np.ndarray  # (B, steps, m)
    Y: np.ndarray  # (B, steps+1, p)
    h: float


def _trace_period(tr: Trace) -> float:
    return tr.period or float(tr.times[1] - tr.times[0])


def prepare(model: SurrogateModel, dataset: Sequence[Trace], step: Optional[float] = None) -> List[_Batch]:
    """Subsample traces onto the solve grid and group equal-length ones."""
    groups = {}
    for tr in dataset:
        period = _trace_period(tr)
        h = period * 10 if step is None else step
        stride = int(round(h / period))
        if stride < 1 or abs(stride * period - h) > 1e-9:
            raise ValueError(f"solve step {h} is not a multiple of the sampling period {period}")
        idx = np.arange(0, len(tr), stride)
        z0 = model.initial_state(tr)
        U = tr.input_array(list(model.input_names))[idx[:-1]]
        Y = tr.output_array(list(model.output_names))[idx]
        groups.setdefault((idx.size, h), []).append((z0, U, Y))
    out = []
    for (_, h), items in groups.items():
        out.append(_Batch(
            np.stack([z for z, _, _ in items]),
            np.stack([u for _, u, _ in items]),
            np.stack([y for _, _, y in items]),
            h,
        ))
    return out


def _batch_loss(model, theta, batch: _Batch, want_grad: bool):
    Z, tape = _rk4_rollout(model, theta, batch.Z0, batch.U, batch.h, keep=want_grad)
    Yhat = Z @ model.lifting.C.T
    r = Yhat - batch.Y
    per_trace = (r ** 2).reshape(r.shape[0], -1).mean(axis=1)
    if not want_grad:
        return per_trace, None
    npts = r.shape[1] * r.shape[2]
    adj_Z = (2.0 / npts) * r @ model.lifting.C
    return per_trace, _rk4_backward(model, theta, tape, batch.U, batch.h, adj_Z)


def _pairwise_sum(values):
    values = list(values)
    if not values:
        return 0.0
    while len(values) > 1:
        nxt = [values[i] + values[i + 1] for i in range(0, len(values) - 1, 2)]
        if len(values) % 2:
            nxt.append(values[-1])
        values = nxt
    return values[0]


def loss_and_grad(model, batches, theta=None, want_grad=True):
    theta = model.theta if theta is None else theta
    losses, grads = [], []
    for b in batches:
        per, g = _batch_loss(model, theta, b, want_grad)
        losses.extend(per.tolist())
        if want_grad:
            grads.append(g)
    loss = float(_pairwise_sum(losses))
    return (loss, _pairwise_sum(grads)) if want_grad else (loss, None)


def dataset_loss(model: SurrogateModel, dataset: Sequence[Trace], step: Optional[float] = None) -> float:
    """Sum over traces of the per-trace output MSE."""
    return loss_and_grad(model, prepare(model, dataset, step), want_grad=False)[0]


def loss_gradient(model: SurrogateModel, dataset: Sequence[Trace], step: Optional[float] = None) -> np.ndarray:
    return loss_and_grad(model, prepare(model, dataset, step))[1]


def simulate_surrogate(model: SurrogateModel, z0, u: InputSignal, t_grid, return_states=False):
    """Outputs ``C z`` on a uniform ``t_grid`` under zero-order-hold input ``u``."""
    t_grid = np.asarray(t_grid, dtype=float)
    h = float(t_grid[1] - t_grid[0])
    U = u.sample(t_grid[:-1])[None]
    Z, _ = _rk4_rollout(model, model.theta, np.asarray(z0, float)[None], U, h)
    Y = Z[0] @ model.lifting.C.T
    return (Y, Z[0]) if return_states else Y


def simulate_trace(model: SurrogateModel, trace: Trace, step: Optional[float] = None):
    """Surrogate rollout driven by a trace's input, on the solve grid."""
    (batch,) = prepare(model, [trace], step)
    Z, _ = _rk4_rollout(model, model.theta, batch.Z0, batch.U, batch.h)
    return Z[0], batch


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: SurrogateModel, path) -> Path:
    rec = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(model.mlp.sizes),
        "theta": [format(v, ".17g") for v in model.theta],
        "orders": list(model.lifting.orders),
        "inputs": list(model.input_names),
        "outputs": list(model.output_names),
        "f_k": None if model.f_k is None else model.f_k.to_dict(),
        "seed": model.seed,
        "adam": list(ADAM_CONSTANTS),
        "meta": model.meta,
    }
    path = Path(path)
    path.write_text(json.dumps(rec, indent=1))
    return path


def load_checkpoint(path) -> SurrogateModel:
    rec = json.loads(Path(path).read_text())
    if rec.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {rec.get('version')!r}")
    f_k = None
    if rec["f_k"] is not None:
        f_k = KNOWN_DYNAMICS[rec["f_k"]["name"]](rec["f_k"])
    lifting = build_lifting(len(rec["outputs"]), rec["orders"])
    mlp = Mlp(rec["layer_sizes"], np.array([float(v) for v in rec["theta"]]))
    return SurrogateModel(lifting, mlp, tuple(rec["inputs"]), tuple(rec["outputs"]), f_k, rec["seed"], rec.get("meta", {}))
