"""Full-batch training: Adam epochs followed by L-BFGS refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..sim.integrate import DivergenceError
from ..sim.trace import Trace
from .model import ADAM_CONSTANTS, SurrogateModel, loss_and_grad, prepare

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-2
    adam_epochs: int = 300
    lbfgs_iters: int = 20
    lbfgs_memory: int = 10
    hidden: Tuple[int, ...] = (16, 8)
    orders: int = 2
    step: Optional[float] = None  # solve step; None means 10 sampling periods
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0 or self.adam_epochs < 0 or self.lbfgs_iters < 0:
            raise ValueError("learning rate must be positive and iteration counts non-negative")


class _Tracker:
    """Keeps the lowest-loss parameters seen during a run."""

    def __init__(self):
        self.best_loss = np.inf
        self.best_theta = None
        self.history = []
        self.diverged = 0

    def record(self, loss, theta):
        self.history.append(loss)
        if np.isfinite(loss) and loss < self.best_loss:
            self.best_loss = loss
            self.best_theta = theta.copy()


def _evaluate(model, batches, theta, tracker):
    try:
        loss, grad = loss_and_grad(model, batches, theta)
    except (DivergenceError, FloatingPointError):
        tracker.diverged += 1
        tracker.history.append(np.inf)
        return np.inf, None
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        tracker.diverged += 1
        tracker.history.append(np.inf)
        return np.inf, None
    tracker.record(loss, theta)
    return loss, grad


def train(
    dataset: Sequence[Trace],
    config: TrainConfig = TrainConfig(),
    f_k=None,
    input_names=None,
    output_names=None,
    init: Optional[SurrogateModel] = None,
) -> SurrogateModel:
    """Fit a fresh surrogate to ``dataset`` and return the best parameters seen."""
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    first = dataset[0]
    model = init or SurrogateModel.create(
        input_names or list(first.inputs),
        output_names or list(first.outputs),
        orders=config.orders,
        hidden=config.hidden,
        f_k=f_k,
        seed=config.seed,
    )
    batches = prepare(model, dataset, config.step)
    tracker = _Tracker()
    b1, b2, eps = ADAM_CONSTANTS
    theta = model.theta.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    lr = config.lr
    t = 0
    for epoch in range(config.adam_epochs):
        loss, grad = _evaluate(model, batches, theta, tracker)
        if grad is None:
            if tracker.best_theta is None:
                raise TrainingError("initial parameters already diverge")
            # restart from the best point with a smaller step
            theta = tracker.best_theta.copy()
            m[:] = 0.0
            v[:] = 0.0
            t = 0
            lr *= 0.5
            continue
        t += 1
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
    if config.adam_epochs:
        _evaluate(model, batches, theta, tracker)

    if config.lbfgs_iters and tracker.best_theta is not None:
        def fun(th):
            loss, grad = _evaluate(model, batches, th, tracker)
            if grad is None:
                return 1e30, np.zeros_like(th)
            return loss, grad

        minimize(
            fun,
            tracker.best_theta.copy(),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": config.lbfgs_iters, "maxcor": config.lbfgs_memory, "ftol": 0.0, "gtol": 1e-12},
        )
    elif not config.adam_epochs:
        _evaluate(model, batches, theta, tracker)

    if tracker.best_theta is None:
        raise TrainingError(f"all {tracker.diverged} evaluations diverged")
    out = model.with_theta(tracker.best_theta)
    out.meta.update({
        "final_loss": tracker.best_loss,
        "initial_loss": tracker.history[0] if tracker.history else None,
        "diverged_evaluations": tracker.diverged,
        "evaluations": len(tracker.history),
    })
    log.debug("trained surrogate: loss %.3e after %d evaluations", tracker.best_loss, len(tracker.history))
    return out
