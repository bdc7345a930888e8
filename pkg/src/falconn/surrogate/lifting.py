"""Companion-form state lifting for higher-order outputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class StateLifting:
    """Lifted state ``z`` stacks each output and its time derivatives.

    ``z' = A z + B f`` where ``f`` drives only the highest-derivative row of
    each block, and ``y = C z`` reads the zeroth-derivative rows.
    """

    orders: Tuple[int, ...]
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def dim(self) -> int:
        return int(sum(self.orders))

    @property
    def n_outputs(self) -> int:
        return len(self.orders)

    @property
    def driven_rows(self) -> np.ndarray:
        return np.cumsum(self.orders) - 1

    @property
    def output_rows(self) -> np.ndarray:
        return np.cumsum(self.orders) - np.asarray(self.orders)


def build_lifting(output_dims: int, orders: Sequence[int]) -> StateLifting:
    orders = tuple(int(o) for o in np.broadcast_to(np.asarray(orders), (output_dims,)))
    if any(o < 1 for o in orders):
        raise ValueError("lifting orders must be >= 1")
    n = sum(orders)
    A = np.zeros((n, n))
    B = np.zeros((n, output_dims))
    C = np.zeros((output_dims, n))
    start = 0
    for i, o in enumerate(orders):
        for r in range(o - 1):
            A[start + r, start + r + 1] = 1.0
        B[start + o - 1, i] = 1.0
        C[i, start] = 1.0
        start += o
    return StateLifting(orders, A, B, C)


def initial_lifted_state(lifting: StateLifting, outputs: np.ndarray, period: float) -> np.ndarray:
    """Lifted initial state from the first output samples.

    Derivatives are estimated by repeated second-order finite differences
    (central in the interior, one-sided at the first sample).
    """
    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim == 1:
        outputs = outputs[:, None]
    z0 = np.zeros(lifting.dim)
    start = 0
    for i, o in enumerate(lifting.orders):
        series = outputs[: max(3 * o, 3), i]
        for r in range(o):
            z0[start + r] = series[0]
            if r + 1 < o:
                series = np.gradient(series, period, edge_order=2)
        start += o
    return z0
