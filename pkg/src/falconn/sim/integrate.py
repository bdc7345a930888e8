"""Classical fixed-step Runge-Kutta integration."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, time: float, message: str = ""):
        self.time = time
        super().__init__(message or f"state diverged at t={time:g}")


def integrate_rk4(
    dynamics: Callable,
    x0,
    u: Optional[Callable],
    t_grid,
    substeps: int = 1,
    limit: float = DIVERGENCE_LIMIT,
) -> np.ndarray:
    """Integrate ``dx/dt = dynamics(x, u, t)`` on ``t_grid``.

    The input is held at its value at the start of each grid step. Returns
    the states at every grid point, shape ``(len(t_grid), n)``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    x = np.array(x0, dtype=float).reshape(-1)
    out = np.empty((t_grid.size, x.size))
    out[0] = x
    for i in range(t_grid.size - 1):
        t0 = t_grid[i]
        h = (t_grid[i + 1] - t0) / substeps
        ui = None if u is None else u(t0)
        for j in range(substeps):
            t = t0 + j * h
            k1 = dynamics(x, ui, t)
            k2 = dynamics(x + 0.5 * h * k1, ui, t + 0.5 * h)
            k3 = dynamics(x + 0.5 * h * k2, ui, t + 0.5 * h)
            k4 = dynamics(x + h * k3, ui, t + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > limit:
            raise DivergenceError(t_grid[i + 1])
        out[i + 1] = x
    return out
