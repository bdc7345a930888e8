"""System-under-test abstraction and the built-in benchmark plants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .integrate import integrate_rk4
from .signals import InputSignal, uniform_grid
from .trace import Trace


class InputBoundError(ValueError):
    pass


@dataclass(frozen=True)
class SutSpec:
    """A black-box plant queried only through :func:`run_experiment`.

    ``dynamics(x, u, t)`` returns the state derivative and ``output(states)``
    maps an ``(N, n)`` state array to ``(N, outputs)``.
    """

    name: str
    n: int
    input_names: Tuple[str, ...]
    u_min: np.ndarray
    u_max: np.ndarray
    output_names: Tuple[str, ...]
    x0: np.ndarray
    dynamics: Callable = field(repr=False)
    output: Callable = field(repr=False)
    period: float = 0.01
    horizon: float = 10.0
    substeps: int = 1
    constants: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        lo = np.asarray(self.u_min, dtype=float).reshape(-1)
        hi = np.asarray(self.u_max, dtype=float).reshape(-1)
        if lo.size != len(self.input_names) or hi.size != len(self.input_names):
            raise ValueError("one bound per input channel required")
        if np.any(lo > hi):
            raise ValueError("u_min must not exceed u_max")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "output_names", tuple(self.output_names))


def run_experiment(sut: SutSpec, u: InputSignal, horizon: Optional[float] = None) -> Trace:
    """Simulate the plant under ``u`` and sample it every ``sut.period`` seconds."""
    horizon = u.horizon if horizon is None else horizon
    if tuple(u.names) != sut.input_names:
        raise ValueError(f"input channels {u.names} do not match plant inputs {sut.input_names}")
    if not u.within(sut.u_min, sut.u_max):
        raise InputBoundError(
            f"input outside bounds [{sut.u_min.tolist()}, {sut.u_max.tolist()}]"
        )
    grid = uniform_grid(horizon, sut.period)
    states = integrate_rk4(sut.dynamics, sut.x0, u, grid, substeps=sut.substeps)
    ys = np.asarray(sut.output(states), dtype=float).reshape(grid.size, -1)
    us = u.sample(grid)
    return Trace(
        sut.x0.copy(),
        grid,
        {n: us[:, j].copy() for j, n in enumerate(sut.input_names)},
        {n: ys[:, j].copy() for j, n in enumerate(sut.output_names)},
        plant=sut.name,
        period=sut.period,
    )


# ---------------------------------------------------------------------------
# built-in plants
# ---------------------------------------------------------------------------

# Magnet pushed by a coil whose drive v comes from a saturated PD loop on the
# position error. The coil can only push (v >= 0), so descent is gravity-bound
# and reference steps upward overshoot.
MAGLEV_CONSTANTS = dict(c=1.0, g=2.0, alpha=1.0, beta=1.0, kp=95.0, kd=9.0, v_max=8.0)


def maglev_analog(horizon: float = 40.0, period: float = 0.01, **overrides) -> SutSpec:
    k = {**MAGLEV_CONSTANTS, **overrides}

    def dynamics(x, u, t):
        pos, vel = x
        v = min(max(k["kp"] * (u[0] - pos) - k["kd"] * vel, 0.0), k["v_max"])
        acc = -k["c"] * vel - k["g"] + k["alpha"] * v * v / (k["beta"] + pos) ** 2
        return np.array([vel, acc])

    return SutSpec(
        "MagLevAnalog", 2, ("Ref",), [1.0], [3.0], ("Pos",), [2.0, 0.0],
        dynamics, lambda s: s[:, :1], period=period, horizon=horizon, constants=k,
    )


LINEAR_CONSTANTS = dict(omega=2.0, zeta=0.2)


def linear_second_order(horizon: float = 10.0, period: float = 0.01, **overrides) -> SutSpec:
    k = {**LINEAR_CONSTANTS, **overrides}
    w, z = k["omega"], k["zeta"]

    def dynamics(x, u, t):
        return np.array([x[1], -2.0 * z * w * x[1] - w * w * x[0] + w * w * u[0]])

    return SutSpec(
        "LinearSecondOrder", 2, ("Ref",), [-1.0], [1.0], ("Pos",), [0.0, 0.0],
        dynamics, lambda s: s[:, :1], period=period, horizon=horizon, constants=k,
    )


FIRST_ORDER_CONSTANTS = dict(a=-1.0, b=1.0)


def first_order(horizon: float = 10.0, period: float = 0.01, **overrides) -> SutSpec:
    """Scalar ``x' = a x + b u``, mostly for surrogate and distillation checks."""
    k = {**FIRST_ORDER_CONSTANTS, **overrides}

    def dynamics(x, u, t):
        return np.array([k["a"] * x[0] + k["b"] * u[0]])

    return SutSpec(
        "FirstOrder", 1, ("u",), [-1.0], [1.0], ("x",), [0.0],
        dynamics, lambda s: s[:, :1], period=period, horizon=horizon, constants=k,
    )


VDP_CONSTANTS = dict(mu=1.0)


def van_der_pol_forced(horizon: float = 10.0, period: float = 0.01, **overrides) -> SutSpec:
    k = {**VDP_CONSTANTS, **overrides}

    def dynamics(x, u, t):
        return np.array([x[1], k["mu"] * (1.0 - x[0] ** 2) * x[1] - x[0] + u[0]])

    return SutSpec(
        "VanDerPolForced", 2, ("Ref",), [-1.0], [1.0], ("Pos",), [0.5, 0.0],
        dynamics, lambda s: s[:, :1], period=period, horizon=horizon, constants=k,
    )


PLANTS = {
    "MagLevAnalog": maglev_analog,
    "LinearSecondOrder": linear_second_order,
    "VanDerPolForced": van_der_pol_forced,
    "FirstOrder": first_order,
}


def get_plant(name: str, **kwargs) -> SutSpec:
    try:
        factory = PLANTS[name]
    except KeyError:
        raise KeyError(f"unknown plant {name!r}; choose from {sorted(PLANTS)}") from None
    return factory(**kwargs)
