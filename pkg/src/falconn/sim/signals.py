"""Piecewise-constant input signals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

_TOL = 1e-9


@dataclass(frozen=True)
class InputSignal:
    """Zero-order-hold signal: ``values[i]`` holds on ``[breakpoints[i], breakpoints[i+1])``.

    ``values`` has shape ``(segments, channels)``; the last segment holds
    until ``horizon``.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    names: Tuple[str, ...]
    horizon: float

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))
        if bp.size == 0 or bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if bp[-1] > self.horizon + _TOL:
            raise ValueError("breakpoint beyond the horizon")
        if vals.shape != (bp.size, len(self.names)):
            raise ValueError(f"values shape {vals.shape} does not match {bp.size} segments x {len(self.names)} channels")

    @classmethod
    def constant(cls, value, names: Sequence[str], horizon: float) -> "InputSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.array([0.0]), value[None, :], tuple(names), float(horizon))

    @classmethod
    def from_samples(cls, times, values, names: Sequence[str], horizon: float) -> "InputSignal":
        """Hold each sample until the next time stamp."""
        return cls(np.asarray(times, float), np.asarray(values, float), tuple(names), float(horizon))

    def __call__(self, t):
        """Value(s) at time(s) ``t``; shape ``(channels,)`` or ``(len(t), channels)``."""
        idx = np.searchsorted(self.breakpoints, np.asarray(t, dtype=float) + _TOL, side="right") - 1
        idx = np.clip(idx, 0, self.breakpoints.size - 1)
        return self.values[idx]

    def sample(self, times) -> np.ndarray:
        return self(np.asarray(times, dtype=float))

    def within(self, lower, upper) -> bool:
        return bool(np.all(self.values >= np.asarray(lower) - 1e-12) and np.all(self.values <= np.asarray(upper) + 1e-12))


def uniform_grid(horizon: float, period: float) -> np.ndarray:
    """``0, period, ..., horizon`` built by integer multiples to avoid drift."""
    n = int(round(horizon / period))
    if abs(n * period - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a multiple of period {period}")
    return np.arange(n + 1) * period


def resample_input(u: InputSignal, period: float) -> InputSignal:
    """Same signal expressed with one segment per ``period``."""
    if not period > 0:
        raise ValueError("period must be positive")
    n = int(round(u.horizon / period))
    if n * period < u.horizon - 1e-9:
        n += 1
    bp = np.arange(max(n, 1)) * period
    return InputSignal(bp, u(bp), u.names, u.horizon)


def corners_random(lower, upper, names: Sequence[str], horizon: float, segment: float, rng) -> InputSignal:
    """Piecewise-constant signal that picks one of the two bounds per segment.

    The last segment is truncated at the horizon.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    n = max(1, int(np.ceil(horizon / segment - 1e-9)))
    pick = rng.integers(0, 2, size=(n, lower.size))
    values = np.where(pick == 1, upper, lower)
    return InputSignal(np.arange(n) * segment, values, tuple(names), float(horizon))
