"""Multilayer perceptron with tanh hidden layers and a hand-written VJP."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np


class Mlp:
    """Fully connected network ``x -> tanh(...) -> ... -> linear``.

    Parameters live in one flat vector ``theta`` so optimizers can treat the
    network as a plain function of a 1-D array. Layer ``i`` computes
    ``x @ W_i + b_i`` with ``W_i`` of shape ``(fan_in, fan_out)``.
    """

    def __init__(self, sizes: Sequence[int], theta: np.ndarray = None):
        self.sizes = tuple(int(s) for s in sizes)
        self.shapes = [(a, b) for a, b in zip(self.sizes[:-1], self.sizes[1:])]
        self.n_params = sum(a * b + b for a, b in self.shapes)
        self.theta = np.zeros(self.n_params) if theta is None else np.asarray(theta, dtype=float).copy()
        if self.theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {self.theta.size}")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator) -> "Mlp":
        """Weights uniform in +-1/sqrt(fan_in), biases zero."""
        net = cls(sizes)
        parts = []
        for a, b in net.shapes:
            bound = 1.0 / np.sqrt(a)
            parts.append(rng.uniform(-bound, bound, size=a * b))
            parts.append(np.zeros(b))
        net.theta = np.concatenate(parts)
        return net

    def layers(self, theta=None) -> List[Tuple[np.ndarray, np.ndarray]]:
        theta = self.theta if theta is None else theta
        out, pos = [], 0
        for a, b in self.shapes:
            W = theta[pos: pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, theta[pos: pos + b]))
            pos += b
        return out

    def forward(self, x, layers=None):
        """Return output and the per-layer cache needed by :meth:`vjp`."""
        layers = layers or self.layers()
        acts = [x]
        h = x
        for i, (W, b) in enumerate(layers):
            h = h @ W + b
            if i < len(layers) - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(np.asarray(x, dtype=float))[0]

    def vjp(self, acts, g, layers=None, grad_theta=None):
        """Pull ``g`` (shape of the output) back to the input.

        Parameter gradients are accumulated into ``grad_theta`` in place.
        """
        layers = layers or self.layers()
        views = self.layers(grad_theta) if grad_theta is not None else None
        nl = len(layers)
        for i in range(nl - 1, -1, -1):
            W, _ = layers[i]
            if i < nl - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            if views is not None:
                gW, gb = views[i]
                gW += acts[i].T @ g
                gb += g.sum(axis=0)
            g = g @ W.T
        return g
