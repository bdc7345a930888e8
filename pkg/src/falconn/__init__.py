"""Falsification of input-driven dynamical systems against STL specifications
with neural-ODE surrogates, symbolic distillation and optimal control."""

__version__ = "0.1.0"
