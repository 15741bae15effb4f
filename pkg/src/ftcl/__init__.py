"""Finite-time concurrent learning for discrete-time nonlinear system identification."""

__version__ = "0.1.0"
