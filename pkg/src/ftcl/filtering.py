"""First-order regressor filter and normalization.

The filter avoids the unmeasured ``x(k+1)`` by propagating

    d(k+1) = c d(k) + z(x(k), u(k)),   d(0) = 0
    l(k+1) = c l(k) + c x(k),          l(0) = 0

so that ``x(k) = Theta*^T d(k) - l(k) + c^k x0 + eps_f(k)``.  Every signal is
then divided by ``n_s = 1 + d'd + l'l``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FilterConfig:
    c: float = 0.5

    def __post_init__(self):
        if not -1.0 < self.c < 1.0:
            raise ValueError(f"filter pole must satisfy -1 < c < 1, got {self.c}")


@dataclass(frozen=True)
class FilterState:
    k: int
    d: np.ndarray
    l: np.ndarray
    x0: np.ndarray
    ck_x0: np.ndarray

    @classmethod
    def initial(cls, x0, regressor_dim: int) -> "FilterState":
        x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
        return cls(
            k=0,
            d=np.zeros(regressor_dim),
            l=np.zeros_like(x0),
            x0=x0,
            ck_x0=x0.copy(),
        )


@dataclass(frozen=True)
class NormalizedSample:
    d_bar: np.ndarray
    l_bar: np.ndarray
    x_bar: np.ndarray
    n_s: float
    # c^k x0 / n_s at the same step; the current value is reused for stored samples
    ck_x0_bar: np.ndarray


def filter_step(state: FilterState, cfg: FilterConfig, z, x) -> FilterState:
    z = np.asarray(z, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if z.shape != state.d.shape or x.shape != state.l.shape:
        raise ValueError(
            f"dimension mismatch: z {z.shape} vs d {state.d.shape}, x {x.shape} vs l {state.l.shape}"
        )
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(x))):
        raise FloatingPointError(f"non-finite filter input at k={state.k}")
    c = cfg.c
    return FilterState(
        k=state.k + 1,
        d=c * state.d + z,
        l=c * state.l + c * x,
        x0=state.x0,
        ck_x0=c * state.ck_x0,
    )


def normalize(state: FilterState, x) -> NormalizedSample:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n_s = 1.0 + float(state.d @ state.d) + float(state.l @ state.l)
    return NormalizedSample(
        d_bar=state.d / n_s,
        l_bar=state.l / n_s,
        x_bar=x / n_s,
        n_s=n_s,
        ck_x0_bar=state.ck_x0 / n_s,
    )


def closed_form_d(zs, c: float) -> np.ndarray:
    """``d(K) = sum_{h<K} c^(K-h-1) z(h)`` evaluated directly."""
    zs = np.asarray(zs, dtype=float)
    K = zs.shape[0]
    w = float(c) ** np.arange(K - 1, -1, -1) if K else np.zeros(0)
    return w @ zs if K else np.zeros(zs.shape[1:])


def closed_form_l(xs, c: float) -> np.ndarray:
    """``l(K) = sum_{h<K} c^(K-h) x(h)`` evaluated directly."""
    xs = np.asarray(xs, dtype=float)
    K = xs.shape[0]
    w = float(c) ** np.arange(K, 0, -1)
    return w @ xs if K else np.zeros(xs.shape[1:])
