"""True systems, basis sets and the linearly parameterized approximator.

A system is ``x(k+1) = f(x) + g(x) u`` with ``f: R^n -> R^n`` and
``g: R^n -> R^(n x m)``.  The approximator is ``Theta^T z(x, u)`` where the
regressor stacks the drift basis over the input-weighted input basis,
``z = [phi(x); chi(x) u]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    pass


def _as_vector(v, size: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1 or arr.shape[0] != size:
        raise DimensionError(f"{name} must have shape ({size},), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class DiscreteSystem:
    """Input-affine discrete-time system with known (benchmark) decomposition."""

    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def drift(self, x) -> np.ndarray:
        return np.asarray(self.f(x), dtype=float).reshape(self.n)

    def input_gain(self, x) -> np.ndarray:
        return np.asarray(self.g(x), dtype=float).reshape(self.n, self.m)

    def step(self, x, u) -> np.ndarray:
        x = _as_vector(x, self.n, "x")
        u = _as_vector(u, self.m, "u")
        return self.drift(x) + self.input_gain(x) @ u


def eval_system(sys: DiscreteSystem, x, u) -> np.ndarray:
    return sys.step(x, u)


def make_system(n: int, m: int, f, g, name: str = "custom") -> DiscreteSystem:
    """Wrap user closures ``f(x) -> (n,)`` and ``g(x) -> (n, m)``."""
    if n < 1 or m < 1:
        raise DimensionError("state and input dimensions must be positive")
    return DiscreteSystem(n=n, m=m, f=f, g=g, name=name)


@dataclass(frozen=True)
class BasisSet:
    """Drift basis ``phi`` (p functions) and input basis ``chi`` (q x m)."""

    n: int
    m: int
    p: int
    q: int
    phi: Callable[[np.ndarray], np.ndarray]
    chi: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    @property
    def dim(self) -> int:
        return self.p + self.q

    def drift_features(self, x) -> np.ndarray:
        return np.asarray(self.phi(x), dtype=float).reshape(self.p)

    def input_features(self, x) -> np.ndarray:
        return np.asarray(self.chi(x), dtype=float).reshape(self.q, self.m)

    def regressor(self, x, u) -> np.ndarray:
        return eval_regressor(self, x, u)


def eval_regressor(basis: BasisSet, x, u) -> np.ndarray:
    x = _as_vector(x, basis.n, "x")
    u = _as_vector(u, basis.m, "u")
    z = np.concatenate([basis.drift_features(x), basis.input_features(x) @ u])
    bad = np.flatnonzero(~np.isfinite(z))
    if bad.size:
        raise FloatingPointError(
            f"non-finite regressor component at index {int(bad[0])} for x={x.tolist()}"
        )
    return z


def make_rbf_basis(centers: Sequence, spread: float, m: int = 1) -> BasisSet:
    """Gaussian RBF basis ``exp(-|x - c_i|^2 / (2 spread^2))`` used for both f and g.

    Each input channel is weighted by the same kernel vector, so
    ``chi(x) u = k(x) * sum(u)``; with ``m = 1`` this is the usual RBF network.
    """
    if spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    C = np.asarray(centers, dtype=float)
    if C.size == 0:
        raise ValueError("at least one center is required")
    if C.ndim == 1:
        C = C[:, None]
    n = C.shape[1]
    inv = 1.0 / (2.0 * spread * spread)

    def kernels(x):
        x = np.asarray(x, dtype=float).reshape(n)
        r2 = np.sum((C - x) ** 2, axis=1)
        return np.exp(-r2 * inv)

    def chi(x):
        return np.outer(kernels(x), np.ones(m))

    k = C.shape[0]
    return BasisSet(n=n, m=m, p=k, q=k, phi=kernels, chi=chi, name="rbf")


@dataclass
class Approximator:
    """``Theta^T z`` with ``Theta`` row-partitioned at ``p`` into f and g blocks."""

    theta: np.ndarray
    basis: BasisSet

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.basis.dim, self.basis.n):
            raise DimensionError(
                f"theta must be {(self.basis.dim, self.basis.n)}, got {self.theta.shape}"
            )

    @property
    def theta_f(self) -> np.ndarray:
        return self.theta[: self.basis.p]

    @property
    def theta_g(self) -> np.ndarray:
        return self.theta[self.basis.p :]

    def f_hat(self, x) -> np.ndarray:
        return self.theta_f.T @ self.basis.drift_features(x)

    def g_hat(self, x) -> np.ndarray:
        return self.theta_g.T @ self.basis.input_features(x)

    def predict(self, x, u) -> np.ndarray:
        return self.theta.T @ eval_regressor(self.basis, x, u)


@dataclass(frozen=True)
class DomainSpec:
    """Box ``[x_lo, x_hi]`` per state dimension with ``points`` grid nodes per axis."""

    x_lo: tuple
    x_hi: tuple
    points: int = 501

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.x_lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.x_hi))
        if len(lo) != len(hi):
            raise DimensionError("x_lo and x_hi must have the same length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"domain requires x_lo < x_hi component-wise, got {lo}, {hi}")
        if self.points < 2:
            raise ValueError("grid needs at least two points per axis")
        object.__setattr__(self, "x_lo", lo)
        object.__setattr__(self, "x_hi", hi)

    @classmethod
    def for_horizon(cls, x_lo, x_hi, k0: int, kf: int) -> "DomainSpec":
        # step (x_hi - x_lo) / (kf - k0) gives kf - k0 + 1 nodes
        return cls(x_lo, x_hi, points=kf - k0 + 1)

    @property
    def n(self) -> int:
        return len(self.x_lo)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, self.points) for a, b in zip(self.x_lo, self.x_hi)]

    def grid(self) -> np.ndarray:
        """All grid nodes, shape ``(points**n, n)``, last axis varying fastest."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


# ---------------------------------------------------------------------------
# built-in examples

EXAMPLE1_PARAMS = (-1.0, 1.5, 1.0)


def example1_system(params: Sequence[float] = EXAMPLE1_PARAMS) -> DiscreteSystem:
    p1, p2, p3 = params

    def f(x):
        x0 = x[0]
        return np.array([np.exp(-x0) * (p1 + p2 * np.cos(x0))])

    def g(x):
        return np.array([[p3 / (1.0 + x[0])]])

    return DiscreteSystem(n=1, m=1, f=f, g=g, name="example1")


def example1_basis() -> BasisSet:
    def phi(x):
        e = np.exp(-x[0])
        return np.array([e, e * np.cos(x[0])])

    def chi(x):
        return np.array([[1.0 / (1.0 + x[0])]])

    return BasisSet(n=1, m=1, p=2, q=1, phi=phi, chi=chi, name="example1")


def example1_theta_star(params: Sequence[float] = EXAMPLE1_PARAMS) -> np.ndarray:
    return np.asarray(params, dtype=float).reshape(3, 1)


def example2_system() -> DiscreteSystem:
    def f(x):
        return np.array([0.5 * x[0] * np.sin(0.5 * x[0])])

    def g(x):
        return np.array([[2.0 + np.cos(x[0])]])

    return DiscreteSystem(n=1, m=1, f=f, g=g, name="example2")


def example2_basis(centers: int = 5, spread: float = 1.2, lo: float = -2.0, hi: float = 2.0) -> BasisSet:
    return make_rbf_basis(np.linspace(lo, hi, centers), spread, m=1)


def optimal_parameters(sys: DiscreteSystem, basis: BasisSet, domain: DomainSpec) -> np.ndarray:
    """Least-squares ``Theta*`` of f and g over the domain grid.

    Used as the benchmark truth when the basis cannot represent the system
    exactly; for an exactly representable system it recovers the true
    parameters up to round-off.
    """
    X = domain.grid()
    Phi = np.array([basis.drift_features(x) for x in X])
    F = np.array([sys.drift(x) for x in X])
    theta_f = np.linalg.lstsq(Phi, F, rcond=None)[0]

    rows, targets = [], []
    for x in X:
        Chi = basis.input_features(x)
        G = sys.input_gain(x)
        for j in range(basis.m):
            rows.append(Chi[:, j])
            targets.append(G[:, j])
    theta_g = np.linalg.lstsq(np.array(rows), np.array(targets), rcond=None)[0]
    return np.vstack([theta_f, theta_g])


def approximation_residuals(sys: DiscreteSystem, basis: BasisSet, theta: np.ndarray, domain: DomainSpec):
    """Sup over the grid of ``|e_f|`` and ``|e_g|`` (2-norms) for the given ``theta``."""
    theta = np.asarray(theta, dtype=float)
    ef = eg = 0.0
    for x in domain.grid():
        ef = max(ef, float(np.linalg.norm(sys.drift(x) - theta[: basis.p].T @ basis.drift_features(x))))
        G = sys.input_gain(x) - theta[basis.p :].T @ basis.input_features(x)
        eg = max(eg, float(np.linalg.norm(G, 2)))
    return ef, eg


SYSTEMS = {"example1": example1_system, "example2": example2_system}
