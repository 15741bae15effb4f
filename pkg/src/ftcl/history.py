"""Memory stacks of recorded normalized samples and data selection.

The stack keeps at most ``P`` columns ``(d_bar, l_bar, x_bar)`` and caches
``S = sum d_bar d_bar^T`` with its extreme eigenvalues.  Once full, an
incoming sample replaces the single column whose swap most increases
``lam_min(S) / lam_max(S)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .filtering import NormalizedSample

EIG_TOL = 1e-12
RANK_TOL = 1e-10
RANK_FLOOR = 1e-14
SELECT_RTOL = 1e-9
SYMMETRY_TOL = 1e-9


class EigExtremes(NamedTuple):
    lam_min: float
    lam_max: float


def jacobi_eigenvalues(S, tol: float = EIG_TOL, max_sweeps: int = 100) -> list[float]:
    """All eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol * ||S||_F``.
    """
    A = [list(map(float, row)) for row in np.asarray(S, dtype=float)]
    n = len(A)
    if n == 0:
        return []
    scale = math.sqrt(sum(v * v for row in A for v in row))
    if scale == 0.0:
        return [0.0] * n
    target = tol * scale
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * sum(A[i][j] ** 2 for i in range(n) for j in range(i + 1, n)))
        if off < target:
            return [A[i][i] for i in range(n)]
        for p in range(n - 1):
            Ap = A[p]
            for q in range(p + 1, n):
                apq = Ap[q]
                if apq == 0.0:
                    continue
                Aq = A[q]
                theta = (Aq[q] - Ap[p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                Ap[p] -= t * apq
                Aq[q] += t * apq
                Ap[q] = Aq[p] = 0.0
                for r in range(n):
                    if r == p or r == q:
                        continue
                    Ar = A[r]
                    arp, arq = Ar[p], Ar[q]
                    new_rp = arp - s * (arq + tau * arp)
                    new_rq = arq + s * (arp - tau * arq)
                    Ar[p] = Ap[r] = new_rp
                    Ar[q] = Aq[r] = new_rq
    raise ArithmeticError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def eig_extremes(S) -> EigExtremes:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    w = jacobi_eigenvalues(S)
    if not w:
        return EigExtremes(0.0, 0.0)
    return EigExtremes(min(w), max(w))


def spectral_norm(W) -> float:
    """Induced 2-norm via the largest eigenvalue of ``W^T W``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    G = W.T @ W
    G = 0.5 * (G + G.T)
    return math.sqrt(max(eig_extremes(G).lam_max, 0.0))


def conditioning(lam_min: float, lam_max: float) -> float:
    if lam_max <= 0.0:
        return 0.0
    return lam_min / lam_max


class StackColumn(NamedTuple):
    d_bar: np.ndarray
    l_bar: np.ndarray
    x_bar: np.ndarray
    tau: int


@dataclass(frozen=True)
class HistoryStack:
    """Immutable snapshot of the stacks; ``record`` returns a new one."""

    capacity: int
    dim: int
    columns: tuple = ()
    S: np.ndarray = field(default=None, repr=False)
    lam_min: float = 0.0
    lam_max: float = 0.0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("stack capacity must be positive")
        if self.S is None:
            object.__setattr__(self, "S", np.zeros((self.dim, self.dim)))

    @classmethod
    def empty(cls, capacity: int, dim: int, require_rank_capacity: bool = True) -> "HistoryStack":
        if require_rank_capacity and capacity < dim:
            raise ValueError(f"rank condition needs P >= p+q ({capacity} < {dim})")
        return cls(capacity=capacity, dim=dim)

    @classmethod
    def from_columns(cls, capacity: int, columns) -> "HistoryStack":
        columns = tuple(columns)
        dim = columns[0].d_bar.shape[0]
        S = _gram([c.d_bar for c in columns], dim)
        ext = eig_extremes(S)
        return cls(capacity, dim, columns, S, ext.lam_min, ext.lam_max)

    def __len__(self) -> int:
        return len(self.columns)

    @property
    def full(self) -> bool:
        return len(self.columns) >= self.capacity

    @property
    def ratio(self) -> float:
        return conditioning(self.lam_min, self.lam_max)

    @property
    def M(self) -> np.ndarray:
        return np.column_stack([c.d_bar for c in self.columns]) if self.columns else np.zeros((self.dim, 0))

    def to_csv(self, path) -> None:
        """One row per stored column: tau, d_bar..., l_bar..., x_bar..."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if not self.columns:
                w.writerow(["tau"])
                return
            c0 = self.columns[0]
            w.writerow(
                ["tau"]
                + [f"d_bar{i + 1}" for i in range(c0.d_bar.size)]
                + [f"l_bar{i + 1}" for i in range(c0.l_bar.size)]
                + [f"x_bar{i + 1}" for i in range(c0.x_bar.size)]
            )
            for c in self.columns:
                w.writerow([c.tau] + [repr(float(v)) for v in np.concatenate([c.d_bar, c.l_bar, c.x_bar])])


def _gram(vectors, dim: int) -> np.ndarray:
    S = np.zeros((dim, dim))
    for v in vectors:
        S += np.outer(v, v)
    return S


def record(stack: HistoryStack, sample: NormalizedSample, k: int) -> tuple[bool, HistoryStack]:
    """Offer a sample to the stack.

    Fill phase appends unconditionally.  Selection phase tries every slot and
    keeps the best swap only if it raises the eigenvalue ratio by more than a
    relative 1e-9; ties go to the lowest slot.
    """
    d_bar = np.asarray(sample.d_bar, dtype=float)
    if d_bar.shape != (stack.dim,):
        raise ValueError(f"sample regressor has shape {d_bar.shape}, stack expects ({stack.dim},)")
    col = StackColumn(d_bar.copy(), np.array(sample.l_bar, dtype=float), np.array(sample.x_bar, dtype=float), int(k))

    if not stack.full:
        return True, HistoryStack.from_columns(stack.capacity, stack.columns + (col,))

    current = stack.ratio
    cand = np.outer(d_bar, d_bar)
    best_j, best_ratio = -1, current
    for j, old in enumerate(stack.columns):
        S_j = stack.S - np.outer(old.d_bar, old.d_bar) + cand
        S_j = 0.5 * (S_j + S_j.T)
        ext = eig_extremes(S_j)
        r = conditioning(ext.lam_min, ext.lam_max)
        if r > best_ratio:
            best_j, best_ratio = j, r
    if best_j < 0 or best_ratio <= current + SELECT_RTOL * abs(current):
        return False, stack
    cols = list(stack.columns)
    cols[best_j] = col
    return True, HistoryStack.from_columns(stack.capacity, cols)


def rank_condition(stack: HistoryStack) -> bool:
    if len(stack) < stack.dim or stack.lam_max <= 0.0:
        return False
    return stack.lam_min > max(RANK_TOL * stack.lam_max, RANK_FLOOR)
