"""Parameter update laws: gradient descent, concurrent learning and the two
finite-time concurrent learning (FTCL) laws, plus their rate conditions.

All laws act on ``theta_hat`` of shape ``(p+q, n)`` and use the normalized
prediction error ``e = theta_hat^T d_bar - l_bar + c^k x0_bar - x_bar``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .filtering import NormalizedSample
from .history import HistoryStack, spectral_norm


class Method(str, enum.Enum):
    GD = "GD"
    CL = "CL"
    FTCL1 = "FTCL1"
    FTCL2 = "FTCL2"


class EstimatorDivergence(FloatingPointError):
    def __init__(self, method: str, k: int):
        super().__init__(f"{method} produced a non-finite estimate at step {k}")
        self.method = method
        self.k = k


class RankConditionError(ValueError):
    pass


@dataclass(frozen=True)
class HyperParams:
    """Learning weights shared by all four laws.

    ``gamma`` is the learning rate (gamma_G, gamma_C, gamma or gamma-bar);
    ``None`` means "derive it" (the gamma_C rule for CL, 0.9x the admissible
    bound for the FTCL laws).  ``xi_G``/``xi_C`` play the role of
    sigma_G/sigma_C for CL.
    """

    gamma: Optional[float] = None
    xi_G: float = 1.0
    xi_C: float = 0.0
    beta: float = 1.0
    gamma1: float = 0.5

    def validate(self, method: Method) -> None:
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"{method.value}: gamma must be positive, got {self.gamma}")
        if method is Method.GD:
            if self.gamma is None:
                raise ValueError("GD needs an explicit gamma")
            return
        if not self.xi_G > 0:
            raise ValueError(f"{method.value}: xi_G must be positive")
        if self.xi_C < 0:
            raise ValueError(f"{method.value}: xi_C must be non-negative")
        if method is Method.FTCL1 and not self.beta > 0:
            raise ValueError("FTCL1: beta must be positive")
        if method is Method.FTCL2 and not 0 < self.gamma1 < 1:
            raise ValueError(f"FTCL2: gamma1 must lie in (0, 1), got {self.gamma1}")


@dataclass(frozen=True)
class EstimatorState:
    theta_hat: np.ndarray
    method: Method
    hp: HyperParams
    warmup_done: bool = False
    k: int = 0


# ---------------------------------------------------------------------------
# error signals

def prediction_error(theta_hat, sample: NormalizedSample, ck_x0_bar=None) -> np.ndarray:
    ck = sample.ck_x0_bar if ck_x0_bar is None else np.asarray(ck_x0_bar, dtype=float)
    return theta_hat.T @ sample.d_bar - sample.l_bar + ck - sample.x_bar


def stack_error(theta_hat, stack: HistoryStack, h: int, ck_x0_bar) -> np.ndarray:
    """Error of stored column ``h`` under the current estimate and the
    current ``c^k x0_bar`` (not the value at the recording time)."""
    if not 0 <= h < len(stack):
        raise IndexError(f"stack column {h} out of range (size {len(stack)})")
    col = stack.columns[h]
    return theta_hat.T @ col.d_bar - col.l_bar + np.asarray(ck_x0_bar, dtype=float) - col.x_bar


def stack_errors(theta_hat, stack: HistoryStack, ck_x0_bar) -> list[np.ndarray]:
    return [stack_error(theta_hat, stack, h, ck_x0_bar) for h in range(len(stack))]


def power_sign(v, gamma1: float) -> np.ndarray:
    """Component-wise ``|v|^gamma1 * sign(v)`` with ``sign(0) = 0``."""
    v = np.asarray(v, dtype=float)
    return np.abs(v) ** gamma1 * np.sign(v)


def _aggregate(stack: HistoryStack, e_list: Sequence[np.ndarray], transform=None) -> np.ndarray:
    W = np.zeros((stack.dim, len(e_list[0]) if e_list else 0))
    for col, e_h in zip(stack.columns, e_list):
        W += np.outer(col.d_bar, e_h if transform is None else transform(e_h))
    return W


# ---------------------------------------------------------------------------
# update laws

def _checked(st: EstimatorState, theta_new: np.ndarray, warmup_done: bool) -> EstimatorState:
    if not np.all(np.isfinite(theta_new)):
        raise EstimatorDivergence(st.method.value, st.k)
    return replace(st, theta_hat=theta_new, warmup_done=warmup_done, k=st.k + 1)


def _concurrent_active(st: EstimatorState, stack: HistoryStack, e_list) -> bool:
    # concurrent weight is zero until the stack is full (warmup)
    return st.warmup_done and len(stack) > 0 and len(e_list) > 0


def update_gd(st: EstimatorState, sample: NormalizedSample, e) -> EstimatorState:
    step = st.hp.gamma * np.outer(sample.d_bar, e)
    return _checked(st, st.theta_hat - step, st.warmup_done)


def gamma_c_rule(sigma_G: float, sigma_C: float, lam_max_S: float) -> float:
    den = 2.0 * sigma_G + sigma_C * lam_max_S
    if not den > 0:
        raise ValueError("gamma_C rule needs 2 sigma_G + sigma_C lam_max(S) > 0")
    return 1.0 / den


def cl_rate(st: EstimatorState, stack: HistoryStack) -> float:
    if st.hp.gamma is not None:
        return st.hp.gamma
    sigma_C = st.hp.xi_C if st.warmup_done else 0.0
    return gamma_c_rule(st.hp.xi_G, sigma_C, stack.lam_max)


def update_cl(st: EstimatorState, sample: NormalizedSample, stack: HistoryStack, e, e_list) -> EstimatorState:
    hp = st.hp
    rate = cl_rate(st, stack)
    step = hp.xi_G * np.outer(sample.d_bar, e)
    if _concurrent_active(st, stack, e_list):
        step = step + hp.xi_C * _aggregate(stack, e_list)
    return _checked(st, st.theta_hat - rate * step, st.warmup_done)


def update_ftcl1(st: EstimatorState, sample: NormalizedSample, stack: HistoryStack, e, e_list) -> EstimatorState:
    hp = st.hp
    if hp.gamma is None:
        # rate not fixed yet (derived at warmup completion): hold the estimate
        return _checked(st, st.theta_hat.copy(), st.warmup_done)
    step = hp.xi_G * np.outer(sample.d_bar, e)
    if _concurrent_active(st, stack, e_list):
        W = _aggregate(stack, e_list)
        step = step + hp.xi_C * (W + W / (hp.beta + spectral_norm(W)))
    return _checked(st, st.theta_hat - hp.gamma * step, st.warmup_done)


def update_ftcl2(st: EstimatorState, sample: NormalizedSample, stack: HistoryStack, e, e_list) -> EstimatorState:
    hp = st.hp
    if hp.gamma is None:
        return _checked(st, st.theta_hat.copy(), st.warmup_done)
    step = hp.xi_G * np.outer(sample.d_bar, power_sign(e, hp.gamma1))
    if _concurrent_active(st, stack, e_list):
        step = step + hp.xi_C * _aggregate(stack, e_list, lambda v: power_sign(v, hp.gamma1))
    return _checked(st, st.theta_hat - hp.gamma * step, st.warmup_done)


def step_estimator(st: EstimatorState, sample: NormalizedSample, stack: HistoryStack) -> EstimatorState:
    """Compute ``e(k)`` and ``e_h(k)`` and apply the state's update law."""
    e = prediction_error(st.theta_hat, sample)
    if st.method is Method.GD:
        return update_gd(st, sample, e)
    e_list = stack_errors(st.theta_hat, stack, sample.ck_x0_bar) if st.warmup_done else []
    if st.method is Method.CL:
        return update_cl(st, sample, stack, e, e_list)
    if st.method is Method.FTCL1:
        return update_ftcl1(st, sample, stack, e, e_list)
    return update_ftcl2(st, sample, stack, e, e_list)


# ---------------------------------------------------------------------------
# learning-rate conditions

def _require_rank(lam_min_S: float) -> None:
    if not lam_min_S > 0:
        raise RankConditionError(f"rank condition violated: lam_min(S) = {lam_min_S}")


def gamma_bound_ftcl1(xi_G: float, xi_C: float, beta: float, lam_min_S: float, lam_max_S: float) -> float:
    """Supremum of admissible FTCL1 rates."""
    _require_rank(lam_min_S)
    den = xi_G + xi_C * lam_max_S * (1.0 + 1.0 / beta)
    return 2.0 * xi_C * lam_min_S / den**2


def ftcl2_AB(xi_G: float, xi_C: float, gamma1: float, n: int, lam_min_S: float, lam_max_S: float) -> tuple[float, float]:
    """``A`` and ``B`` of the FTCL2 rate condition with the rank-one current
    regressor matrix bounded by ``lam_min = 0``, ``lam_max = 1``."""
    _require_rank(lam_min_S)
    h = 0.5 * (gamma1 + 1.0)
    nf = float(n) ** (1.0 - gamma1)
    A = 2.0 * xi_C * lam_min_S**h
    B = xi_G**2 * nf + xi_C**2 * nf * lam_max_S**h + 2.0 * xi_C * xi_G * nf * lam_max_S**h
    return A, B


def gamma_bound_ftcl2(xi_G: float, xi_C: float, gamma1: float, n: int, lam_min_S: float, lam_max_S: float) -> float:
    A, B = ftcl2_AB(xi_G, xi_C, gamma1, n, lam_min_S, lam_max_S)
    return A / B


def admissible_bound(method: Method, hp: HyperParams, n: int, lam_min_S: float, lam_max_S: float) -> float:
    if method is Method.FTCL1:
        return gamma_bound_ftcl1(hp.xi_G, hp.xi_C, hp.beta, lam_min_S, lam_max_S)
    if method is Method.FTCL2:
        return gamma_bound_ftcl2(hp.xi_G, hp.xi_C, hp.gamma1, n, lam_min_S, lam_max_S)
    raise ValueError(f"no admissibility bound for {method.value}")

