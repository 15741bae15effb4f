"""Finite-time bounds for the FTCL laws and online Lyapunov decrease monitors.

Everything here is a closed-form evaluation except the FTCL2 attractivity
radius, which is the positive root of ``-a' s^(g1+1) + b' s + c' = 0`` and is
found by bisection.  The monitors need the true parameters and therefore only
make sense in benchmarks.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .estimators import HyperParams, ftcl2_AB, gamma_bound_ftcl1

ROOT_FLOOR = 1e-12
MAX_DOUBLINGS = 1000


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    b_eps: float = 0.0
    b_eps_bar: float = 0.0
    known: bool = True

    def __post_init__(self):
        if self.b_eps < 0 or self.b_eps_bar < 0:
            raise ValueError("noise bounds must be non-negative")


@dataclass(frozen=True)
class Theorem1Constants:
    a: float
    b: float  # proof constant; b_u bounds it from above
    b_u: float
    c: float
    a_gamma: float
    b_gamma: float
    eta: float
    gamma: float
    gamma_bound: float
    gamma_admissible: bool


@dataclass(frozen=True)
class Theorem2Constants:
    A: float
    B: float
    a_prime: float
    alpha_prime: float
    b_prime: float
    c_prime: float
    gamma: float
    gamma1: float
    gamma_bound: float
    gamma_admissible: bool


@dataclass
class BoundsReport:
    method: str
    gamma: float
    gamma_bound: float
    gamma_admissible: bool
    V0: float
    theta0_norm: float
    b_eps_bar: Optional[float]
    K1_star: Optional[int] = None
    K2_star: Optional[int] = None
    b_theta: Optional[float] = None
    warmup_step: Optional[int] = None
    constants: object = None
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        """Flat ``key=value`` block, one entry per line."""
        items = {
            "method": self.method,
            "warmup_step": self.warmup_step,
            "gamma": self.gamma,
            "gamma_bound": self.gamma_bound,
            "gamma_admissible": self.gamma_admissible,
            "b_eps_bar": "unknown" if self.b_eps_bar is None else self.b_eps_bar,
            "V0": self.V0,
            "theta0_norm": self.theta0_norm,
            "K1_star": self.K1_star,
            "K2_star": self.K2_star,
            "b_theta": self.b_theta,
        }
        if self.constants is not None:
            for k, v in asdict(self.constants).items():
                if k not in ("gamma", "gamma_bound", "gamma_admissible"):
                    items[f"const.{k}"] = v
        lines = [f"{k}={_fmt(v)}" for k, v in items.items()]
        lines += [f"note={n}" for n in self.notes]
        return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def lyapunov_V(theta_tilde, gamma: float) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    T = np.asarray(theta_tilde, dtype=float)
    return float(np.sum(T * T)) / gamma


# ---------------------------------------------------------------------------
# constants

def theorem1_constants(
    hp: HyperParams,
    lam_min_S: float,
    lam_max_S: float,
    P: int,
    b_eps_bar: float = 0.0,
    eta: float = 1.0,
) -> Theorem1Constants:
    if not lam_min_S > 0:
        raise BoundError("rank condition violated: lam_min(S) must be positive")
    if not eta > 0:
        raise BoundError("eta must be positive")
    g, xG, xC, beta = hp.gamma, hp.xi_G, hp.xi_C, hp.beta
    lmin, lmax, be = lam_min_S, lam_max_S, b_eps_bar
    ratio = lmin / lmax
    bound = gamma_bound_ftcl1(xG, xC, beta, lmin, lmax)

    a = (
        -2.0 * xC * lmin
        + xG**2 * g
        + 2.0 * g * xG * xC * lmax * (1.0 / beta + 1.0)
        + g * xC**2 * lmax**2 * (1.0 + 1.0 / beta) ** 2
    )
    shrink = 2.0 * xC / (eta + 1.0) * ratio
    noise_lin = 2.0 * be * (
        xC * g * lmax * (xG + xC * P * (1.0 + 1.0 / beta**2))
        + xC * P * (g * xG + 1.0)
        + xG
        + g * xG**2
    )
    c = be * (
        2.0 * xC * P / lmin
        + g
        * (
            xG**2 * be
            + 2.0 * xC * xG
            + P
            * (
                2.0 * xC * xG * be
                + xC**2 * P * be
                + 2.0 * xC**2
                + 2.0 * xC**2 * lmax / lmin
                + 2.0 * xG * xC / lmin
                + xC**2 * P * be / beta**2
            )
        )
    )
    return Theorem1Constants(
        a=a,
        b=-shrink + noise_lin,
        b_u=shrink + noise_lin,
        c=c,
        a_gamma=-g * a,
        b_gamma=2.0 * math.sqrt(g) * xC / (eta + 1.0) * ratio,
        eta=eta,
        gamma=g,
        gamma_bound=bound,
        gamma_admissible=g < bound,
    )


def theorem2_constants(
    hp: HyperParams,
    n: int,
    lam_min_S: float,
    lam_max_S: float,
    P: int,
    b_eps_bar: float = 0.0,
) -> Theorem2Constants:
    g, g1, xG, xC = hp.gamma, hp.gamma1, hp.xi_G, hp.xi_C
    A, B = ftcl2_AB(xG, xC, g1, n, lam_min_S, lam_max_S)
    h = 0.5 * (g1 + 1.0)
    r = float(n) ** (0.5 * (1.0 - g1))
    be_g = b_eps_bar**g1
    a_p = A - g * B
    b_p = 2.0 * be_g * r * (
        xG
        + g * xG**2 * r
        + g * xC * xG * r
        + math.sqrt(lam_max_S) * (xC + g * xC * xG * r + g * xC**2 * r)
    )
    c_p = g * (
        float(n) ** (1.0 - g1) * b_eps_bar ** (2.0 * g1) * (xG**2 + 2.0 * xC * xG * P)
        + xC**2 * P**2 * r * be_g
    )
    return Theorem2Constants(
        A=A,
        B=B,
        a_prime=a_p,
        alpha_prime=a_p * g**h,
        b_prime=b_p,
        c_prime=c_p,
        gamma=g,
        gamma1=g1,
        gamma_bound=A / B,
        gamma_admissible=g < A / B,
    )


# ---------------------------------------------------------------------------
# settling-time functions

def settling_time_lemma1(V0: float, a: float, b: float, mu: float) -> int:
    """Step bound when ``dV <= -a V - b V^mu`` with ``0<a<1, b>0, 0<mu<1``."""
    if not (0 < a < 1 and b > 0 and 0 < mu < 1):
        raise BoundError(f"settling bound needs 0<a<1, b>0, 0<mu<1 (a={a}, b={b}, mu={mu})")
    if V0 < 0:
        raise BoundError("V0 must be non-negative")
    base = b / (1.0 - a)
    threshold = base ** (1.0 / (1.0 - mu))
    if V0 <= threshold:
        return 1
    den = a * threshold + b * base ** (mu / (1.0 - mu))
    return int(math.floor(V0 / den)) + 1


def settling_time_lemma2(V0: float, c: float, alpha: float) -> int:
    """Step bound when ``dV <= -c min(V/c, V^alpha)`` with ``c>0, 0<alpha<1``."""
    if not (c > 0 and 0 < alpha < 1):
        raise BoundError(f"power-law settling bound needs c>0 and 0<alpha<1 (c={c}, alpha={alpha})")
    if V0 < 0:
        raise BoundError("V0 must be non-negative")
    threshold = c ** (1.0 / (1.0 - alpha))
    if V0 <= threshold:
        return 1
    base = 1.0 - c * V0 ** (alpha - 1.0)
    if not 0 < base < 1:
        raise BoundError(f"logarithm base {base} outside (0, 1); bound inapplicable")
    return int(math.floor(math.log(threshold / V0) / math.log(base))) + 1


# ---------------------------------------------------------------------------
# attractivity radii and reports

def quadratic_radius(a: float, b_u: float, c: float) -> float:
    """Non-negative root of ``a s^2 + b_u s + c`` for ``a < 0``."""
    if not a < 0:
        raise BoundError(f"attractivity radius needs a < 0, got {a}")
    disc = b_u * b_u - 4.0 * a * c
    if disc < 0:
        raise BoundError(f"negative discriminant {disc}")
    return (-b_u - math.sqrt(disc)) / (2.0 * a)


def power_root(a_prime: float, b_prime: float, c_prime: float, gamma1: float) -> float:
    """Positive root of ``-a' s^(g1+1) + b' s + c' = 0`` by bisection."""
    if b_prime == 0.0 and c_prime == 0.0:
        return 0.0
    p = gamma1 + 1.0

    def fn(s):
        return -a_prime * s**p + b_prime * s + c_prime

    lo = ROOT_FLOOR
    if fn(lo) <= 0.0:
        return lo
    hi = max(1.0, 2.0 * lo)
    doublings = 0
    while fn(hi) > 0.0:
        hi *= 2.0
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise BoundError("no sign change found for the attractivity polynomial")
    # bisect down to adjacent floats
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fn(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _step_count(num: float, den: float) -> Optional[int]:
    if num <= 0:
        return 1
    if den <= 0:
        return None
    return int(math.floor(num / den)) + 1


def bounds_ftcl1(consts: Theorem1Constants, V0: float, b_eps_bar: float, theta0_norm: float) -> BoundsReport:
    rep = BoundsReport(
        method="FTCL1",
        gamma=consts.gamma,
        gamma_bound=consts.gamma_bound,
        gamma_admissible=consts.gamma_admissible,
        V0=V0,
        theta0_norm=theta0_norm,
        b_eps_bar=b_eps_bar,
        constants=consts,
    )
    if not consts.gamma_admissible:
        rep.notes.append("learning rate violates the admissibility condition; bounds not evaluated")
        return rep
    if b_eps_bar == 0.0:
        rep.b_theta = 0.0
        rep.K1_star = settling_time_lemma1(V0, consts.a_gamma, consts.b_gamma, 0.5)
        return rep
    rep.b_theta = quadratic_radius(consts.a, consts.b_u, consts.c)
    r2 = rep.b_theta**2 / consts.gamma
    rep.K2_star = _step_count(V0 - r2, consts.a_gamma * r2 - consts.b_u * theta0_norm - consts.c)
    if rep.K2_star is None:
        rep.notes.append("K2* inconclusive: non-positive denominator")
    return rep


def bounds_ftcl2(consts: Theorem2Constants, V0: float, gamma1: float, theta0_norm: float) -> BoundsReport:
    rep = BoundsReport(
        method="FTCL2",
        gamma=consts.gamma,
        gamma_bound=consts.gamma_bound,
        gamma_admissible=consts.gamma_admissible,
        V0=V0,
        theta0_norm=theta0_norm,
        b_eps_bar=None,
        constants=consts,
    )
    if not consts.alpha_prime > 0:
        rep.notes.append("alpha' <= 0: learning rate not admissible; bounds not evaluated")
        return rep
    h = 0.5 * (gamma1 + 1.0)
    zero_mfae = consts.b_prime == 0.0 and consts.c_prime == 0.0
    if zero_mfae:
        rep.b_theta = 0.0
        rep.K1_star = settling_time_lemma2(V0, consts.alpha_prime, h)
        return rep
    rep.b_theta = power_root(consts.a_prime, consts.b_prime, consts.c_prime, gamma1)
    g = consts.gamma
    num = V0 - rep.b_theta**2 / g
    den = consts.alpha_prime * g ** (-h) * rep.b_theta ** (gamma1 + 1.0) - consts.b_prime * theta0_norm - consts.c_prime
    rep.K2_star = _step_count(num, den)
    if rep.K2_star is None:
        rep.notes.append("K2* inconclusive: non-positive denominator")
    return rep


# ---------------------------------------------------------------------------
# monitors

class Violation(NamedTuple):
    k: int
    delta_V: float
    allowed: float
    slack: float  # allowed - delta_V, negative when violated


def allowed_decrease(V_prev: float, consts, mode: str) -> float:
    """Right-hand side of the zero-MFAE decrease inequality at ``V(k-1)``."""
    if mode == "FTCL1":
        return -consts.a_gamma * V_prev - consts.b_gamma * math.sqrt(V_prev)
    if mode == "FTCL2":
        h = 0.5 * (consts.gamma1 + 1.0)
        ap = consts.alpha_prime
        return -ap * min(V_prev / ap, V_prev**h)
    raise ValueError(f"unknown monitor mode {mode!r}")


def monitor_decrease(
    steps: Sequence[int],
    V: Sequence[float],
    consts,
    mode: str,
    rtol: float = 1e-12,
) -> list[Violation]:
    """Check ``V(k) - V(k-1) <= rhs(V(k-1))`` along a post-warmup trajectory.

    ``rtol`` absorbs round-off in ``V`` itself (relative to ``V(k-1)``).
    """
    out = []
    for i in range(1, len(V)):
        prev, cur = float(V[i - 1]), float(V[i])
        dV = cur - prev
        rhs = allowed_decrease(prev, consts, mode)
        if dV > rhs + rtol * prev:
            out.append(Violation(int(steps[i]), dV, rhs, rhs - dV))
    return out


def eta_premise_failures(
    steps: Iterable[int], S_theta_norms: Iterable[float], eta: float, beta: float, P: int, b_eps_bar: float
) -> list[int]:
    """Steps where ``(eta+1)|S Theta~| >= beta + |S Theta~| + P b_eps_bar`` fails."""
    return [
        int(k)
        for k, s in zip(steps, S_theta_norms)
        if (eta + 1.0) * s < beta + s + P * b_eps_bar
    ]
