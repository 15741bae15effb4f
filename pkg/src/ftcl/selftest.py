"""Fast invariant checks runnable without pytest (``ftcl selftest``)."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import dynamics as dyn
from .analysis import power_root, settling_time_lemma1, settling_time_lemma2
from .estimators import EstimatorState, HyperParams, Method, gamma_bound_ftcl1, power_sign, step_estimator
from .filtering import FilterConfig, FilterState, closed_form_d, closed_form_l, filter_step, normalize
from .history import HistoryStack, eig_extremes, record


def _filter_matches_closed_form(rng) -> None:
    for c in (-0.9, 0.0, 0.5, 0.9):
        zs = rng.normal(size=(200, 3))
        xs = rng.normal(size=(200, 1))
        st = FilterState.initial(np.zeros(1), 3)
        for z, x in zip(zs, xs):
            st = filter_step(st, FilterConfig(c), z, x)
        assert np.max(np.abs(st.d - closed_form_d(zs, c))) < 1e-12
        assert np.max(np.abs(st.l - closed_form_l(xs, c))) < 1e-12


def _pipeline_identity(rng) -> None:
    sys, basis, theta = dyn.example1_system(), dyn.example1_basis(), dyn.example1_theta_star()
    cfg = FilterConfig(0.5)
    x = np.zeros(1)
    st = FilterState.initial(x, basis.dim)
    for k in range(200):
        s = normalize(st, x)
        resid = s.x_bar - (theta.T @ s.d_bar - s.l_bar + s.ck_x0_bar)
        assert np.max(np.abs(resid)) < 1e-9
        u = np.array([0.1 * math.sin(0.7 * k)])
        st = filter_step(st, cfg, basis.regressor(x, u), x)
        x = sys.step(x, u)


def _eigen_extremes(rng) -> None:
    for _ in range(50):
        A = rng.normal(size=(4, 4))
        S = A @ A.T
        w = np.linalg.eigvalsh(S)
        lo, hi = eig_extremes(S)
        assert abs(lo - w[0]) < 1e-8 * max(1.0, w[-1]) and abs(hi - w[-1]) < 1e-8 * max(1.0, w[-1])


def _selection_monotone(rng) -> None:
    stack = HistoryStack.empty(3, 3)
    from .filtering import NormalizedSample

    last = None
    for k in range(300):
        d = rng.normal(size=3)
        s = NormalizedSample(d, np.zeros(1), np.zeros(1), 1.0, np.zeros(1))
        _, stack = record(stack, s, k)
        if stack.full:
            assert last is None or stack.ratio >= last
            last = stack.ratio


def _power_sign(rng) -> None:
    v = rng.normal(size=20)
    assert np.allclose(power_sign(-v, 0.6), -power_sign(v, 0.6))
    assert np.allclose(power_sign(v, 1.0), v)


def _ftcl2_degenerates_to_cl(rng) -> None:
    from .filtering import NormalizedSample

    cols = [NormalizedSample(rng.normal(size=3) * 0.3, rng.normal(size=1), rng.normal(size=1), 1.0, np.zeros(1))
            for _ in range(3)]
    stack = HistoryStack.empty(3, 3)
    for k, c in enumerate(cols):
        _, stack = record(stack, c, k)
    theta = rng.normal(size=(3, 1))
    hp = HyperParams(gamma=0.1, xi_G=1.0, xi_C=0.3, gamma1=1.0)
    a = EstimatorState(theta, Method.FTCL2, hp, warmup_done=True)
    b = EstimatorState(theta, Method.CL, HyperParams(gamma=0.1, xi_G=1.0, xi_C=0.3), warmup_done=True)
    s = cols[0]
    assert np.max(np.abs(step_estimator(a, s, stack).theta_hat - step_estimator(b, s, stack).theta_hat)) < 1e-12


def _closed_forms(rng) -> None:
    assert settling_time_lemma1(4.0, 0.5, 0.5, 0.5) == 5
    assert settling_time_lemma2(4.0, 0.5, 0.5) == 10
    assert abs(gamma_bound_ftcl1(1, 1, 1, 1, 1) - 2.0 / 9.0) < 1e-15
    assert abs(power_root(1.0, 0.5, 0.5, 1.0) - 1.0) < 1e-9


CHECKS: dict[str, Callable] = {
    "filter closed form": _filter_matches_closed_form,
    "pipeline identity": _pipeline_identity,
    "eigen extremes": _eigen_extremes,
    "selection monotone": _selection_monotone,
    "power sign": _power_sign,
    "FTCL2 -> CL at gamma1=1": _ftcl2_degenerates_to_cl,
    "closed-form bounds": _closed_forms,
}


def run_selftest(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for name, fn in CHECKS.items():
        try:
            fn(rng)
            out(f"PASS  {name}")
        except AssertionError as exc:
            ok = False
            out(f"FAIL  {name} {exc}")
    return ok
