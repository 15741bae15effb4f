import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftcl.analysis import (
    BoundError,
    Theorem2Constants,
    bounds_ftcl1,
    bounds_ftcl2,
    eta_premise_failures,
    lyapunov_V,
    monitor_decrease,
    power_root,
    quadratic_radius,
    settling_time_lemma1,
    settling_time_lemma2,
    theorem1_constants,
    theorem2_constants,
)
from ftcl.estimators import HyperParams

from oracles import scan_root


def test_lyapunov_examples():
    assert lyapunov_V(np.zeros((3, 1)), 0.4) == 0.0
    assert lyapunov_V(np.array([[2.0], [0.0]]), 1.0) == pytest.approx(4.0)
    assert lyapunov_V(np.eye(2), 0.5) == pytest.approx(4.0)


def unit_hp(gamma=0.1):
    return HyperParams(gamma=gamma, xi_G=1.0, xi_C=1.0, beta=1.0)


def test_theorem1_constants_unit_case():
    c = theorem1_constants(unit_hp(), 1.0, 1.0, 1, 0.0, 1.0)
    # -2 + 0.1 + 0.4 + 0.4
    assert c.a == pytest.approx(-1.1)
    assert c.b_gamma == pytest.approx(math.sqrt(0.1))
    assert c.a_gamma == pytest.approx(0.11)
    assert c.gamma_bound == pytest.approx(2.0 / 9.0)
    assert c.gamma_admissible


def test_theorem1_zero_noise_terms():
    c = theorem1_constants(HyperParams(gamma=0.01, xi_G=1.0, xi_C=0.3, beta=0.3), 0.2, 0.9, 3, 0.0, 2.0)
    assert c.c == 0.0
    shrink = 2 * 0.3 / 3.0 * (0.2 / 0.9)
    assert c.b == pytest.approx(-shrink)
    assert c.b_u == pytest.approx(shrink)


def test_theorem1_requires_rank():
    with pytest.raises(BoundError):
        theorem1_constants(unit_hp(), 0.0, 1.0, 1)


def test_settling_time_lemma1():
    assert settling_time_lemma1(4.0, 0.5, 0.5, 0.5) == 5
    assert settling_time_lemma1(0.5, 0.5, 0.5, 0.5) == 1
    ks = [settling_time_lemma1(v, 0.2, 0.1, 0.5) for v in np.linspace(0, 50, 40)]
    assert ks == sorted(ks)
    with pytest.raises(BoundError):
        settling_time_lemma1(1.0, 1.5, 0.5, 0.5)


def test_settling_time_lemma2():
    assert settling_time_lemma2(4.0, 0.5, 0.5) == 10
    assert settling_time_lemma2(0.25, 0.5, 0.5) == 1
    ks = [settling_time_lemma2(v, 0.3, 0.7) for v in np.linspace(0.01, 80, 60)]
    assert ks == sorted(ks)


def simulate_lemma2(V0, c, alpha):
    # equality case of dV <= -c min(V/c, V^alpha); returns the first step with V = 0
    V, k = V0, 0
    while V > 0 and k < 10**6:
        V = V - c * min(V / c, V**alpha)
        k += 1
    return k


@pytest.mark.parametrize("V0, c, alpha", [(4.0, 0.5, 0.5), (30.0, 0.2, 0.8), (2.0, 0.9, 0.3)])
def test_lemma2_bound_dominates_worst_case(V0, c, alpha):
    # settling means V(k) = 0 for every k > K
    assert simulate_lemma2(V0, c, alpha) <= settling_time_lemma2(V0, c, alpha) + 1


def test_quadratic_radius():
    assert quadratic_radius(-1.0, 0.0, 1.0) == pytest.approx(1.0)
    rs = [quadratic_radius(-1.0, 0.3, c) for c in (0.1, 0.5, 1.0, 3.0)]
    assert rs == sorted(rs)
    with pytest.raises(BoundError):
        quadratic_radius(1.0, 0.0, 1.0)


def test_bounds_ftcl1_zero_noise():
    c = theorem1_constants(unit_hp(), 1.0, 1.0, 1, 0.0, 1.0)
    rep = bounds_ftcl1(c, 4.0, 0.0, 2.0)
    assert rep.b_theta == 0.0
    b = c.b_gamma / (1 - c.a_gamma)
    assert rep.K1_star == math.floor(4.0 / (c.a_gamma * b * b + c.b_gamma * b)) + 1


def test_bounds_ftcl1_noisy_reports_radius():
    c = theorem1_constants(HyperParams(gamma=0.01, xi_G=1.0, xi_C=1.0, beta=2.0), 1.0, 1.0, 1, 0.01, 1.0)
    rep = bounds_ftcl1(c, 100.0, 0.01, 1.0)
    assert rep.b_theta == pytest.approx(quadratic_radius(c.a, c.b_u, c.c))
    assert rep.b_theta > 0


def test_bounds_ftcl1_inadmissible_rate_not_evaluated():
    c = theorem1_constants(unit_hp(gamma=1.0), 1.0, 1.0, 1)
    rep = bounds_ftcl1(c, 1.0, 0.0, 1.0)
    assert not rep.gamma_admissible and rep.K1_star is None and rep.notes


def test_bounds_ftcl2_zero_noise_and_root():
    c = theorem2_constants(HyperParams(gamma=0.2, xi_G=1.0, xi_C=1.0, gamma1=0.5), 1, 1.0, 1.0, 1, 0.0)
    assert c.b_prime == 0.0 and c.c_prime == 0.0
    rep = bounds_ftcl2(c, 3.0, 0.5, 1.0)
    assert rep.b_theta == 0.0 and rep.K1_star >= 1
    assert power_root(1.0, 0.5, 0.5, 1.0) == pytest.approx(1.0, abs=1e-9)


def test_bounds_ftcl2_attractivity_branch():
    consts = Theorem2Constants(2.0, 4.0, 1.0, 0.5, 0.5, 0.5, 0.25, 1.0, 0.5, True)
    rep = bounds_ftcl2(consts, 10.0, 1.0, 2.0)
    assert rep.b_theta == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5), st.floats(0.0, 5), st.floats(0.001, 5), st.floats(0.05, 1.0))
def test_power_root_matches_scan(a, b, c, g1):
    assert power_root(a, b, c, g1) == pytest.approx(scan_root(a, b, c, g1, points=20_001), rel=1e-12, abs=1e-9)


def test_monitor_no_violation_at_zero():
    c = theorem1_constants(unit_hp(), 1.0, 1.0, 1)
    assert monitor_decrease([0, 1, 2], [0.0, 0.0, 0.0], c, "FTCL1") == []


def test_monitor_flags_increase():
    c = theorem1_constants(unit_hp(), 1.0, 1.0, 1)
    v = monitor_decrease([0, 1], [1.0, 1.0], c, "FTCL1")
    assert len(v) == 1 and v[0].k == 1 and v[0].slack < 0


def test_eta_premise():
    assert eta_premise_failures([1, 2], [0.1, 5.0], 1.0, 1.0, 1, 0.0) == [1]
