"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test prints a single ``PASS``/``FAIL`` line (also repeated in the
terminal summary).  Criteria that the configured experiment cannot meet are
left failing on purpose.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ftcl import dynamics as dyn
from ftcl.bench import example1_config, example2_config, run_experiment, write_outputs
from ftcl.estimators import EstimatorState, HyperParams, Method, step_estimator
from ftcl.filtering import FilterConfig, FilterState, NormalizedSample, filter_step, normalize
from ftcl.analysis import power_root
from ftcl.history import HistoryStack, eig_extremes, record

from oracles import charpoly_3, poly_roots_by_scan

REFERENCE_IAE = {
    "example1": {"FTCL2": (28.46, 54.90), "FTCL1": (33.15, 72.59), "CL": (51.31, 113.17), "GD": (152.39, 645.29)},
    "example2": {"FTCL2": (184.39, 235.23), "FTCL1": (170.28, 247.60), "CL": (234.62, 269.86), "GD": (635.87, 675.81)},
}


def report(num, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num:>2}: {detail}"
    ACCEPTANCE_LINES[num] = line
    print(line)
    assert ok, line


def test_c01_filter_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for c in (-0.9, 0.0, 0.5, 0.9):
        cfg = FilterConfig(c)
        powers = c ** np.arange(201)
        for _ in range(50):
            zs = rng.normal(size=(200, 3))
            xs = rng.normal(size=(200, 1))
            st = FilterState.initial(np.zeros(1), 3)
            for z, x in zip(zs, xs):
                st = filter_step(st, cfg, z, x)
            d = powers[199::-1] @ zs  # sum_h c^(K-h-1) z(h)
            l = powers[200:0:-1] @ xs  # sum_h c^(K-h) x(h)
            worst = max(worst, float(np.max(np.abs(st.d - d))), float(np.max(np.abs(st.l - l))))
    elapsed = time.perf_counter() - t0
    report(1, worst < 1e-12 and elapsed < 1.0, f"filter vs closed form max err {worst:.2e} (<1e-12), {elapsed:.2f}s (<1s)")


def test_c02_pipeline_identity():
    t0 = time.perf_counter()
    cfg = example1_config()
    sys, basis, theta = dyn.example1_system(), dyn.example1_basis(), dyn.example1_theta_star()
    from ftcl.bench import excitation

    fcfg = FilterConfig(cfg.filter_pole)
    x = np.zeros(1)
    st = FilterState.initial(x, basis.dim)
    worst = 0.0
    for k in range(500):
        s = normalize(st, x)
        worst = max(worst, float(np.max(np.abs(s.x_bar - (theta.T @ s.d_bar - s.l_bar + s.ck_x0_bar)))))
        u = excitation(cfg.excitation, k)
        st = filter_step(st, fcfg, basis.regressor(x, u), x)
        x = sys.step(x, u)
    elapsed = time.perf_counter() - t0
    report(2, worst < 1e-9 and elapsed < 1.0, f"x_bar identity max residual {worst:.2e} (<1e-9), {elapsed:.2f}s (<1s)")


def first_below(norms, ks, tol):
    idx = np.nonzero(norms < tol)[0]
    return None if idx.size == 0 else int(ks[idx[0]])


def test_c03_zero_mfae_finite_time_convergence():
    t0 = time.perf_counter()
    r = run_experiment(example1_config())
    elapsed = time.perf_counter() - t0
    parts, ok = [], elapsed < 1.0
    ks = r.series("FTCL1", "k")
    for name in ("FTCL1", "FTCL2"):
        norms = r.error_norms(name)
        rep = r.bounds.get(name)
        k6 = first_below(norms, ks, 1e-6)
        k8 = first_below(norms, ks, 1e-8)
        K = None if rep is None else rep.K1_star
        # settling steps are counted from warmup completion
        within = k8 is not None and K is not None and k8 - r.warmup_step <= K
        ok &= k6 is not None and k6 < 500 and within
        parts.append(f"{name} final err {norms[-1]:.3g}, first<1e-6 at {k6}, first<1e-8 at {k8}, K1*={K}")
    parts.append(f"{elapsed:.2f}s")
    report(3, ok, "; ".join(parts))


def test_c04_lyapunov_decrease_monitor(example1_run):
    r = example1_run
    counts = {name: len(r.monitor[name]) if name in r.monitor else None for name in ("FTCL1", "FTCL2")}
    ok = all(v == 0 for v in counts.values())
    report(4, ok, f"post-warmup violations FTCL1={counts['FTCL1']} FTCL2={counts['FTCL2']} (need 0)")


def test_c05_baseline_contrast(example1_run):
    r = example1_run
    err = {name: r.terminal_error(name) for name in ("GD", "CL", "FTCL1", "FTCL2")}
    ok = err["GD"] > 0.1 and all(err[n] < 1e-3 for n in ("CL", "FTCL1", "FTCL2"))
    detail = ", ".join(f"{n}={v:.3g}" for n, v in err.items())
    report(5, ok, f"terminal errors {detail} (GD>0.1, others<1e-3)")


def test_c06_iae_ordering(example1_run, example2_run):
    ok, parts = True, []
    for key, r in (("example1", example1_run), ("example2", example2_run)):
        vals = {n: r.iae(n) for n in ("GD", "CL", "FTCL1", "FTCL2")}
        for i, label in ((0, "Ef"), (1, "Eg")):
            order = vals["FTCL1"][i] < vals["CL"][i] and vals["FTCL2"][i] < vals["CL"][i] and vals["CL"][i] < vals["GD"][i]
            factor = all(1 / 3 <= vals[n][i] / REFERENCE_IAE[key][n][i] <= 3 for n in vals)
            ok &= order and factor
            parts.append(
                f"{key} {label}: " + " ".join(f"{n}={vals[n][i]:.4g}" for n in vals)
                + f" order={'ok' if order else 'no'} x3={'ok' if factor else 'no'}"
            )
    report(6, ok, "; ".join(parts))


def test_c07_attractivity_bound(example2_run):
    r = example2_run
    ok, parts = r.b_eps_bar is not None, [f"b_eps_bar={r.b_eps_bar:.4g}"]
    ks = r.series("FTCL1", "k")
    for name in ("FTCL1", "FTCL2"):
        rep = r.bounds.get(name)
        if rep is None or rep.b_theta is None:
            ok = False
            parts.append(f"{name} no bound")
            continue
        post = ks >= rep.warmup_step
        norms = r.error_norms(name)[post]
        inside = np.nonzero(norms <= rep.b_theta)[0]
        stays = inside.size > 0 and bool(np.all(norms[inside[0]:] <= rep.b_theta))
        ok &= stays
        parts.append(f"{name} b_theta={rep.b_theta:.4g} max post-entry err={norms.max():.4g} stays={stays}")
    report(7, ok, "; ".join(parts))


def test_c08_ftcl2_degeneracy():
    rng = np.random.default_rng(808)
    dim, n = 4, 2
    stack = HistoryStack.empty(6, dim)
    theta = rng.normal(size=(dim, n))
    a = EstimatorState(theta, Method.FTCL2, HyperParams(gamma=0.2, xi_G=1.0, xi_C=0.3, gamma1=1.0), True)
    b = EstimatorState(theta, Method.CL, HyperParams(gamma=0.2, xi_G=1.0, xi_C=0.3), True)
    worst = 0.0
    for k in range(100):
        s = NormalizedSample(rng.normal(size=dim) * 0.3, rng.normal(size=n) * 0.3, rng.normal(size=n) * 0.3,
                             1.0, rng.normal(size=n) * 0.1)
        _, stack = record(stack, s, k)
        a, b = step_estimator(a, s, stack), step_estimator(b, s, stack)
        worst = max(worst, float(np.max(np.abs(a.theta_hat - b.theta_hat))))
    report(8, worst < 1e-12, f"FTCL2(gamma1=1) vs CL max diff {worst:.2e} over 100 steps (<1e-12)")


def test_c09_eigen_and_selection():
    rng = np.random.default_rng(909)
    worst = 0.0
    for n in (2, 3):
        for _ in range(50):
            A = rng.normal(size=(n, n))
            S = A @ A.T
            roots = poly_roots_by_scan(charpoly_3(S), -1e-9, np.abs(S).sum() + 1.0)
            lo, hi = eig_extremes(S)
            worst = max(worst, abs(lo - roots[0]), abs(hi - roots[-1]))
    stack = HistoryStack.empty(3, 3)
    drops = 0
    prev = None
    for k in range(10_000):
        s = NormalizedSample(rng.normal(size=3), np.zeros(1), np.zeros(1), 1.0, np.zeros(1))
        _, stack = record(stack, s, k)
        if stack.full:
            if prev is not None and stack.ratio < prev:
                drops += 1
            prev = stack.ratio
    report(9, worst < 1e-8 and drops == 0,
           f"Jacobi vs char-poly max err {worst:.2e} (<1e-8); ratio decreases over 1e4 insertions: {drops}")


def dense_scan_root(a, b, c, g1, points=1_000_000):
    p = g1 + 1.0
    hi = 1.0
    while -a * hi**p + b * hi + c > 0:
        hi *= 2.0
    s = np.linspace(0.0, hi, points)
    f = -a * s**p + b * s + c
    i = int(np.nonzero((f[:-1] > 0) & (f[1:] <= 0))[0][0])
    # linear interpolation inside the bracketing cell
    return s[i] + (s[i + 1] - s[i]) * f[i] / (f[i] - f[i + 1])


def test_c10_root_finder_oracle():
    rng = np.random.default_rng(1010)
    worst = 0.0
    for _ in range(1000):
        a = rng.uniform(0.5, 5.0)
        b = rng.uniform(0.0, 2.0)
        c = rng.uniform(0.01, 2.0)
        g1 = rng.uniform(0.1, 1.0)
        worst = max(worst, abs(power_root(a, b, c, g1) - dense_scan_root(a, b, c, g1)))
    report(10, worst < 1e-9, f"bisection vs 1e6-point scan max diff {worst:.2e} over 1e3 tuples (<1e-9)")


def test_c11_determinism(tmp_path):
    cfg = example1_config(seed=42)
    a = write_outputs(run_experiment(cfg), tmp_path / "a")
    b = write_outputs(run_experiment(cfg), tmp_path / "b")
    same = all(open(pa, "rb").read() == open(pb, "rb").read() for pa, pb in zip(a, b))
    report(11, same, f"{len(a)} output files bitwise identical across two runs: {same}")
