"""Benchmark runner: simulate a system, feed the shared filter/stack pipeline
and step GD, CL, FTCL1 and FTCL2 in lockstep on identical data."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from . import dynamics as dyn
from .analysis import (
    BoundsReport,
    BoundError,
    bounds_ftcl1,
    bounds_ftcl2,
    eta_premise_failures,
    lyapunov_V,
    monitor_decrease,
    theorem1_constants,
    theorem2_constants,
)
from .estimators import (
    EstimatorState,
    HyperParams,
    Method,
    admissible_bound,
    cl_rate,
    prediction_error,
    step_estimator,
)
from .filtering import FilterConfig, FilterState, filter_step, normalize
from .history import HistoryStack, rank_condition, record

log = logging.getLogger(__name__)


class SimulationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ExcitationSpec:
    amplitude: float = 0.1
    decay: float = 0.01
    frequencies: tuple = (0.3, 0.7, 1.1)
    # phases drawn uniformly in [0, 2 pi * phase_jitter) from the run seed
    phase_jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        vals = (self.amplitude, self.decay, self.phase_jitter) + self.frequencies
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("excitation parameters must be finite")
        if self.decay < 0:
            raise ValueError("excitation decay must be non-negative")


def excitation(spec: ExcitationSpec, k: int, m: int = 1, phases=None) -> np.ndarray:
    """``A exp(-decay k) sum_i sin(w_i k + phase_i)`` broadcast to ``m`` inputs."""
    if phases is None:
        phases = (0.0,) * len(spec.frequencies)
    s = sum(math.sin(w * k + ph) for w, ph in zip(spec.frequencies, phases))
    return np.full(m, spec.amplitude * math.exp(-spec.decay * k) * s)


# b_eps_bar may be a number, None (unknown) or "auto" (derived from the fit residual)
NoiseBound = Union[float, None, str]


@dataclass
class ExperimentConfig:
    system: str = "example1"
    basis: str = "example1"
    rbf_centers: int = 5
    rbf_spread: float = 1.2
    k0: int = 0
    kf: int = 500
    x_lo: float = 0.0
    x_hi: float = 2.0
    x0: float = 0.0
    filter_pole: float = 0.5
    stack_size: Optional[int] = None
    excitation: ExcitationSpec = field(default_factory=ExcitationSpec)
    seed: int = 0
    b_eps_bar: NoiseBound = 0.0
    eta: float = 1.0
    gamma_factor: float = 0.9
    methods: dict = field(default_factory=dict)
    out_dir: Optional[str] = None

    def validate(self) -> None:
        if self.system not in dyn.SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}")
        if self.basis not in ("example1", "rbf"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if not self.k0 < self.kf:
            raise ValueError(f"need k0 < kf, got {self.k0} >= {self.kf}")
        FilterConfig(self.filter_pole)
        dyn.DomainSpec((self.x_lo,), (self.x_hi,))
        if not 0 < self.gamma_factor < 1:
            raise ValueError("gamma_factor must lie in (0, 1)")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if isinstance(self.b_eps_bar, str) and self.b_eps_bar != "auto":
            raise ValueError(f"b_eps_bar must be a number, 'auto' or 'unknown', got {self.b_eps_bar!r}")
        if isinstance(self.b_eps_bar, float) and self.b_eps_bar < 0:
            raise ValueError("b_eps_bar must be non-negative")
        if not self.methods:
            raise ValueError("no estimators configured")
        for name, hp in self.methods.items():
            hp.validate(Method(name))


def example1_config(**overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(
        system="example1",
        basis="example1",
        x_lo=0.0,
        x_hi=2.0,
        stack_size=3,
        b_eps_bar=0.0,
        methods={
            "GD": HyperParams(gamma=0.7),
            "CL": HyperParams(xi_G=1.0, xi_C=0.3),
            "FTCL1": HyperParams(xi_G=1.0, xi_C=0.3, beta=0.3),
            "FTCL2": HyperParams(xi_G=1.0, xi_C=0.3, gamma1=0.6),
        },
    )
    return replace(cfg, **overrides)


def example2_config(**overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(
        system="example2",
        basis="rbf",
        rbf_centers=5,
        rbf_spread=1.2,
        x_lo=-2.0,
        x_hi=2.0,
        stack_size=10,
        b_eps_bar="auto",
        methods={
            "GD": HyperParams(gamma=0.8),
            "CL": HyperParams(xi_G=1.2, xi_C=0.1),
            "FTCL1": HyperParams(xi_G=1.0, xi_C=0.1, beta=0.65),
            "FTCL2": HyperParams(xi_G=1.0, xi_C=0.05, gamma1=0.7),
        },
    )
    return replace(cfg, **overrides)


PRESETS = {"example1": example1_config, "example2": example2_config}


# ---------------------------------------------------------------------------
# learning errors

class LearningErrorGrid:
    """Cached basis and truth values on the domain grid for fast E_f / E_g."""

    def __init__(self, basis: dyn.BasisSet, truth: dyn.DiscreteSystem, domain: dyn.DomainSpec):
        self.basis = basis
        X = domain.grid()
        self.Phi = np.array([basis.drift_features(x) for x in X])
        self.Chi = np.array([basis.input_features(x) for x in X])
        self.F = np.array([truth.drift(x) for x in X])
        self.G = np.array([truth.input_gain(x) for x in X])
        w = np.ones(1)
        for ax in domain.axes():
            w1 = np.full(ax.size, ax[1] - ax[0])
            w1[0] *= 0.5
            w1[-1] *= 0.5
            w = np.multiply.outer(w, w1).ravel()
        self.weights = w

    def __call__(self, theta_hat) -> tuple[float, float]:
        p = self.basis.p
        theta_hat = np.asarray(theta_hat, dtype=float)
        ef = self.F - self.Phi @ theta_hat[:p]
        eg = self.G - np.einsum("qn,iqm->inm", theta_hat[p:], self.Chi)
        ef_norm = np.sqrt(np.sum(ef * ef, axis=1))
        if eg.shape[1] == 1 or eg.shape[2] == 1:
            eg_norm = np.sqrt(np.sum(eg * eg, axis=(1, 2)))
        else:
            eg_norm = np.linalg.norm(eg, ord=2, axis=(1, 2))
        return float(self.weights @ ef_norm), float(self.weights @ eg_norm)


def learning_errors(theta_hat, basis: dyn.BasisSet, truth: dyn.DiscreteSystem, domain: dyn.DomainSpec):
    """``(E_f, E_g)``: trapezoid integrals of the f and g approximation errors."""
    E_f, E_g = LearningErrorGrid(basis, truth, domain)(theta_hat)
    return {"E_f": E_f, "E_g": E_g}


def iae(series) -> float:
    return float(np.sum(np.abs(np.asarray(series, dtype=float))))


# ---------------------------------------------------------------------------
# runner

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    theta_star: np.ndarray
    n: int
    m: int
    dim: int
    columns: list
    rows: dict
    final_theta: dict
    gammas: dict
    bounds: dict
    warmup_step: Optional[int]
    stack: HistoryStack
    b_eps_bar: Optional[float]
    eps_bar_max: float
    monitor: dict
    eta_premise: dict
    flags: list

    def series(self, method: str, column: str) -> np.ndarray:
        return self.rows[method][:, self.columns.index(column)]

    def iae(self, method: str) -> tuple[float, float]:
        return iae(self.series(method, "Ef")), iae(self.series(method, "Eg"))

    def terminal_error(self, method: str) -> float:
        return float(np.linalg.norm(self.final_theta[method] - self.theta_star, 2))

    def error_norms(self, method: str) -> np.ndarray:
        """Induced 2-norm of ``Theta~(k)`` for every logged step."""
        p = self.columns.index("theta_1")
        T = self.rows[method][:, p : p + self.dim * self.n].reshape(-1, self.dim, self.n)
        D = T - self.theta_star
        return np.array([np.linalg.norm(t, 2) for t in D])


def build_problem(cfg: ExperimentConfig):
    system = dyn.SYSTEMS[cfg.system]()
    if cfg.basis == "example1":
        basis = dyn.example1_basis()
    else:
        basis = dyn.make_rbf_basis(np.linspace(cfg.x_lo, cfg.x_hi, cfg.rbf_centers), cfg.rbf_spread, m=system.m)
    domain = dyn.DomainSpec.for_horizon((cfg.x_lo,), (cfg.x_hi,), cfg.k0, cfg.kf)
    if cfg.system == "example1" and cfg.basis == "example1":
        theta_star = dyn.example1_theta_star()
    else:
        theta_star = dyn.optimal_parameters(system, basis, domain)
    return system, basis, domain, theta_star


def resolve_noise_bound(cfg: ExperimentConfig, system, basis, domain, theta_star) -> Optional[float]:
    if cfg.b_eps_bar is None:
        return None
    if cfg.b_eps_bar == "auto":
        ef, eg = dyn.approximation_residuals(system, basis, theta_star, domain)
        u_max = abs(cfg.excitation.amplitude) * len(cfg.excitation.frequencies)
        # |eps_f(k)| <= b_eps / (1 - |c|) and n_s >= 1
        return (ef + eg * u_max) / (1.0 - abs(cfg.filter_pole))
    return float(cfg.b_eps_bar)


Observer = Callable[[str, int, object, HistoryStack], None]


def run_experiment(cfg: ExperimentConfig, observer: Optional[Observer] = None) -> ExperimentResult:
    cfg.validate()
    system, basis, domain, theta_star = build_problem(cfg)
    n, m, dim = system.n, system.m, basis.dim
    P = cfg.stack_size or dim
    fcfg = FilterConfig(cfg.filter_pole)
    grid = LearningErrorGrid(basis, system, domain)
    b_eps_bar = resolve_noise_bound(cfg, system, basis, domain, theta_star)

    rng = np.random.default_rng(cfg.seed)
    nf = len(cfg.excitation.frequencies)
    phases = 2.0 * math.pi * cfg.excitation.phase_jitter * rng.random(nf)

    x = np.full(n, float(cfg.x0))
    fstate = FilterState.initial(x, dim)
    stack = HistoryStack.empty(P, dim, require_rank_capacity=False)
    names = list(cfg.methods)
    states = {
        name: EstimatorState(np.zeros((dim, n)), Method(name), cfg.methods[name]) for name in names
    }
    columns = (
        ["k"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"u{i + 1}" for i in range(m)]
        + [f"theta_{i + 1}" for i in range(dim * n)]
        + ["e_norm", "V", "Ef", "Eg", "stack_ratio"]
    )
    rows = {name: [] for name in names}
    gammas: dict = {}
    bounds: dict = {}
    flags: list = []
    warm = False
    warmup_step = None
    post = {name: ([], []) for name in names}
    s_theta = {name: ([], []) for name in names}
    eps_bar_max = 0.0
    left_domain = False

    for k in range(cfg.k0, cfg.kf + 1):
        u = excitation(cfg.excitation, k, m, phases)
        sample = normalize(fstate, x)
        eps_bar = sample.x_bar - theta_star.T @ sample.d_bar + sample.l_bar - sample.ck_x0_bar
        eps_bar_max = max(eps_bar_max, float(np.linalg.norm(eps_bar)))
        if not left_domain and not (cfg.x_lo <= x[0] <= cfg.x_hi):
            left_domain = True
            flags.append(f"state left the approximation domain at k={k} (x={x.tolist()})")

        if not warm and stack.full:
            if rank_condition(stack):
                warm = True
                warmup_step = k
                for name in names:
                    states[name] = replace(states[name], warmup_done=True)
                _finish_warmup(cfg, states, stack, theta_star, n, P, b_eps_bar, k, gammas, bounds, flags)

        for name in names:
            st = states[name]
            e = prediction_error(st.theta_hat, sample)
            rate = _rate(st, stack, gammas)
            tt = st.theta_hat - theta_star
            V = lyapunov_V(tt, rate) if rate else math.nan
            Ef, Eg = grid(st.theta_hat)
            rows[name].append(
                [k, *x, *u, *st.theta_hat.ravel(), float(np.linalg.norm(e)), V, Ef, Eg, stack.ratio]
            )
            if warm and st.method in (Method.FTCL1, Method.FTCL2):
                post[name][0].append(k)
                post[name][1].append(V)
                s_theta[name][0].append(k)
                s_theta[name][1].append(float(np.linalg.norm(stack.S @ tt, 2)))

        if k == cfg.kf:
            break

        for name in names:
            if observer is not None:
                observer(name, k, sample, stack)
            states[name] = step_estimator(states[name], sample, stack)

        if k >= 1:
            # d(0) = 0 carries no information; recording starts at k = 1
            _, stack = record(stack, sample, k)

        z = basis.regressor(x, u)
        x_next = system.step(x, u)
        if not np.all(np.isfinite(x_next)):
            raise SimulationError(f"state became non-finite at k={k + 1}")
        fstate = filter_step(fstate, fcfg, z, x)
        x = x_next

    if not warm:
        flags.append("rank condition unmet")
        flags.append("warmup never completed; concurrent terms stayed inactive")

    monitor, eta_premise = {}, {}
    for name in names:
        method = Method(name)
        rep = bounds.get(name)
        if rep is None or rep.constants is None or not rep.gamma_admissible:
            continue
        ks, Vs = post[name]
        if b_eps_bar == 0.0:
            monitor[name] = monitor_decrease(ks, Vs, rep.constants, method.value)
        if method is Method.FTCL1:
            hp = states[name].hp
            eta_premise[name] = eta_premise_failures(
                s_theta[name][0], s_theta[name][1], cfg.eta, hp.beta, P, b_eps_bar or 0.0
            )

    return ExperimentResult(
        config=cfg,
        theta_star=theta_star,
        n=n,
        m=m,
        dim=dim,
        columns=columns,
        rows={name: np.array(r, dtype=float) for name, r in rows.items()},
        final_theta={name: st.theta_hat for name, st in states.items()},
        gammas=gammas,
        bounds=bounds,
        warmup_step=warmup_step,
        stack=stack,
        b_eps_bar=b_eps_bar,
        eps_bar_max=eps_bar_max,
        monitor=monitor,
        eta_premise=eta_premise,
        flags=flags,
    )


def _rate(st: EstimatorState, stack: HistoryStack, gammas: dict) -> Optional[float]:
    if st.method is Method.GD:
        return st.hp.gamma
    if st.method is Method.CL:
        return cl_rate(st, stack)
    return st.hp.gamma


def _finish_warmup(cfg, states, stack, theta_star, n, P, b_eps_bar, k, gammas, bounds, flags):
    """Fix the FTCL rates and evaluate the finite-time bounds at warmup completion."""
    lmin, lmax = stack.lam_min, stack.lam_max
    for name, st in states.items():
        method = st.method
        if method is Method.CL:
            gammas[name] = cl_rate(st, stack)
            continue
        if method is Method.GD:
            gammas[name] = st.hp.gamma
            continue
        bound = admissible_bound(method, st.hp, n, lmin, lmax)
        hp = st.hp
        if hp.gamma is None:
            hp = replace(hp, gamma=cfg.gamma_factor * bound)
            states[name] = replace(st, hp=hp)
        gammas[name] = hp.gamma
        tt = st.theta_hat - theta_star
        V0 = lyapunov_V(tt, hp.gamma)
        t0 = float(np.linalg.norm(tt, 2))
        try:
            if method is Method.FTCL1:
                consts = theorem1_constants(hp, lmin, lmax, P, b_eps_bar or 0.0, cfg.eta)
                rep = bounds_ftcl1(consts, V0, b_eps_bar or 0.0, t0)
                if b_eps_bar is None:
                    rep.b_eps_bar = None
                    rep.K1_star = rep.K2_star = rep.b_theta = None
                    rep.notes.append("beta constraint unverifiable: b_eps_bar unknown")
                elif not hp.beta > P * b_eps_bar:
                    rep.notes.append(f"beta={hp.beta} violates beta > P*b_eps_bar={P * b_eps_bar}")
            else:
                consts = theorem2_constants(hp, n, lmin, lmax, P, b_eps_bar or 0.0)
                rep = bounds_ftcl2(consts, V0, hp.gamma1, t0)
                rep.b_eps_bar = b_eps_bar
                if b_eps_bar is None:
                    rep.K1_star = rep.K2_star = rep.b_theta = None
                    rep.notes.append("b_eps_bar unknown: attractivity bound not evaluated")
        except BoundError as exc:
            rep = BoundsReport(method.value, hp.gamma, bound, hp.gamma < bound, V0, t0, b_eps_bar)
            rep.notes.append(f"bound evaluation failed: {exc}")
        rep.warmup_step = k
        bounds[name] = rep
        log.info("%s: gamma=%.6g (bound %.6g) at k=%d", name, hp.gamma, bound, k)


# ---------------------------------------------------------------------------
# output

def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(result: ExperimentResult, method: str, path) -> None:
    data = result.rows[method]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(result.columns) + "\n")
        for row in data:
            fh.write(",".join([str(int(row[0]))] + [repr(float(v)) for v in row[1:]]) + "\n")


def summary_text(result: ExperimentResult) -> str:
    lines = [f"system={result.config.system}", f"warmup_step={result.warmup_step}"]
    lines.append(f"b_eps_bar={'unknown' if result.b_eps_bar is None else repr(result.b_eps_bar)}")
    lines.append(f"eps_bar_observed_max={result.eps_bar_max!r}")
    lines.append(f"final_stack_ratio={result.stack.ratio!r}")
    lines.append("")
    lines.append("[iae]")
    lines.append(f"{'method':<8}{'IAE_Ef':>16}{'IAE_Eg':>16}{'terminal_err':>16}")
    for name in result.rows:
        ef, eg = result.iae(name)
        lines.append(f"{name:<8}{ef:>16.6g}{eg:>16.6g}{result.terminal_error(name):>16.6g}")
    lines.append("")
    lines.append("[rates]")
    for name, g in result.gammas.items():
        lines.append(f"{name}.gamma={g!r}")
    for name, rep in result.bounds.items():
        lines.append("")
        lines.append(f"[bounds.{name}]")
        lines.append(rep.to_text())
    for name, viol in result.monitor.items():
        lines.append("")
        lines.append(f"[monitor.{name}]")
        lines.append(f"violations={len(viol)}")
        for v in viol[:20]:
            lines.append(f"violation k={v.k} dV={v.delta_V!r} allowed={v.allowed!r}")
    for name, fails in result.eta_premise.items():
        lines.append("")
        lines.append(f"[eta_premise.{name}]")
        lines.append(f"failures={len(fails)}")
        if fails:
            lines.append(f"first_failure_k={fails[0]}")
    if result.flags:
        lines.append("")
        lines.append("[flags]")
        lines += [f"flag={f}" for f in result.flags]
    return "\n".join(lines) + "\n"


def write_outputs(result: ExperimentResult, out_dir) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in result.rows:
        path = os.path.join(out_dir, f"{name}.csv")
        write_csv(result, name, path)
        written.append(path)
    path = os.path.join(out_dir, "summary.txt")
    with open(path, "w") as fh:
        fh.write(summary_text(result))
    written.append(path)
    path = os.path.join(out_dir, "stack.csv")
    result.stack.to_csv(path)
    written.append(path)
    return written
