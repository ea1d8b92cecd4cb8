"""Checks on integrator order, reversibility and sampling correctness."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .hmc import (
    HmcConfig,
    Phase,
    TRAJECTORY_EXP_CONFIG,
    hamiltonian,
    hmc_run,
    integrate,
    Chain,
)
from .matexp import (
    DegenerateEigenvalueError,
    ExpConfig,
    SchurConvergenceError,
    exp_dispatch,
    exp_projector_son,
    exp_rodrigues_so3,
    exp_scale_square,
    exp_schur_parlett,
)
from .potentials import Potential
from .spaces import HomogeneousSpaceSpec, get_space

#: r^2 below which a log-log slope is reported as unreliable.
MIN_R_SQUARED = 0.98
#: Values at or below this are rounding noise and cannot support a fit.
NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def linear_fit(x, y) -> LinearFit:
    """Least-squares line through ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(x) != len(y):
        raise ValueError("need at least two paired points")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return LinearFit(float(slope), float(intercept), r2)


@dataclass
class ScalingReport:
    """Log-log fit of an energy-error statistic against the integration step.

    ``step_sizes`` are the steps actually integrated (``tau / n_steps``);
    ``nominal_step_sizes`` are the requested ones.
    """

    quantity: str
    step_sizes: list[float]
    nominal_step_sizes: list[float]
    values: list[float]
    fitted_slope: float
    intercept: float
    r_squared: float
    reliable: bool
    mean_exp_minus_dh: list[float] = field(default_factory=list)
    exp_minus_dh_stderr: list[float] = field(default_factory=list)
    acceptance_rate: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.step_sizes) < 3 or len(self.values) != len(self.step_sizes):
            raise ValueError("a scaling report needs >= 3 step sizes with one value each")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _fit_report(quantity, configs: list[HmcConfig], values, **extra) -> ScalingReport:
    steps = [c.step for c in configs]
    vals = np.asarray(values, dtype=float)
    usable = bool(np.all(np.isfinite(vals)) and np.all(vals > NOISE_FLOOR))
    fit = linear_fit(np.log(steps), np.log(np.maximum(np.nan_to_num(vals, posinf=1e300), 1e-300)))
    return ScalingReport(
        quantity=quantity,
        step_sizes=steps,
        nominal_step_sizes=[c.dt for c in configs],
        values=[float(v) for v in vals],
        fitted_slope=fit.slope,
        intercept=fit.intercept,
        r_squared=fit.r_squared,
        reliable=usable and fit.r_squared >= MIN_R_SQUARED,
        **extra,
    )


def _check_steps(step_sizes) -> list[float]:
    steps = [float(s) for s in step_sizes]
    if len(steps) < 3:
        raise ValueError(f"a slope fit needs at least 3 step sizes, got {len(steps)}")
    if len(set(steps)) != len(steps):
        raise ValueError("step sizes must be distinct")
    return steps


def initial_momentum(spec: HomogeneousSpaceSpec, rng: np.random.Generator) -> np.ndarray:
    """Momentum with the Gibbs scale ``1 / sqrt(2 |lambda_j|)``; usable on every space."""
    return rng.standard_normal(spec.dim_p) * np.sqrt(0.5 / np.abs(spec.kinetic_eigenvalues))


def dh_scaling_study(
    spec: HomogeneousSpaceSpec,
    potential: Potential,
    tau: float,
    step_sizes,
    integrator: str = "leapfrog",
    seed: int = 0,
    exp_config: ExpConfig = TRAJECTORY_EXP_CONFIG,
) -> ScalingReport:
    """``|dH|`` of one trajectory from a fixed seeded phase, per step size, and its log-log slope."""
    steps = _check_steps(step_sizes)
    rng = np.random.default_rng(seed)
    start = Phase(np.eye(spec.n), initial_momentum(spec, rng))
    h0 = hamiltonian(start, potential, spec)
    configs, values = [], []
    for dt in steps:
        cfg = HmcConfig(dt=dt, tau=tau, integrator=integrator, seed=seed, exp=exp_config)
        end = integrate(start, potential, spec, cfg)
        configs.append(cfg)
        values.append(abs(hamiltonian(end, potential, spec) - h0))
    return _fit_report("mean_abs_dh", configs, values)


def batch_means(x, n_batches: int | None = None) -> tuple[float, float]:
    """Mean and batch-means standard error, ``floor(sqrt(n))`` batches by default."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        raise ValueError("batch means needs at least 4 values")
    b = n_batches or int(math.isqrt(n))
    m = n // b
    means = x[: b * m].reshape(b, m).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(b))


def mean_dh2_scaling(
    spec: HomogeneousSpaceSpec,
    potential: Potential,
    tau: float,
    step_sizes,
    n_samples: int,
    seed: int = 0,
    integrator: str = "leapfrog",
    exp_config: ExpConfig = TRAJECTORY_EXP_CONFIG,
) -> ScalingReport:
    """Full HMC chains per step size; fits ``log <dH^2>`` against ``log dt``.

    Also records ``<exp(-dH)>`` and its batch-means error at every step size.
    """
    steps = _check_steps(step_sizes)
    configs, values, emd, emd_se, acc = [], [], [], [], []
    for dt in steps:
        cfg = HmcConfig(dt=dt, tau=tau, n_samples=n_samples, seed=seed, integrator=integrator, exp=exp_config)
        chain = hmc_run(cfg, spec, potential)
        configs.append(cfg)
        values.append(float(np.mean(chain.delta_h**2)))
        m, se = batch_means(chain.exp_minus_dh)
        emd.append(m)
        emd_se.append(se)
        acc.append(chain.acceptance_rate)
    return _fit_report(
        "mean_dh2", configs, values, mean_exp_minus_dh=emd, exp_minus_dh_stderr=emd_se, acceptance_rate=acc
    )


def reversibility_check(
    spec: HomogeneousSpaceSpec,
    potential: Potential,
    dt: float,
    tau: float,
    n_trials: int,
    seed: int = 0,
    integrator: str = "leapfrog",
    reproject_every: int = 1,
    exp_config: ExpConfig = TRAJECTORY_EXP_CONFIG,
) -> float:
    """Largest entrywise deviation of ``flip . integrate . flip . integrate`` from the identity."""
    cfg = HmcConfig(
        dt=dt, tau=tau, integrator=integrator, reproject_every=reproject_every, exp=exp_config
    )
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_trials):
        start = Phase(np.eye(spec.n), initial_momentum(spec, rng))
        fwd = integrate(start, potential, spec, cfg)
        back = integrate(fwd.flipped(), potential, spec, cfg).flipped()
        worst = max(worst, float(np.max(np.abs(back.Q - start.Q))), float(np.max(np.abs(back.p - start.p))))
    return worst


@dataclass(frozen=True)
class Moment:
    value: float
    stderr: float
    target: float

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == self.target else math.inf
        return (self.value - self.target) / self.stderr


@dataclass
class ChainSummary:
    n: int
    acceptance_rate: float
    mean_exp_minus_dh: float
    stderr: float
    moments: dict[str, Moment] = field(default_factory=dict)
    n_sigma: float = 4.0

    def __post_init__(self):
        if not (0.0 <= self.acceptance_rate <= 1.0 or math.isnan(self.acceptance_rate)):
            raise ValueError("acceptance rate must lie in [0, 1]")

    @property
    def failures(self) -> list[str]:
        return [k for k, m in self.moments.items() if abs(m.z) > self.n_sigma]

    @property
    def passed(self) -> bool:
        return not self.failures


def summarize_chain(chain: Chain) -> ChainSummary:
    m, se = batch_means(chain.exp_minus_dh)
    return ChainSummary(len(chain), chain.acceptance_rate, m, se)


def uniform_sphere_moment_check(chain: Chain | np.ndarray, n_sigma: float = 4.0) -> ChainSummary:
    """Compare first and second coordinate moments with the uniform measure on S^2.

    Targets are ``E[x_i] = 0`` and ``E[x_i^2] = 1/3``; errors come from batch
    means so autocorrelation is accounted for.  Accepts a :class:`Chain` or a
    bare ``(N, 3)`` array of points.
    """
    if isinstance(chain, Chain):
        pts = chain.points
        summary = summarize_chain(chain)
    else:
        pts = np.asarray(chain, dtype=float)
        summary = ChainSummary(len(pts), math.nan, math.nan, math.nan)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("expected points on S^2 with shape (N, 3)")
    summary.n_sigma = n_sigma
    for i, name in enumerate("xyz"):
        summary.moments[f"E[{name}]"] = Moment(*batch_means(pts[:, i]), 0.0)
        summary.moments[f"E[{name}^2]"] = Moment(*batch_means(pts[:, i] ** 2), 1.0 / 3.0)
    return summary


# -- matrix exponential cross-validation -----------------------------------


def series_exp_oracle(A, degree: int = 40) -> np.ndarray:
    """Plain Taylor series of ``exp(A / 2^s)`` to ``degree`` terms, squared ``s`` times.

    ``s`` is chosen so that ``||A / 2^s||_F <= 1/2``; independent of every
    routine in :mod:`liehmc.matexp`.
    """
    A = np.asarray(A, dtype=float)
    norm = float(np.linalg.norm(A))
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    B = A / 2.0**s
    n = A.shape[0]
    out = np.eye(n)
    term = np.eye(n)
    for k in range(1, degree + 1):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def _random_algebra(kind: str, rng: np.random.Generator, max_norm: float) -> np.ndarray:
    if kind in ("so3", "so5"):
        n = 3 if kind == "so3" else 5
        X = rng.standard_normal((n, n))
        A = X - X.T
    else:
        spec = get_space(kind)
        A = spec.momentum_matrix(rng.standard_normal(spec.dim_p))
    return A * (max_norm * rng.uniform() / max(np.linalg.norm(A, 2), 1e-300))


def applicable_strategies(kind: str) -> list[str]:
    out = ["scale_square", "schur_parlett", "dispatch"]
    if kind == "so3":
        out.append("rodrigues")
    if kind == "so5":
        out.append("projector")
    return out


def _run_strategy(name: str, A: np.ndarray, config: ExpConfig) -> np.ndarray | None:
    try:
        if name == "scale_square":
            return exp_scale_square(A, config)
        if name == "schur_parlett":
            return exp_schur_parlett(A)
        if name == "rodrigues":
            return exp_rodrigues_so3(A)
        if name == "projector":
            return exp_projector_son(A)
        if name == "dispatch":
            return exp_dispatch(A, config)
    except (DegenerateEigenvalueError, SchurConvergenceError):
        return None
    raise ValueError(f"unknown strategy {name!r}")


@dataclass
class CrossValidationReport:
    max_pairwise_error: float
    max_oracle_error: dict[str, dict[str, float]]
    skipped: dict[str, dict[str, int]]
    timings: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


ALGEBRA_KINDS = ("so3", "so5", "h2-twosheet", "h2-onesheet")


def exp_cross_validation(
    kinds=ALGEBRA_KINDS,
    n_random: int = 100,
    seed: int = 0,
    max_norm: float = 5.0,
    config: ExpConfig = ExpConfig(),
) -> CrossValidationReport:
    """Run every applicable exponential strategy on random algebra elements.

    ``kinds`` are ``"so3"``, ``"so5"`` or a registered space name (whose
    horizontal subspace is sampled).  Errors are relative to the spectral
    size of the oracle result, ``max |F - F_oracle| / max(1, max |F_oracle|)``.
    """
    rng = np.random.default_rng(seed)
    pairwise = 0.0
    oracle_err: dict[str, dict[str, float]] = {}
    skipped: dict[str, dict[str, int]] = {}
    timings: dict[str, dict[str, float]] = {}
    for kind in kinds:
        names = applicable_strategies(kind)
        oracle_err[kind] = dict.fromkeys(names, 0.0)
        skipped[kind] = dict.fromkeys(names, 0)
        timings[kind] = dict.fromkeys(names, 0.0)
        for _ in range(n_random):
            A = _random_algebra(kind, rng, max_norm)
            ref = series_exp_oracle(A)
            scale = max(1.0, float(np.max(np.abs(ref))))
            results = {}
            for name in names:
                t0 = time.perf_counter()
                F = _run_strategy(name, A, config)
                timings[kind][name] += time.perf_counter() - t0
                if F is None:
                    skipped[kind][name] += 1
                    continue
                results[name] = F
                err = float(np.max(np.abs(F - ref))) / scale
                oracle_err[kind][name] = max(oracle_err[kind][name], err)
            vals = list(results.values())
            for i in range(len(vals)):
                for j in range(i + 1, len(vals)):
                    pairwise = max(pairwise, float(np.max(np.abs(vals[i] - vals[j]))) / scale)
    return CrossValidationReport(pairwise, oracle_err, skipped, timings)


@dataclass(frozen=True)
class BenchRow:
    kind: str
    norm: float
    strategy: str
    n: int
    seconds_per_call: float
    max_error: float
    skipped: int


def exp_benchmark(
    kinds=ALGEBRA_KINDS,
    norms=(0.0, 0.5, 2.0, 10.0),
    n_random: int = 50,
    seed: int = 0,
    config: ExpConfig = ExpConfig(),
) -> list[BenchRow]:
    """Time every applicable strategy and measure its error against :func:`series_exp_oracle`.

    Samples have spectral norm exactly ``norm``; errors are relative as in
    :func:`exp_cross_validation`.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for kind in kinds:
        names = applicable_strategies(kind)
        for norm in norms:
            mats = []
            for _ in range(n_random):
                A = _random_algebra(kind, rng, 1.0)
                s = np.linalg.norm(A, 2)
                mats.append(A * (norm / s) if s > 0 else A)
            refs = [series_exp_oracle(A) for A in mats]
            for name in names:
                err, skipped, elapsed = 0.0, 0, 0.0
                for A, ref in zip(mats, refs):
                    t0 = time.perf_counter()
                    F = _run_strategy(name, A, config)
                    elapsed += time.perf_counter() - t0
                    if F is None:
                        skipped += 1
                        continue
                    err = max(err, float(np.max(np.abs(F - ref))) / max(1.0, float(np.max(np.abs(ref)))))
                rows.append(BenchRow(kind, float(norm), name, n_random, elapsed / n_random, err, skipped))
    return rows


def speed_ratio(rows: list[BenchRow], kind: str, fast: str, slow: str) -> float:
    """Total time of ``slow`` over total time of ``fast`` for one algebra kind."""
    t_fast = sum(r.seconds_per_call for r in rows if r.kind == kind and r.strategy == fast)
    t_slow = sum(r.seconds_per_call for r in rows if r.kind == kind and r.strategy == slow)
    return t_slow / t_fast if t_fast > 0 else math.inf
