"""Hamiltonian Monte Carlo on a homogeneous space, integrated on the group.

The state is a group element ``Q`` together with horizontal momentum
coefficients ``p``; the momentum matrix is ``P = sum_j p_j T_j`` with ``T_j``
the ``p`` generators of the space, so the component along the stabiliser
algebra is zero by construction.

Conventions
-----------
Kinetic energy is ``K(p) = sum_j lambda_j p_j**2``.  Its gradient raised with
the generator metric gives the position flow ``dQ/dt = Q V`` with velocity
``V = sum_j 2 lambda_j p_j T_j`` (equal to ``P`` when ``lambda_j = 1/2``).
The momentum flow is ``dp_j/dt = -e_j(U)``, the derivative of the potential
along the right-invariant direction ``Q -> Q exp(s T_j)``.  For a potential
``U(Q) = f(Q p0)`` this is ``grad f(y) . (Q T_j p0)``, i.e.
``tr(dV Q T_j)`` with the lifted gradient ``dV = outer(p0, grad f)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .linalg import DegenerateRowError, gram_schmidt_project
from .matexp import ExpConfig, exp_dispatch
from .potentials import Potential
from .spaces import HomogeneousSpaceSpec

#: Fourth-order triple-jump weights (Creutz-Gocksch / Yoshida / Campostrini).
CAMPOSTRINI_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
CAMPOSTRINI_W0 = -(2.0 ** (1.0 / 3.0)) / (2.0 - 2.0 ** (1.0 / 3.0))

#: Exponential settings for trajectories.  Truncation error of the Taylor
#: route breaks ``exp(A) exp(-A) = I`` at the level of ``target_accuracy``,
#: which shows up directly in reversibility on the hyperboloids.
TRAJECTORY_EXP_CONFIG = ExpConfig(target_accuracy=1e-12)

INTEGRATORS = ("leapfrog", "campostrini")
POSITION_STEPS = ("exact", "split_normal")


class CapabilityError(RuntimeError):
    """The requested operation is not available on this space."""


class DivergenceError(ArithmeticError):
    """The integrator produced non-finite momenta or positions."""


@dataclass(frozen=True)
class Phase:
    """Group element ``Q`` and horizontal momentum coefficients ``p``."""

    Q: np.ndarray
    p: np.ndarray

    def momentum_matrix(self, spec: HomogeneousSpaceSpec) -> np.ndarray:
        return spec.momentum_matrix(self.p)

    def flipped(self) -> "Phase":
        return Phase(self.Q, -self.p)


@dataclass(frozen=True)
class HmcConfig:
    dt: float = 0.1
    tau: float = 1.0
    n_samples: int = 1000
    seed: int = 0
    integrator: str = "leapfrog"
    randomize_length: bool = False
    reproject_every: int = 1
    position_step: str = "exact"
    exp: ExpConfig = TRAJECTORY_EXP_CONFIG

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be a positive finite number, got {self.dt}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be a positive finite number, got {self.tau}")
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.position_step not in POSITION_STEPS:
            raise ValueError(f"position_step must be one of {POSITION_STEPS}")
        if self.reproject_every < 0:
            raise ValueError("reproject_every must be >= 0 (0 disables reprojection)")
        if self.n_steps < 1:
            raise ValueError(f"tau/dt = {self.tau / self.dt:.3g} rounds to zero steps")

    @property
    def n_steps(self) -> int:
        # round half up: tau=0.25, dt=0.1 gives 3 steps
        return int(math.floor(self.tau / self.dt + 0.5 + 1e-9))

    @property
    def step(self) -> float:
        """Step actually integrated, ``tau / n_steps``, so trajectories have length exactly ``tau``."""
        return self.tau / self.n_steps


@dataclass(frozen=True)
class TrajectoryStats:
    delta_h: float
    accepted: bool
    h_initial: float
    h_final: float
    n_steps: int = 0


@dataclass
class Chain:
    """Samples ``points[i] = Q_i p0`` with per-trajectory energy errors."""

    points: np.ndarray
    delta_h: np.ndarray
    accepted: np.ndarray
    seed: int
    config: HmcConfig
    space: str
    final_Q: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.delta_h)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self) else float("nan")

    @property
    def exp_minus_dh(self) -> np.ndarray:
        return np.exp(-self.delta_h)


# -- energy and force -------------------------------------------------------


def lifted_gradient(Q, potential: Potential, spec: HomogeneousSpaceSpec) -> np.ndarray:
    """``dV[a, b] = p0[a] * grad f(Q p0)[b]``, the matrix derivative of ``f(x p0)`` transposed."""
    y = np.asarray(Q) @ spec.base_point
    return np.outer(spec.base_point, np.asarray(potential.grad(y), dtype=float))


def hamiltonian(phase: Phase, potential: Potential, spec: HomogeneousSpaceSpec) -> float:
    return spec.kinetic_energy(phase.p) + float(potential.fn(phase.Q @ spec.base_point))


def _contract(dV: np.ndarray, Q: np.ndarray, gens: np.ndarray) -> np.ndarray:
    # tr(dV Q T_j) for every generator in the stack
    return np.einsum("ab,jba->j", dV @ Q, gens)


def force(Q, potential: Potential, spec: HomogeneousSpaceSpec) -> np.ndarray:
    """Rate of change ``dp_j/dt = -tr(dV Q T_j)`` of the momentum coefficients."""
    return -_contract(lifted_gradient(Q, potential, spec), np.asarray(Q), spec.p_stack)


def algebra_force(Q, potential: Potential, spec: HomogeneousSpaceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Force components along the ``k`` and ``p`` generators.

    The ``k`` part vanishes for any potential that depends on ``Q`` only
    through ``Q p0``; it is returned so callers can verify that.
    """
    dV = lifted_gradient(Q, potential, spec)
    Q = np.asarray(Q)
    return -_contract(dV, Q, spec.k_stack), -_contract(dV, Q, spec.p_stack)


def force_matrix(Q, potential: Potential, spec: HomogeneousSpaceSpec) -> np.ndarray:
    """The force as an element of ``p``: ``sum_j F_j T_j``."""
    return spec.momentum_matrix(force(Q, potential, spec))


# -- elementary steps -------------------------------------------------------


def vhat_step(eps: float, phase: Phase, potential: Potential, spec: HomogeneousSpaceSpec) -> Phase:
    """Momentum update ``p <- p + eps * force(Q)``."""
    return Phase(phase.Q, phase.p + eps * force(phase.Q, potential, spec))


def reproject_group(Q: np.ndarray, spec: HomogeneousSpaceSpec) -> np.ndarray:
    """Restore ``Q^T M Q = M`` by Gram-Schmidt on the columns of ``Q``.

    Columns rather than rows: the two conditions agree in exact arithmetic,
    but for non-compact groups a row residual ``r`` becomes a column residual
    of order ``r * cond(Q)``.  Column 1 (the manifold point for ``p0 = e1``) is
    only rescaled.
    """
    return gram_schmidt_project(Q.T, spec.invariant_form).T


def that_step(
    eps: float,
    phase: Phase,
    spec: HomogeneousSpaceSpec,
    exp_config: ExpConfig = TRAJECTORY_EXP_CONFIG,
    reproject: bool = True,
) -> Phase:
    """Position update ``Q <- Q exp(eps V)`` followed by reprojection onto the group."""
    V = spec.velocity_matrix(phase.p)
    Q = phase.Q @ exp_dispatch(eps * V, exp_config, spec.p_structure)
    if reproject:
        Q = reproject_group(Q, spec)
    return Phase(Q, phase.p)


def split_normal_that_step(
    eps: float,
    phase: Phase,
    spec: HomogeneousSpaceSpec,
    exp_config: ExpConfig = TRAJECTORY_EXP_CONFIG,
    reproject: bool = True,
) -> Phase:
    """Position update with ``exp(eps (S + A))`` replaced by ``exp(eps A/2) exp(eps S) exp(eps A/2)``.

    ``S`` and ``A`` are the symmetric and antisymmetric parts of the velocity;
    each factor is a normal matrix.  The local error is ``O(eps**3)``.
    """
    if not spec.has_normal_split:
        raise CapabilityError(f"space {spec.name!r} has no symmetric/antisymmetric generator split")
    V = spec.velocity_matrix(phase.p)
    S = 0.5 * (V + V.T)
    A = 0.5 * (V - V.T)
    if not np.any(S) or not np.any(A):
        return that_step(eps, phase, spec, exp_config, reproject)
    half = exp_dispatch(0.5 * eps * A, exp_config)
    Q = phase.Q @ half @ exp_dispatch(eps * S, exp_config) @ half
    if reproject:
        Q = reproject_group(Q, spec)
    return Phase(Q, phase.p)


# -- trajectories -----------------------------------------------------------


def _leapfrog_schedule(dt: float, n_steps: int) -> list[tuple[str, float]]:
    return [("V", 0.5 * dt), ("T", dt), ("V", 0.5 * dt)] * n_steps


def _campostrini_schedule(dt: float, n_steps: int) -> list[tuple[str, float]]:
    one = (
        _leapfrog_schedule(CAMPOSTRINI_W1 * dt, 1)
        + _leapfrog_schedule(CAMPOSTRINI_W0 * dt, 1)
        + _leapfrog_schedule(CAMPOSTRINI_W1 * dt, 1)
    )
    return one * n_steps


def _fuse(schedule: list[tuple[str, float]]) -> list[tuple[str, float]]:
    out: list[tuple[str, float]] = []
    for kind, eps in schedule:
        if out and kind == "V" and out[-1][0] == "V":
            out[-1] = ("V", out[-1][1] + eps)
        else:
            out.append((kind, eps))
    return out


def integrate(
    phase: Phase,
    potential: Potential,
    spec: HomogeneousSpaceSpec,
    config: HmcConfig,
    n_steps: int | None = None,
    integrator: str | None = None,
) -> Phase:
    """Run ``n_steps`` steps (default ``config.n_steps``) of size ``config.step``."""
    n_steps = config.n_steps if n_steps is None else int(n_steps)
    integrator = integrator or config.integrator
    h = config.step
    if integrator == "leapfrog":
        schedule = _leapfrog_schedule(h, n_steps)
    elif integrator == "campostrini":
        schedule = _campostrini_schedule(h, n_steps)
    else:
        raise ValueError(f"unknown integrator {integrator!r}")
    position = split_normal_that_step if config.position_step == "split_normal" else that_step
    every = config.reproject_every
    n_t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for kind, eps in _fuse(schedule):
            if kind == "V":
                try:
                    phase = vhat_step(eps, phase, potential, spec)
                except OverflowError as exc:
                    raise DivergenceError(f"force overflow after {n_t} position steps") from exc
                if not np.all(np.isfinite(phase.p)):
                    raise DivergenceError(f"non-finite momentum after {n_t} position steps")
            else:
                n_t += 1
                phase = position(eps, phase, spec, config.exp, every > 0 and n_t % every == 0)
    return phase


def leapfrog_trajectory(phase, potential, spec, config: HmcConfig, n_steps: int | None = None) -> Phase:
    """``V(dt/2) [T(dt) V(dt)]^(L-1) T(dt) V(dt/2)``."""
    return integrate(phase, potential, spec, config, n_steps, "leapfrog")


def campostrini_trajectory(phase, potential, spec, config: HmcConfig, n_steps: int | None = None) -> Phase:
    """Leapfrog steps of ``w1 dt, w0 dt, w1 dt`` composed; fourth order and symmetric."""
    return integrate(phase, potential, spec, config, n_steps, "campostrini")


def trajectory_length(config: HmcConfig, rng: np.random.Generator) -> int:
    L = config.n_steps
    if config.randomize_length:
        return int(rng.integers(math.ceil(L / 2), L + 1))
    return L


# -- Markov chain -----------------------------------------------------------


def _require_riemannian(spec: HomogeneousSpaceSpec) -> None:
    if not spec.riemannian:
        raise CapabilityError(
            f"space {spec.name!r} has an indefinite (pseudo-Riemannian) kinetic form: "
            "exp(-K) is not normalisable, so momenta cannot be refreshed; "
            "only trajectory/geodesic integration is available"
        )


def gibbs_momentum(spec: HomogeneousSpaceSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw ``p_j ~ N(0, 1 / (2 lambda_j))``."""
    _require_riemannian(spec)
    return rng.standard_normal(spec.dim_p) * np.sqrt(0.5 / spec.kinetic_eigenvalues)


def metropolis(
    rng: np.random.Generator,
    phase0: Phase,
    phase1: Phase,
    potential: Potential,
    spec: HomogeneousSpaceSpec,
) -> tuple[Phase, TrajectoryStats]:
    """Accept ``phase1`` iff ``u <= exp(-dH)`` for ``u ~ U[0, 1)``; a uniform is always drawn."""
    h0 = hamiltonian(phase0, potential, spec)
    h1 = hamiltonian(phase1, potential, spec)
    dh = h1 - h0
    u = rng.random()
    accepted = bool(math.isfinite(dh) and u <= math.exp(min(-dh, 0.0)))
    stats = TrajectoryStats(dh if math.isfinite(dh) else math.inf, accepted, h0, h1)
    return (phase1 if accepted else phase0), stats


def mdmc(
    Q,
    p,
    potential: Potential,
    spec: HomogeneousSpaceSpec,
    config: HmcConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, TrajectoryStats]:
    """One molecular-dynamics Monte Carlo update; returns the new position."""
    start = Phase(np.asarray(Q, dtype=float), np.asarray(p, dtype=float))
    L = trajectory_length(config, rng)
    try:
        end = integrate(start, potential, spec, config, L)
    except (DivergenceError, DegenerateRowError):
        # a diverged trajectory is a certain rejection; keep the RNG stream aligned
        rng.random()
        h0 = hamiltonian(start, potential, spec)
        return start.Q, TrajectoryStats(math.inf, False, h0, math.inf, L)
    chosen, stats = metropolis(rng, start, end, potential, spec)
    # the momentum flip is irrelevant under full refreshment but kept for form
    chosen = chosen.flipped()
    return chosen.Q, replace(stats, n_steps=L)


def hmc_run(
    config: HmcConfig,
    spec: HomogeneousSpaceSpec,
    potential: Potential,
    Q0=None,
) -> Chain:
    """Alternate Gibbs refreshment and MDMC updates ``config.n_samples`` times."""
    _require_riemannian(spec)
    rng = np.random.default_rng(config.seed)
    Q = np.eye(spec.n) if Q0 is None else np.array(Q0, dtype=float)
    N = config.n_samples
    points = np.empty((N, spec.n))
    dh = np.empty(N)
    acc = np.empty(N, dtype=bool)
    for i in range(N):
        p = gibbs_momentum(spec, rng)
        Q, stats = mdmc(Q, p, potential, spec, config, rng)
        points[i] = Q @ spec.base_point
        dh[i] = stats.delta_h
        acc[i] = stats.accepted
    return Chain(points, dh, acc, config.seed, config, spec.name, Q)


def geodesic(
    spec: HomogeneousSpaceSpec,
    p,
    dt: float,
    n_steps: int,
    Q0=None,
    exp_config: ExpConfig = TRAJECTORY_EXP_CONFIG,
) -> np.ndarray:
    """Manifold points along the free (``U = 0``) flow with initial momentum ``p``.

    Returns an array of shape ``(n_steps + 1, n)`` starting at ``Q0 p0``.
    Works on every space, including pseudo-Riemannian ones.
    """
    phase = Phase(np.eye(spec.n) if Q0 is None else np.array(Q0, dtype=float), np.asarray(p, dtype=float))
    out = np.empty((n_steps + 1, spec.n))
    out[0] = phase.Q @ spec.base_point
    for i in range(n_steps):
        phase = that_step(dt, phase, spec, exp_config)
        out[i + 1] = phase.Q @ spec.base_point
    return out
