import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liehmc.hmc import (
    CAMPOSTRINI_W0,
    CAMPOSTRINI_W1,
    CapabilityError,
    DivergenceError,
    HmcConfig,
    Phase,
    algebra_force,
    campostrini_trajectory,
    force,
    force_matrix,
    geodesic,
    gibbs_momentum,
    hamiltonian,
    hmc_run,
    integrate,
    leapfrog_trajectory,
    lifted_gradient,
    mdmc,
    metropolis,
    reproject_group,
    split_normal_that_step,
    that_step,
    trajectory_length,
    vhat_step,
)
from liehmc.matexp import ExpConfig, exp_dispatch
from liehmc.potentials import Potential, get_potential, linear_potential
from liehmc.spaces import get_space, membership_residual, momentum_residual_in_k, so3_generators

T1, T2, T3 = so3_generators()
RIEMANNIAN = ["s2", "h2-twosheet", "sphere-n"]
ALL = RIEMANNIAN + ["h2-onesheet"]
PRECISE = ExpConfig(target_accuracy=1e-12)


def spec_of(name):
    return get_space(name, n=4) if name == "sphere-n" else get_space(name)


def confining(name):
    """A smooth potential with bounded sublevel sets on each space."""
    if name == "h2-twosheet":
        return Potential(lambda y: y[0] + 0.5 * y[1] ** 2, lambda y: np.array([1.0, y[1], 0.0]), "x + y^2/2", 3)
    if name == "h2-onesheet":
        return Potential(lambda y: y[2] ** 2 + y[1], lambda y: np.array([0.0, 1.0, 2 * y[2]]), "z^2 + y", 3)
    if name == "sphere-n":
        b = np.array([0.3, -1.0, 0.5, 0.8])
        return Potential(
            lambda y: float(b @ y + y[0] ** 2), lambda y: b + np.array([2 * y[0], 0, 0, 0]), "b.y + x^2", 4
        )
    return get_potential("y_z2_expx2")


def random_Q(spec, rng, scale=1.0):
    P = spec.momentum_matrix(rng.uniform(-scale, scale, spec.dim_p))
    K = np.tensordot(rng.uniform(-1, 1, spec.dim_k), spec.k_stack, axes=1)
    return exp_dispatch(P, PRECISE) @ exp_dispatch(K, PRECISE)


def reversal_error(phase, potential, spec, config):
    end = integrate(phase, potential, spec, config)
    back = integrate(end.flipped(), potential, spec, config).flipped()
    return max(np.abs(back.Q - phase.Q).max(), np.abs(back.p - phase.p).max())


# -- config -------------------------------------------------------------------


@pytest.mark.parametrize(
    "tau,dt,steps", [(1.0, 0.1, 10), (0.25, 0.1, 3), (0.25, 0.05, 5), (0.25, 0.0125, 20), (2.0, 0.3, 7), (0.15, 0.1, 2)]
)
def test_step_count(tau, dt, steps):
    c = HmcConfig(dt=dt, tau=tau)
    assert c.n_steps == steps
    assert c.step * c.n_steps == pytest.approx(tau, rel=1e-15)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dt": 0.0},
        {"dt": math.nan},
        {"tau": -1.0},
        {"tau": 0.01, "dt": 0.1},
        {"seed": -1},
        {"seed": 2**64},
        {"integrator": "euler"},
        {"position_step": "x"},
        {"reproject_every": -1},
        {"n_samples": -1},
    ],
)
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        HmcConfig(**kwargs)


def test_campostrini_weights():
    assert 2 * CAMPOSTRINI_W1 + CAMPOSTRINI_W0 == pytest.approx(1.0, abs=1e-15)
    assert 2 * CAMPOSTRINI_W1**3 + CAMPOSTRINI_W0**3 == pytest.approx(0.0, abs=1e-14)


# -- Hamiltonian --------------------------------------------------------------


def test_hamiltonian_zero():
    s = get_space("s2")
    assert hamiltonian(Phase(np.eye(3), np.zeros(2)), get_potential("none"), s) == 0.0


def test_hamiltonian_unit_momentum():
    s = get_space("s2")
    assert hamiltonian(Phase(np.eye(3), np.array([1.0, 0.0])), get_potential("none"), s) == 0.5


@pytest.mark.parametrize("name", RIEMANNIAN)
def test_kinetic_matches_matrix_form(name):
    # with |<T_i, T_j>| = 2 delta_ij and lambda = 1/2: K = tr(P^T P) / 4
    s = spec_of(name)
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = rng.standard_normal(s.dim_p)
        P = s.momentum_matrix(p)
        H = hamiltonian(Phase(np.eye(s.n), p), get_potential("none"), s)
        assert H == pytest.approx(0.25 * np.trace(P.T @ P), rel=1e-14)


def test_hamiltonian_includes_potential():
    s = get_space("s2")
    Q = random_Q(s, np.random.default_rng(1))
    pot = get_potential("y_z2_expx2")
    assert hamiltonian(Phase(Q, np.zeros(2)), pot, s) == pot.fn(Q[:, 0])


# -- force ---------------------------------------------------------------------


def test_constant_potential_has_no_force():
    s = get_space("s2")
    const = Potential(lambda y: 3.0, lambda y: np.zeros(3), "3")
    np.testing.assert_array_equal(force(random_Q(s, np.random.default_rng(0)), const, s), [0.0, 0.0])


def test_height_at_pole():
    s = get_space("s2")
    F = force(np.eye(3), linear_potential([0.0, 0.0, 1.0]), s)
    # T2 e1 = e3 and T3 e1 = -e2, so only T2 changes the height, at unit rate
    assert F[1] == 0.0
    assert F[0] == pytest.approx(-1.0)


def test_lifted_gradient_of_linear_potential():
    s = get_space("s2")
    b = np.array([0.2, -1.0, 0.7])
    B = np.outer(s.base_point, b)
    np.testing.assert_array_equal(lifted_gradient(random_Q(s, np.random.default_rng(2)), linear_potential(b), s), B)
    # the lift tr(B x) has matrix derivative B^T, whose transpose is stored
    Q = random_Q(s, np.random.default_rng(3))
    assert np.trace(B @ Q) == pytest.approx(linear_potential(b).fn(Q @ s.base_point), rel=1e-14)


@pytest.mark.parametrize("name", ALL)
def test_force_matches_directional_finite_differences(name):
    s = spec_of(name)
    pot = confining(name)
    rng = np.random.default_rng(4)
    for _ in range(10):
        Q = random_Q(s, rng)
        F = force(Q, pot, s)

        def V(q):
            return pot.fn(q @ s.base_point)

        for j, T in enumerate(s.p_generators):
            # Richardson-extrapolated central differences along Q exp(s T_j)
            d = [
                (V(Q @ exp_dispatch(h * T, PRECISE)) - V(Q @ exp_dispatch(-h * T, PRECISE))) / (2 * h)
                for h in (1e-3, 5e-4)
            ]
            fd = (4 * d[1] - d[0]) / 3
            assert -F[j] == pytest.approx(fd, rel=1e-8, abs=1e-9)


@pytest.mark.parametrize("name", ALL)
def test_force_has_no_stabiliser_component(name):
    s = spec_of(name)
    pot = confining(name)
    rng = np.random.default_rng(5)
    for _ in range(20):
        fk, fp = algebra_force(random_Q(s, rng), pot, s)
        assert np.abs(fk).max() <= 1e-12 * max(1.0, np.abs(fp).max())
        assert momentum_residual_in_k(s.momentum_matrix(fp), s) <= 1e-12 * max(1.0, np.abs(fp).max())


def test_force_matrix_in_p():
    s = get_space("s2")
    Q = random_Q(s, np.random.default_rng(6))
    Fm = force_matrix(Q, get_potential("yz2expx2"), s)
    assert momentum_residual_in_k(Fm, s) <= 1e-15


# -- elementary steps --------------------------------------------------------


def test_vhat_zero_force_is_identity():
    s = get_space("s2")
    ph = Phase(random_Q(s, np.random.default_rng(7)), np.array([0.3, -0.2]))
    out = vhat_step(0.1, ph, get_potential("none"), s)
    np.testing.assert_array_equal(out.p, ph.p)
    assert out.Q is ph.Q


def test_vhat_half_steps_compose():
    s = get_space("s2")
    pot = get_potential("yexpz2_2x2")
    ph = Phase(random_Q(s, np.random.default_rng(8)), np.array([0.3, -0.2]))
    two = vhat_step(0.05, vhat_step(0.05, ph, pot, s), pot, s)
    one = vhat_step(0.1, ph, pot, s)
    np.testing.assert_allclose(two.p, one.p, rtol=1e-15, atol=1e-15)


def test_that_zero_momentum():
    s = get_space("h2-twosheet")
    Q = random_Q(s, np.random.default_rng(9))
    out = that_step(0.3, Phase(Q, np.zeros(2)), s, reproject=False)
    np.testing.assert_array_equal(out.Q, Q)


def test_that_moves_along_great_circle():
    s = get_space("s2")
    p = np.array([0.8, -0.5])
    speed = np.linalg.norm(p)
    phase = Phase(np.eye(3), p)
    for k in range(1, 8):
        phase = that_step(0.1, phase, s)
        x = phase.Q[:, 0]
        # arc length from e1 grows linearly; the direction is fixed
        assert math.acos(np.clip(x[0], -1, 1)) == pytest.approx(0.1 * k * speed, rel=1e-12)
        theta, phi_dir = 0.1 * k * speed, np.array([-p[1], p[0]]) / speed
        # P = p1 T2 + p2 T3 = theta (sin(phi) T2 - cos(phi) T3) / step  with (sin, -cos) = p / |p|
        ref = [math.cos(theta), math.sin(theta) * phi_dir[0], math.sin(theta) * phi_dir[1]]
        np.testing.assert_allclose(x, ref, atol=1e-13)


@pytest.mark.parametrize("name", ALL)
def test_that_inverse(name):
    s = spec_of(name)
    rng = np.random.default_rng(10)
    for _ in range(10):
        Q = random_Q(s, rng)
        ph = Phase(Q, rng.standard_normal(s.dim_p))
        back = that_step(-0.2, that_step(0.2, ph, s), s)
        assert np.abs(back.Q - Q).max() <= 1e-10 * max(1.0, np.abs(Q).max())


def test_reproject_restores_membership():
    s = get_space("h2-twosheet")
    rng = np.random.default_rng(11)
    Q = random_Q(s, rng, 2.0) + 1e-7 * rng.standard_normal((3, 3))
    assert membership_residual(Q, s) > 1e-8
    assert membership_residual(reproject_group(Q, s), s) <= 1e-12


# -- split normal position step ---------------------------------------------


def test_split_normal_reduces_to_exact_for_antisymmetric():
    s = get_space("s2")
    ph = Phase(random_Q(s, np.random.default_rng(12)), np.array([0.4, 1.1]))
    np.testing.assert_array_equal(split_normal_that_step(0.1, ph, s).Q, that_step(0.1, ph, s).Q)


def test_split_normal_requires_split():
    s = get_space("s2")
    bad = dataclasses.replace(s, p_generators=(T2 + np.triu(np.ones((3, 3)), 1), T3))
    with pytest.raises(CapabilityError):
        split_normal_that_step(0.1, Phase(np.eye(3), np.ones(2)), bad)


def test_split_normal_third_order_on_onesheet():
    s = get_space("h2-onesheet")
    ph = Phase(np.eye(3), np.array([0.9, 0.6]))
    errs = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        exact = that_step(eps, ph, s, PRECISE, reproject=False).Q
        split = split_normal_that_step(eps, ph, s, PRECISE, reproject=False).Q
        errs.append(np.abs(split - exact).max())
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    for r in ratios:
        assert 7.0 < r < 9.0


def test_split_normal_reversible():
    s = get_space("h2-onesheet")
    cfg = HmcConfig(dt=0.1, tau=1.0, position_step="split_normal")
    ph = Phase(np.eye(3), np.array([0.5, 0.3]))
    assert reversal_error(ph, confining("h2-onesheet"), s, cfg) <= 1e-10


# -- trajectories ----------------------------------------------------------


def test_one_free_leapfrog_step_is_a_geodesic_step():
    s = get_space("s2")
    ph = Phase(np.eye(3), np.array([0.3, 0.7]))
    cfg = HmcConfig(dt=0.1, tau=0.1)
    out = leapfrog_trajectory(ph, get_potential("none"), s, cfg)
    np.testing.assert_array_equal(out.Q, that_step(0.1, ph, s).Q)
    np.testing.assert_array_equal(out.p, ph.p)


def test_free_campostrini_matches_leapfrog():
    s = get_space("s2")
    ph = Phase(np.eye(3), np.array([0.3, 0.7]))
    cfg = HmcConfig(dt=0.1, tau=1.0)
    a = leapfrog_trajectory(ph, get_potential("none"), s, cfg)
    b = campostrini_trajectory(ph, get_potential("none"), s, cfg)
    np.testing.assert_allclose(a.Q, b.Q, atol=1e-13)


@pytest.mark.parametrize("name", ALL)
@pytest.mark.parametrize("integrator", ["leapfrog", "campostrini"])
def test_reversibility(name, integrator):
    s = spec_of(name)
    pot = confining(name)
    rng = np.random.default_rng(13)
    cfg = HmcConfig(dt=0.1, tau=2.0, integrator=integrator)
    for _ in range(5):
        ph = Phase(random_Q(s, rng, 0.5), rng.standard_normal(s.dim_p))
        assert reversal_error(ph, pot, s, cfg) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(RIEMANNIAN), st.integers(0, 2**32 - 1), st.sampled_from(["leapfrog", "campostrini"]))
def test_trajectory_invariants(name, seed, integrator):
    s = spec_of(name)
    pot = confining(name)
    rng = np.random.default_rng(seed)
    cfg = HmcConfig(dt=0.1, tau=1.0, integrator=integrator)
    ph = Phase(random_Q(s, rng, 0.5), gibbs_momentum(s, rng))
    end = integrate(ph, pot, s, cfg)
    assert membership_residual(end.Q, s) <= 1e-10 * max(1.0, np.abs(end.Q).max() ** 2)
    assert momentum_residual_in_k(end.momentum_matrix(s), s) <= 1e-11
    fk, _ = algebra_force(end.Q, pot, s)
    assert np.abs(fk).max() <= 1e-11 * max(1.0, np.abs(end.Q).max())
    assert reversal_error(ph, pot, s, cfg) <= 1e-9


def test_reprojection_negative_control():
    # without reprojection the accumulated group drift is clearly larger
    s = get_space("s2")
    pot = confining("s2")
    ph = Phase(np.eye(3), np.array([1.0, -0.7]))
    on = integrate(ph, pot, s, HmcConfig(dt=0.1, tau=100.0))
    off = integrate(ph, pot, s, HmcConfig(dt=0.1, tau=100.0, reproject_every=0))
    assert membership_residual(off.Q, s) > 2 * membership_residual(on.Q, s)


def test_divergence_detected():
    s = get_space("h2-twosheet")
    pot = Potential(lambda y: math.exp(y[0] ** 3), lambda y: np.array([3 * y[0] ** 2 * math.exp(y[0] ** 3), 0, 0]))
    ph = Phase(np.eye(3), np.array([40.0, 0.0]))
    with pytest.raises(DivergenceError):
        integrate(ph, pot, s, HmcConfig(dt=0.1, tau=2.0))


def test_leapfrog_dh_second_order():
    s = get_space("s2")
    pot = get_potential("y_z2_expx2")
    ph = Phase(np.eye(3), np.array([0.7, -1.2]))
    dh = []
    for dt in (0.05, 0.025):
        end = integrate(ph, pot, s, HmcConfig(dt=dt, tau=0.5))
        dh.append(abs(hamiltonian(end, pot, s) - hamiltonian(ph, pot, s)))
    assert 3.3 < dh[0] / dh[1] < 4.7


# -- Gibbs and Metropolis ----------------------------------------------------


def test_gibbs_moments():
    s = get_space("s2")
    rng = np.random.default_rng(14)
    n = 100_000
    draws = np.array([gibbs_momentum(s, rng) for _ in range(n)])
    var = 1 / (2 * s.kinetic_eigenvalues)
    assert np.all(np.abs(draws.mean(0)) <= 4 * np.sqrt(var / n))
    assert np.all(np.abs(draws.var(0) - var) <= 4 * var * np.sqrt(2 / n))


def test_gibbs_refuses_pseudo_riemannian():
    with pytest.raises(CapabilityError, match="pseudo-Riemannian"):
        gibbs_momentum(get_space("h2-onesheet"), np.random.default_rng(0))


def _phases_with_dh(dh):
    # p1 carries kinetic energy dh above p0 = (a, 0)
    a = 2.0
    return Phase(np.eye(3), np.array([a, 0.0])), Phase(np.eye(3), np.array([math.sqrt(a * a + 2 * dh), 0.0]))


@pytest.mark.parametrize("dh", [0.0, -1.0])
def test_metropolis_always_accepts_downhill(dh):
    s = get_space("s2")
    rng = np.random.default_rng(15)
    p0, p1 = _phases_with_dh(dh)
    for _ in range(1000):
        chosen, stats = metropolis(rng, p0, p1, get_potential("none"), s)
        assert stats.accepted and chosen is p1
        assert stats.delta_h == stats.h_final - stats.h_initial


def test_metropolis_half_probability():
    s = get_space("s2")
    rng = np.random.default_rng(16)
    p0, p1 = _phases_with_dh(math.log(2))
    n = 100_000
    acc = sum(metropolis(rng, p0, p1, get_potential("none"), s)[1].accepted for _ in range(n))
    assert abs(acc / n - 0.5) <= 4 * math.sqrt(0.25 / n)


def test_metropolis_infinite_dh_rejects():
    s = get_space("s2")
    p0 = Phase(np.eye(3), np.zeros(2))
    p1 = Phase(np.eye(3), np.array([math.inf, 0.0]))
    chosen, stats = metropolis(np.random.default_rng(0), p0, p1, get_potential("none"), s)
    assert chosen is p0 and not stats.accepted


# -- MDMC and the chain -----------------------------------------------------


def test_mdmc_rejection_returns_initial_bits():
    s = get_space("s2")
    pot = get_potential("y_z2_expx2")
    Q = random_Q(s, np.random.default_rng(17))
    cfg = HmcConfig(dt=0.9, tau=9.0)
    rng = np.random.default_rng(18)
    seen = False
    for _ in range(200):
        Qn, stats = mdmc(Q, gibbs_momentum(s, rng) * 3, pot, s, cfg, rng)
        if not stats.accepted:
            assert Qn.tobytes() == Q.tobytes()
            seen = True
            break
    assert seen


def test_mdmc_divergence_is_rejection():
    s = get_space("h2-twosheet")
    pot = Potential(lambda y: math.exp(y[0] ** 3), lambda y: np.array([3 * y[0] ** 2 * math.exp(y[0] ** 3), 0, 0]))
    Q = np.eye(3)
    Qn, stats = mdmc(Q, np.array([40.0, 0.0]), pot, s, HmcConfig(dt=0.1, tau=2.0), np.random.default_rng(0))
    assert not stats.accepted and stats.delta_h == math.inf
    np.testing.assert_array_equal(Qn, Q)


def test_small_dt_accepts_everything():
    s = get_space("s2")
    means = []
    for dt in (0.01, 0.005):
        chain = hmc_run(HmcConfig(dt=dt, tau=0.25, n_samples=200, seed=3), s, get_potential("y_z2_expx2"))
        assert chain.acceptance_rate == 1.0
        means.append(np.abs(chain.delta_h).mean())
    # mean |dH| falls like dt^2
    assert 2.5 < means[0] / means[1] < 6.0


def test_acceptance_rate_pinned():
    cfg = HmcConfig(dt=0.1, tau=0.25, n_samples=2000, seed=1)
    rate = hmc_run(cfg, get_space("s2"), get_potential("y_z2_expx2")).acceptance_rate
    assert 0.5 < rate < 1.0


def test_chain_deterministic():
    cfg = HmcConfig(dt=0.1, tau=1.0, n_samples=50, seed=123, randomize_length=True)
    a = hmc_run(cfg, get_space("s2"), get_potential("yz2expx2"))
    b = hmc_run(cfg, get_space("s2"), get_potential("yz2expx2"))
    assert a.points.tobytes() == b.points.tobytes()
    assert a.delta_h.tobytes() == b.delta_h.tobytes()
    c = hmc_run(dataclasses.replace(cfg, seed=124), get_space("s2"), get_potential("yz2expx2"))
    assert a.points.tobytes() != c.points.tobytes()


def test_chain_points_on_manifold():
    s = get_space("h2-twosheet")
    chain = hmc_run(HmcConfig(dt=0.1, tau=1.0, n_samples=100, seed=2), s, confining("h2-twosheet"))
    x = chain.points
    assert np.abs(-x[:, 0] ** 2 + x[:, 1] ** 2 + x[:, 2] ** 2 + 1).max() <= 1e-8
    assert len(chain) == 100 and 0 <= chain.acceptance_rate <= 1


def test_hmc_refuses_pseudo_riemannian():
    with pytest.raises(CapabilityError):
        hmc_run(HmcConfig(n_samples=1), get_space("h2-onesheet"), get_potential("none"))


def test_randomized_length_range():
    cfg = HmcConfig(dt=0.1, tau=1.0, randomize_length=True)
    rng = np.random.default_rng(19)
    lengths = {trajectory_length(cfg, rng) for _ in range(500)}
    assert lengths == set(range(5, 11))
    assert trajectory_length(HmcConfig(dt=0.1, tau=1.0), rng) == 10


def test_exp_minus_dh_near_one():
    chain = hmc_run(HmcConfig(dt=0.1, tau=1.0, n_samples=500, seed=4), get_space("s2"), get_potential("yz2expx2"))
    w = chain.exp_minus_dh
    assert abs(w.mean() - 1) <= 4 * w.std() / math.sqrt(len(w))


# -- geodesic ----------------------------------------------------------------


def test_geodesic_closes_on_sphere():
    s = get_space("s2")
    n = 628
    pts = geodesic(s, [1.0, 0.0], 2 * math.pi / n, n)
    assert pts.shape == (n + 1, 3)
    np.testing.assert_allclose(pts[-1], pts[0], atol=1e-10)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-13)


def test_geodesic_on_onesheet():
    s = get_space("h2-onesheet")
    pts = geodesic(s, [0.3, 0.8], 0.05, 100)
    x = pts
    assert np.abs(x[:, 0] ** 2 + x[:, 1] ** 2 - x[:, 2] ** 2 - 1).max() <= 1e-8
