"""Euler integration of the interacting diffusions and their observables."""

import math

import numpy as np
import pytest

from seedbank_lab.forward import (
    FisherWright,
    OhtaKimura,
    System,
    SystemState,
    TabulatedDiffusion,
    depth_moments,
    diversity,
    drift,
    increasing_process_increment,
    macroscopic,
    make_state,
    run,
    step,
    validate_diffusion,
)
from seedbank_lab.geometry import (
    Geography,
    NearestNeighbour,
    build_kernel,
    kernel_from_row,
    make_torus,
)
from seedbank_lab.seedbank import explicit_profile

ZERO_G = TabulatedDiffusion(np.zeros(3), 0.0)


def _isolated_pair():
    # two decoupled sites, no migration, single colour with K = e = 1
    geo = make_torus(1, 1)
    kern = kernel_from_row(geo, np.zeros(2))
    prof = explicit_profile(K=[1.0], e=[1.0])
    return geo, kern, prof


# ---------------------------------------------------------------------------
# diffusion functions


def test_diffusion_variants():
    x = np.array([0.0, 0.25, 0.5, 1.0])
    assert np.allclose(FisherWright(2.0)(x), 2.0 * x * (1 - x))
    assert np.allclose(OhtaKimura(3.0)(x), 3.0 * (x * (1 - x)) ** 2)
    tab = TabulatedDiffusion([0.0, 0.25, 0.0], 1.0)
    assert tab(0.5) == pytest.approx(0.25)
    assert tab(0.25) == pytest.approx(0.125)  # linear between grid points


def test_validate_diffusion():
    validate_diffusion(FisherWright(1.0))
    validate_diffusion(OhtaKimura(2.0))
    validate_diffusion(ZERO_G)  # noise-free member of the class
    with pytest.raises(ValueError):
        validate_diffusion(TabulatedDiffusion([0.1, 0.2, 0.0], 1.0))  # g(0) != 0
    with pytest.raises(ValueError):
        validate_diffusion(TabulatedDiffusion([0.0, -0.1, 0.0], 1.0))  # negative inside
    with pytest.raises(ValueError):
        validate_diffusion(TabulatedDiffusion([0.0, 0.25, 0.0], 0.0))  # nonzero g, zero lip
    with pytest.raises(ValueError):
        validate_diffusion(TabulatedDiffusion([0.0, 0.25, 0.0], 0.01))  # lip too small


# ---------------------------------------------------------------------------
# drift


def test_drift_single_colour_exchange_only():
    # no migration, K = e = 1, state (x, y) = (1, 0): pure exchange gives
    # dx = -1, dy = +1
    geo, kern, prof = _isolated_pair()
    system = System(kern, prof, FisherWright(1.0), model="M1")
    state = SystemState(np.ones(2), np.zeros((1, 2)))
    dx, dy = drift(state, system)
    assert np.allclose(dx, -1.0)
    assert np.allclose(dy, 1.0)


@pytest.mark.parametrize("model", ["M1", "M2"])
def test_drift_vanishes_at_constant_state(model):
    geo = make_torus(1, 4)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    M = 0 if model == "M1" else 2
    prof = explicit_profile(K=[1.0, 0.5, 0.25][:M + 1], e=[1.0, 0.5, 0.25][:M + 1])
    system = System(kern, prof, FisherWright(1.0), model=model)
    state = make_state(geo, prof, 0.37)
    dx, dy = drift(state, system)
    assert np.max(np.abs(dx)) < 1e-14
    assert np.max(np.abs(dy)) < 1e-14


def test_m3_with_identity_displacement_matches_m2():
    # routing the exchange through a point mass at the origin is a no-op,
    # so M3 must reproduce the M2 drift on arbitrary states
    geo = make_torus(1, 2)
    kern = build_kernel(geo, NearestNeighbour(rate=0.7))
    prof = explicit_profile(K=[1.0, 0.5], e=[1.0, 0.25])
    identity = np.zeros((2, geo.size))
    identity[:, 0] = 1.0
    m2 = System(kern, prof, FisherWright(1.0), model="M2")
    m3 = System(kern, prof, FisherWright(1.0), model="M3", displacement=identity)
    rng = np.random.default_rng(17)
    for _ in range(50):
        state = SystemState(rng.random(geo.size), rng.random((2, geo.size)))
        dx2, dy2 = drift(state, m2)
        dx3, dy3 = drift(state, m3)
        assert np.allclose(dx2, dx3, atol=1e-13)
        assert np.allclose(dy2, dy3, atol=1e-13)


def test_m3_displacement_moves_exchange():
    # a one-step shift must pull dormant mass from the shifted site
    geo = make_torus(1, 2)
    kern = kernel_from_row(geo, np.zeros(4))
    prof = explicit_profile(K=[1.0], e=[1.0])
    shift = np.zeros((1, 4))
    shift[0, 1] = 1.0
    system = System(kern, prof, FisherWright(1.0), model="M3", displacement=shift)
    x = np.array([1.0, 0.0, 0.0, 0.0])
    y = np.zeros((1, 4))
    dx, dy = drift(SystemState(x, y), system)
    # the active site loses mass at rate chi; dormancy forms where the
    # displaced row says the sleeper settles
    assert dx[0] == pytest.approx(-1.0)
    assert dy[0, np.argmax(dy[0])] == pytest.approx(1.0)
    assert np.argmax(dy[0]) != 0


def test_system_validation():
    geo, kern, prof = _isolated_pair()
    two = explicit_profile(K=[1.0, 1.0], e=[1.0, 0.5])
    with pytest.raises(ValueError):
        System(kern, two, FisherWright(1.0), model="M1")  # M1 needs M = 0
    with pytest.raises(ValueError):
        System(kern, prof, FisherWright(1.0), model="M3")  # missing displacement
    with pytest.raises(ValueError):
        System(kern, prof, FisherWright(1.0), model="M2",
               displacement=np.ones((1, 2)) / 2)  # only M3 takes displacement
    with pytest.raises(ValueError):
        System(kern, prof, FisherWright(1.0), model="M3",
               displacement=np.ones((1, 2)))  # rows must be distributions
    with pytest.raises(ValueError):
        System(kern, prof, FisherWright(1.0), model="M4")


# ---------------------------------------------------------------------------
# stepping


def test_zero_g_relaxation_closed_form():
    # oracle: with g = 0, no migration and K = e = 1 the pair (x, y) obeys
    # x' = y - x, y' = x - y, so x(t) = 1/2 + exp(-2t)/2 from (1, 0)
    geo, kern, prof = _isolated_pair()
    system = System(kern, prof, ZERO_G, model="M1")
    state = SystemState(np.ones(2), np.zeros((1, 2)))
    rng = np.random.default_rng(0)
    dt = 1e-3
    for _ in range(1000):
        step(state, system, dt, rng)
    expected = 0.5 + 0.5 * math.exp(-2.0 * state.time)
    assert state.time == pytest.approx(1.0)
    assert np.allclose(state.x, expected, atol=1e-3)
    assert np.allclose(state.y, 1.0 - expected, atol=1e-3)


def test_no_noise_at_fixation():
    # g(1) = 0, so a fully fixed constant state never moves
    geo = make_torus(1, 4)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    system = System(kern, prof, FisherWright(4.0), model="M1")
    state = make_state(geo, prof, 1.0)
    rng = np.random.default_rng(8)
    for _ in range(100):
        step(state, system, 0.05, rng)
    assert np.all(state.x == 1.0)
    assert np.all(state.y == 1.0)


def test_state_stays_in_unit_box():
    # aggressive noise and a coarse step: clamping must hold the box
    geo = make_torus(1, 4)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    system = System(kern, prof, FisherWright(5.0), model="M1")
    state = make_state(geo, prof, 0.5)
    rng = np.random.default_rng(33)
    for _ in range(200):
        step(state, system, 0.5, rng)
        assert np.all((state.x >= 0.0) & (state.x <= 1.0))
        assert np.all((state.y >= 0.0) & (state.y <= 1.0))


def test_theta_hat_is_martingale():
    # replica mean of theta_hat at t = 5 stays at theta(0) within 4 SE.
    # the clamp at the traps biases the Euler mean by O(dt), so the step
    # must be small enough for the bias to hide inside the noise
    geo = make_torus(1, 8)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    system = System(kern, prof, FisherWright(1.0), model="M1")
    state = make_state(geo, prof, 0.3, batch=(1000,))
    rng = np.random.default_rng(91)
    traj = run(state, system, [5.0], rng, dt=0.002)
    finals = traj.theta_hat[:, -1]
    se = finals.std(ddof=1) / math.sqrt(finals.size)
    assert abs(finals.mean() - 0.3) <= 4.0 * se


def test_dt_refinement_weak_error():
    # halving dt moves the ensemble mean of theta_x by no more than twice
    # the combined statistical error
    geo = make_torus(1, 4)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    system = System(kern, prof, FisherWright(1.0), model="M1")

    means = []
    errs = []
    for dt, seed in ((0.02, 1), (0.01, 2)):
        state = make_state(geo, prof, 0.4, batch=(2000,))
        traj = run(state, system, [2.0], np.random.default_rng(seed), dt=dt)
        finals = traj.theta_x[:, -1]
        means.append(finals.mean())
        errs.append(finals.std(ddof=1) / math.sqrt(finals.size))
    assert abs(means[0] - means[1]) <= 2.0 * math.hypot(*errs)


def test_single_colour_ladder_matches_m1_bitwise():
    # M2 restricted to one colour runs the very same arithmetic as M1
    geo = make_torus(1, 2)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    out = {}
    for model in ("M1", "M2"):
        system = System(kern, prof, FisherWright(1.0), model=model)
        state = make_state(geo, prof, 0.5, batch=(8,))
        out[model] = run(state, system, np.linspace(0.5, 4.0, 8),
                         np.random.default_rng(55))
    assert np.array_equal(out["M1"].theta_hat, out["M2"].theta_hat)
    assert np.array_equal(out["M1"].qvar, out["M2"].qvar)


# ---------------------------------------------------------------------------
# run bookkeeping


def test_empty_observer_list():
    geo, kern, prof = _isolated_pair()
    system = System(kern, prof, FisherWright(1.0), model="M1")
    state = make_state(geo, prof, 0.5)
    traj = run(state, system, [], np.random.default_rng(0))
    assert traj.times.size == 0
    assert traj.theta_hat.shape == (0,)


def test_identical_seeds_identical_trajectories():
    geo = make_torus(1, 4)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0, 0.5], e=[1.0, 0.5])
    system = System(kern, prof, FisherWright(1.0), model="M2")
    grids = np.linspace(0.2, 3.0, 12)
    runs = []
    for _ in range(2):
        state = make_state(geo, prof, 0.5, batch=(4,))
        runs.append(run(state, system, grids, np.random.default_rng(1234)))
    assert np.array_equal(runs[0].theta_hat, runs[1].theta_hat)
    assert np.array_equal(runs[0].diversity, runs[1].diversity)
    assert np.array_equal(runs[0].qvar, runs[1].qvar)


def test_absorbing_start_stays_put():
    geo = make_torus(1, 4)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    system = System(kern, prof, FisherWright(1.0), model="M1")
    state = make_state(geo, prof, 0.0)
    traj = run(state, system, [1.0, 2.0, 5.0], np.random.default_rng(2))
    assert np.all(traj.theta_hat == 0.0)
    assert np.all(traj.theta_x == 0.0)
    assert np.all(state.x == 0.0)


def test_observer_times_validation():
    geo, kern, prof = _isolated_pair()
    system = System(kern, prof, FisherWright(1.0), model="M1")
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        run(make_state(geo, prof, 0.5), system, [2.0, 1.0], rng)
    state = make_state(geo, prof, 0.5)
    state.time = 1.0
    with pytest.raises(ValueError):
        run(state, system, [0.5], rng)


def test_noise_free_dynamics_relax_to_flat_state():
    # without noise the exchange + migration semigroup contracts to the
    # constant state at level theta_hat(0), which is conserved
    geo = make_torus(1, 2)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    system = System(kern, prof, ZERO_G, model="M1")
    rng = np.random.default_rng(3)
    state = SystemState(rng.random(geo.size), rng.random((1, geo.size)))
    theta0, _ = macroscopic(state, prof)
    run(state, system, [40.0], np.random.default_rng(0), dt=0.005)
    assert np.max(np.abs(state.x - theta0)) < 1e-5
    assert np.max(np.abs(state.y - theta0)) < 1e-5


# ---------------------------------------------------------------------------
# observables


def test_macroscopic_constant_state():
    geo = make_torus(1, 4)
    prof = explicit_profile(K=[1.0, 0.5], e=[1.0, 0.5])
    th, tx = macroscopic(make_state(geo, prof, 0.37), prof)
    assert th == pytest.approx(0.37)
    assert tx == pytest.approx(0.37)


def test_macroscopic_weights():
    geo = make_torus(1, 4)
    one = explicit_profile(K=[1.0], e=[1.0])
    th, tx = macroscopic(SystemState(np.ones(geo.size), np.zeros((1, geo.size))), one)
    assert th == pytest.approx(0.5)
    assert tx == pytest.approx(1.0)

    two = explicit_profile(K=[1.0, 1.0], e=[1.0, 0.5])
    y = np.zeros((2, geo.size))
    y[0] = 1.0
    th, _ = macroscopic(SystemState(np.zeros(geo.size), y), two)
    assert th == pytest.approx(1.0 / 3.0)


def test_increasing_process_increment_values():
    geo = make_torus(1, 8)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    system = System(kern, prof, FisherWright(2.0), model="M1")
    state = make_state(geo, prof, 0.5)
    dt = 0.01
    # on the slowed-down clock the increment is dt * mean g = dt * d / 4
    assert increasing_process_increment(state, system, dt, clock="macroscopic") == \
        pytest.approx(dt * 2.0 / 4.0)
    # the raw clock divides by size^2 kappa
    expected = dt * geo.size * 0.5 / (geo.size**2 * prof.kappa)
    assert increasing_process_increment(state, system, dt) == pytest.approx(expected)
    zero = make_state(geo, prof, 0.0)
    assert increasing_process_increment(zero, system, dt) == 0.0
    with pytest.raises(ValueError):
        increasing_process_increment(state, system, dt, clock="hourly")


def test_qvar_matches_realized_quadratic_variation():
    # oracle: theta_hat is a martingale, so the expected sum of squared
    # observation increments equals the expected accumulated bracket
    geo = make_torus(1, 8)
    kern = build_kernel(geo, NearestNeighbour(rate=1.0))
    prof = explicit_profile(K=[1.0], e=[1.0])
    system = System(kern, prof, FisherWright(1.0), model="M1")
    state = make_state(geo, prof, 0.3, batch=(1000,))
    times = np.linspace(0.02, 2.0, 100)
    traj = run(state, system, times, np.random.default_rng(10), dt=0.01)
    theta0 = np.full(1000, 0.3)
    inc = np.diff(np.concatenate([theta0[:, None], traj.theta_hat], axis=1), axis=1)
    realized = (inc**2).sum(axis=1).mean()
    accumulated = traj.qvar[:, -1].mean()
    assert realized == pytest.approx(accumulated, rel=0.10)


def test_diversity_values():
    geo = make_torus(1, 8)
    prof = explicit_profile(K=[1.0], e=[1.0])
    assert diversity(make_state(geo, prof, 1.0)) == 0.0
    # the definition uses x(1-x), not variance, so a flat state at theta
    # scores theta(1-theta) exactly while a hard 0/1 state scores zero
    assert diversity(make_state(geo, prof, 0.25)) == pytest.approx(0.25 * 0.75)
    rng = np.random.default_rng(4)
    geo64 = make_torus(1, 32)
    state = make_state(geo64, prof, 0.3, batch=(2000,), kind="bernoulli", rng=rng)
    assert np.all(diversity(state) == 0.0)
    # the Bernoulli spread shows up in the across-sites variance instead
    est = depth_moments(state).x_var.mean()
    assert est == pytest.approx(0.3 * 0.7, abs=0.01)


def test_depth_moments_shapes_and_values():
    geo = make_torus(1, 4)
    prof = explicit_profile(K=[1.0, 0.5], e=[1.0, 0.5])
    state = make_state(geo, prof, 0.4)
    mom = depth_moments(state)
    assert mom.x_mean == pytest.approx(0.4)
    assert mom.x_var == pytest.approx(0.0)
    assert mom.y_mean.shape == (2,)
    assert np.allclose(mom.y_mean, 0.4)
    assert np.allclose(mom.xy_cov, 0.0)


def test_make_state_validation():
    geo = make_torus(1, 2)
    prof = explicit_profile(K=[1.0], e=[1.0])
    with pytest.raises(ValueError):
        make_state(geo, prof, 1.2)
    with pytest.raises(ValueError):
        make_state(geo, prof, 0.5, kind="bernoulli")
    with pytest.raises(ValueError):
        make_state(geo, prof, 0.5, kind="uniform")
