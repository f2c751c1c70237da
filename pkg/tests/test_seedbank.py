"""Dormancy profiles, summaries, and the exchange samplers."""

import math

import numpy as np
import pytest

from seedbank_lab.seedbank import (
    ACTIVE,
    SeedBankProfile,
    alternation_active_fraction,
    build_profile,
    explicit_profile,
    hierarchical_bank_profile,
    polynomial_profile,
    sample_exchange,
    sample_wake_times,
    summarize,
    wake_time_tail,
)


# ---------------------------------------------------------------------------
# profile construction


def test_polynomial_profile_values():
    prof = polynomial_profile(A=1.0, alpha=0.0, B=1.0, beta=1.0, M=1)
    assert np.allclose(prof.K, [1.0, 1.0])
    assert np.allclose(prof.e, [1.0, 0.5])
    assert prof.M == 1
    assert prof.provenance == "polynomial"


def test_hierarchical_bank_values():
    prof = hierarchical_bank_profile(K=1.0, e=1.0, N=2, M=2)
    assert np.allclose(prof.K, [1.0, 1.0, 1.0])
    assert np.allclose(prof.e, [1.0, 0.5, 0.25])


def test_explicit_single_colour():
    prof = explicit_profile(K=[2.0], e=[0.3])
    assert prof.M == 0
    assert prof.chi == pytest.approx(0.6)


def test_build_profile_dispatch():
    poly = build_profile("polynomial", A=1.0, alpha=0.5, B=1.0, beta=1.0, M=3)
    assert poly.provenance == "polynomial"
    hier = build_profile("hierarchical_bank", K=1.0, e=0.5, N=2, M=2)
    assert hier.provenance == "hierarchical_bank"
    expl = build_profile("explicit", K=[1.0], e=[1.0])
    assert expl.provenance == "explicit"
    with pytest.raises(ValueError):
        build_profile("geometric", K=[1.0], e=[1.0])


def test_profile_validation():
    with pytest.raises(ValueError):
        polynomial_profile(A=0.0, alpha=0.5, B=1.0, beta=1.0, M=1)
    with pytest.raises(ValueError):
        polynomial_profile(A=1.0, alpha=0.5, B=-1.0, beta=1.0, M=1)
    with pytest.raises(ValueError):
        polynomial_profile(A=1.0, alpha=0.5, B=1.0, beta=1.0, M=-1)
    with pytest.raises(ValueError):
        hierarchical_bank_profile(K=2.0, e=1.0, N=2, M=3)  # needs K*e < N
    with pytest.raises(ValueError):
        hierarchical_bank_profile(K=1.0, e=1.0, N=1, M=3)
    with pytest.raises(ValueError):
        explicit_profile(K=[1.0, 1.0], e=[1.0])
    with pytest.raises(ValueError):
        explicit_profile(K=[1.0, 0.0], e=[1.0, 1.0])
    with pytest.raises(ValueError):
        explicit_profile(K=[], e=[])


# ---------------------------------------------------------------------------
# summaries


def test_summary_arithmetic():
    prof = explicit_profile(K=[1.0, 0.5], e=[1.0, 0.5])
    s = summarize(prof)
    assert s.chi == pytest.approx(1.25)
    assert s.rho == pytest.approx(1.5)
    assert s.f_M == pytest.approx(0.4)
    assert s.kappa == pytest.approx(6.25)


def test_polynomial_gamma():
    prof = polynomial_profile(A=1.0, alpha=0.5, B=1.0, beta=1.0, M=16)
    assert summarize(prof).gamma == pytest.approx(0.5)


def test_single_colour_summary():
    s = summarize(explicit_profile(K=[1.0], e=[0.7]))
    assert s.f_M == pytest.approx(0.5)
    assert s.kappa == pytest.approx(4.0)


def test_gamma_absent_outside_polynomial_regime():
    assert summarize(explicit_profile(K=[1.0], e=[1.0])).gamma is None
    # alpha + beta <= 1 and alpha > 1 both fall outside the claimed regime
    assert summarize(polynomial_profile(A=1, alpha=0.5, B=1, beta=0.3, M=8)).gamma is None
    assert summarize(polynomial_profile(A=1, alpha=1.5, B=1, beta=1.0, M=8)).gamma is None


def test_hierarchical_ladder_gamma():
    # the geometric ladder with K = 1 has tail exponent 1
    s = summarize(hierarchical_bank_profile(K=1.0, e=1.0, N=2, M=8))
    assert s.gamma == pytest.approx(1.0)


def test_summary_sums_accurate_for_deep_banks():
    # chi and rho rely on pairwise summation; compare against fsum
    prof = polynomial_profile(A=1.0, alpha=0.5, B=1.0, beta=1.0, M=10**6)
    assert prof.chi == pytest.approx(math.fsum(prof.K * prof.e), rel=1e-12)
    assert prof.rho == pytest.approx(math.fsum(prof.K), rel=1e-12)


# ---------------------------------------------------------------------------
# exchange samplers


def test_colour_probabilities_sum_to_one():
    prof = polynomial_profile(A=2.0, alpha=0.7, B=0.5, beta=1.3, M=100)
    assert abs(prof.wake_weights.sum() - 1.0) < 1e-12
    assert prof._colour_cdf[-1] == 1.0


def test_sleep_duration_mean():
    prof = explicit_profile(K=[1.0, 0.5], e=[1.0, 0.5])
    rng = np.random.default_rng(40)
    n = 20000
    durations = np.empty(n)
    for i in range(n):
        durations[i], colour = sample_exchange(prof, ACTIVE, rng)
        assert 0 <= colour <= prof.M
    se = durations.std(ddof=1) / math.sqrt(n)
    assert abs(durations.mean() - 1.0 / prof.chi) <= 4.0 * se


def test_single_colour_always_zero():
    prof = explicit_profile(K=[1.0], e=[1.0])
    rng = np.random.default_rng(1)
    assert np.all(prof.sample_colour(rng, 1000) == 0)
    _, colour = sample_exchange(prof, ACTIVE, rng)
    assert colour == 0


def test_dormant_holding_means():
    prof = explicit_profile(K=[1.0, 1.0], e=[2.0, 0.25])
    rng = np.random.default_rng(9)
    for m in (0, 1):
        n = 5000
        durations = np.empty(n)
        for i in range(n):
            d, nxt = sample_exchange(prof, m, rng)
            durations[i] = d
            assert nxt == ACTIVE
        se = durations.std(ddof=1) / math.sqrt(n)
        assert abs(durations.mean() - 1.0 / prof.e[m]) <= 4.0 * se


def test_sample_exchange_rejects_bad_state():
    prof = explicit_profile(K=[1.0], e=[1.0])
    with pytest.raises(ValueError):
        sample_exchange(prof, 3, np.random.default_rng(0))


def test_wake_time_tail_basics():
    prof = polynomial_profile(A=1.0, alpha=0.5, B=1.0, beta=1.0, M=8)
    t = np.array([0.0, 1.0, 10.0, 100.0])
    tail = wake_time_tail(prof, t)
    assert tail.shape == t.shape
    assert tail[0] == pytest.approx(1.0)
    assert np.all(np.diff(tail) < 0)
    assert wake_time_tail(prof, 0.0) == pytest.approx(1.0)


def test_deep_bank_wake_tail_slope():
    # oracle first: the exact mixture tail sum_m (K_m e_m / chi) exp(-e_m t),
    # evaluated numerically over t in [10, 10^3]. at M = 4096 the window
    # brushes the cutoff time (M+1)^beta / B, whose exponential shoulder
    # drags the fitted slope to -0.63, steeper than the asymptotic -1/2
    prof = polynomial_profile(A=1.0, alpha=0.5, B=1.0, beta=1.0, M=4096)
    grid = np.geomspace(10.0, 1e3, 9)
    exact = np.exp(-np.outer(grid, prof.e)) @ prof.wake_weights
    exact_slope = np.polyfit(np.log(grid), np.log(exact), 1)[0]
    assert exact_slope == pytest.approx(-0.633, abs=0.02)

    # the empirical tail of sampled dormancy spells matches the mixture,
    # both in fitted slope and pointwise within 4 binomial standard errors
    rng = np.random.default_rng(77)
    n = 200000
    samples = sample_wake_times(prof, n, rng)
    empirical = np.array([(samples > t).mean() for t in grid])
    emp_slope = np.polyfit(np.log(grid), np.log(empirical), 1)[0]
    assert emp_slope == pytest.approx(exact_slope, abs=0.03)
    se = np.sqrt(exact * (1.0 - exact) / n)
    assert np.all(np.abs(empirical - exact) <= 4.0 * se)

    # with the cutoff pushed far beyond the window the same fit recovers
    # the asymptotic exponent gamma = 1/2
    deep = polynomial_profile(A=1.0, alpha=0.5, B=1.0, beta=1.0, M=10**6)
    tail = np.exp(-np.outer(grid, deep.e)) @ deep.wake_weights
    deep_slope = np.polyfit(np.log(grid), np.log(tail), 1)[0]
    assert deep_slope == pytest.approx(-0.5, abs=0.1)

    deep_samples = sample_wake_times(deep, n, np.random.default_rng(78))
    deep_emp = np.array([(deep_samples > t).mean() for t in grid])
    assert np.polyfit(np.log(grid), np.log(deep_emp), 1)[0] == pytest.approx(-0.5, abs=0.1)


def test_truncated_tail_matches_power_law_constant():
    # at t = M^beta / (10 B), well below the cutoff scale, the exact mixture
    # tail should sit within a factor 2 of C t^-gamma
    prof = polynomial_profile(A=1.0, alpha=0.5, B=1.0, beta=1.0, M=4096)
    s = summarize(prof)
    t = 4096.0 / 10.0
    exact = float(wake_time_tail(prof, t))
    predicted = s.tail_constant * t ** (-s.gamma)
    assert 0.5 <= exact / predicted <= 2.0


def test_alternation_active_fraction():
    prof = explicit_profile(K=[1.0, 0.5], e=[1.0, 0.5])
    rng = np.random.default_rng(123)
    frac, se = alternation_active_fraction(prof, 10000, rng)
    assert se > 0
    assert abs(frac - 0.4) <= 4.0 * se


def test_alternation_needs_enough_cycles():
    prof = explicit_profile(K=[1.0], e=[1.0])
    with pytest.raises(ValueError):
        alternation_active_fraction(prof, 50, np.random.default_rng(0), batches=100)
