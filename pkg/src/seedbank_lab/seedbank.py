"""Dormancy profiles: colour-indexed bank sizes and wake-up rates.

A profile is a pair of positive vectors (K_m, e_m), m = 0..M. K_m is the
relative size of the colour-m bank, e_m the rate at which a colour-m
dormant individual wakes. An active individual falls asleep at total rate
chi = sum_m K_m e_m and picks colour m with probability K_m e_m / chi.

The ACTIVE constant labels the awake state in lineage bookkeeping; dormant
states carry their colour m >= 0.
"""

from __future__ import annotations

import dataclasses
import math
from functools import cached_property

import numpy as np

ACTIVE = -1


@dataclasses.dataclass(frozen=True, eq=False)
class SeedBankProfile:
    K: np.ndarray
    e: np.ndarray
    provenance: str = "explicit"
    params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float))
        object.__setattr__(self, "e", np.asarray(self.e, dtype=float))
        if self.K.ndim != 1 or self.K.shape != self.e.shape or self.K.size == 0:
            raise ValueError("K and e must be 1-d arrays of equal positive length")
        if np.any(self.K <= 0) or np.any(self.e <= 0):
            raise ValueError("bank sizes K_m and wake rates e_m must be > 0")

    @property
    def M(self) -> int:
        """Largest colour index (colours run 0..M)."""
        return self.K.size - 1

    @cached_property
    def chi(self) -> float:
        """Total sleep rate sum_m K_m e_m."""
        return float(np.sum(self.K * self.e))

    @cached_property
    def rho(self) -> float:
        """Total relative bank size sum_m K_m."""
        return float(np.sum(self.K))

    @cached_property
    def kappa(self) -> float:
        """(1 + rho)^2, the slowdown factor of the macroscopic clock."""
        return (1.0 + self.rho) ** 2

    @cached_property
    def active_fraction(self) -> float:
        """Long-run fraction of time a lineage is awake, 1 / (1 + rho)."""
        return 1.0 / (1.0 + self.rho)

    @cached_property
    def wake_weights(self) -> np.ndarray:
        """Colour distribution K_m e_m / chi at the moment of falling asleep."""
        return self.K * self.e / self.chi

    @cached_property
    def _colour_cdf(self) -> np.ndarray:
        cdf = np.cumsum(self.wake_weights)
        cdf[-1] = 1.0
        return cdf

    def sample_colour(self, rng, size=None):
        return np.searchsorted(self._colour_cdf, rng.random(size))


def polynomial_profile(A, alpha, B, beta, M) -> SeedBankProfile:
    """K_m = A (m+1)^-alpha, e_m = B (m+1)^-beta for m = 0..M."""
    if A <= 0 or B <= 0:
        raise ValueError(f"amplitudes must be > 0, got A={A}, B={B}")
    if alpha < 0 or beta < 0:
        raise ValueError(f"decay exponents must be >= 0, got alpha={alpha}, beta={beta}")
    if M < 0:
        raise ValueError(f"colour cutoff M must be >= 0, got {M}")
    m = np.arange(M + 1, dtype=float) + 1.0
    return SeedBankProfile(A * m**-alpha, B * m**-beta, "polynomial",
                           (("A", float(A)), ("alpha", float(alpha)),
                            ("B", float(B)), ("beta", float(beta)), ("M", int(M))))


def hierarchical_bank_profile(K, e, N, M) -> SeedBankProfile:
    """K_m = K^m with effective wake rate (e/N)^m; requires K*e < N and e < N."""
    if K < 1:
        raise ValueError(f"bank growth base K must be >= 1, got {K}")
    if e <= 0:
        raise ValueError(f"wake base e must be > 0, got {e}")
    if N < 2:
        raise ValueError(f"hierarchy order N must be >= 2, got {N}")
    if K * e >= N:
        raise ValueError(f"need K*e < N for a summable exchange rate, got K*e={K * e}, N={N}")
    if M < 0:
        raise ValueError(f"colour cutoff M must be >= 0, got {M}")
    m = np.arange(M + 1, dtype=float)
    return SeedBankProfile(float(K)**m, (float(e) / N)**m, "hierarchical_bank",
                           (("K", float(K)), ("e", float(e)), ("N", int(N)), ("M", int(M))))


def explicit_profile(K, e) -> SeedBankProfile:
    return SeedBankProfile(np.asarray(K, dtype=float), np.asarray(e, dtype=float),
                           "explicit", ())


def build_profile(provenance: str, **params) -> SeedBankProfile:
    if provenance == "polynomial":
        return polynomial_profile(**params)
    if provenance == "hierarchical_bank":
        return hierarchical_bank_profile(**params)
    if provenance == "explicit":
        return explicit_profile(**params)
    raise ValueError(f"unknown seed-bank provenance {provenance!r}")


@dataclasses.dataclass(frozen=True)
class SeedBankSummary:
    chi: float
    rho: float
    f_M: float
    kappa: float
    gamma: float | None
    tail_constant: float | None
    note: str


def summarize(profile: SeedBankProfile) -> SeedBankSummary:
    """Scalar summaries of a profile.

    For polynomial profiles with alpha <= 1 < alpha + beta the wake-up time
    tail is asymptotically C t^-gamma with gamma = (alpha + beta - 1) / beta.
    The constant describes the window 1/B << t << M^beta / B; past the
    cutoff the truncated mixture decays exponentially instead.
    """
    gamma = None
    constant = None
    note = ""
    if profile.provenance == "polynomial":
        p = dict(profile.params)
        alpha, beta = p["alpha"], p["beta"]
        if alpha <= 1.0 < alpha + beta:
            gamma = (alpha + beta - 1.0) / beta
            constant = (p["A"] / (beta * profile.chi)) * p["B"] ** (1.0 - gamma) * math.gamma(gamma)
            note = "tail constant valid below the colour cutoff scale"
    elif profile.provenance == "hierarchical_bank":
        p = dict(profile.params)
        K, e, N = p["K"], p["e"], p["N"]
        if K >= 1 and K * e < N:
            # finite-N analogue: wake-up tail exponent of the truncated ladder
            gamma = math.log(N / (K * e)) / math.log(N / e) if e != N else None
            note = "gamma for the geometric ladder; equals 1 iff K = 1"
    return SeedBankSummary(profile.chi, profile.rho, profile.active_fraction,
                           profile.kappa, gamma, constant, note)


def sample_exchange(profile: SeedBankProfile, state: int, rng):
    """One exchange step of a single lineage: (holding time, next state).

    From ACTIVE: Exp(chi) holding, falls asleep into colour m w.p.
    K_m e_m / chi. From colour m: Exp(e_m) holding, wakes to ACTIVE.
    """
    if state == ACTIVE:
        colour = int(profile.sample_colour(rng))
        return rng.exponential(1.0 / profile.chi), colour
    if not 0 <= state <= profile.M:
        raise ValueError(f"state must be ACTIVE or a colour in 0..{profile.M}, got {state}")
    return rng.exponential(1.0 / profile.e[state]), ACTIVE


def sample_wake_times(profile: SeedBankProfile, size, rng):
    """Durations of dormancy spells entered from the active state."""
    colours = profile.sample_colour(rng, size)
    return rng.exponential(1.0 / profile.e[colours])


def wake_time_tail(profile: SeedBankProfile, t):
    """P(dormancy spell > t) = sum_m (K_m e_m / chi) exp(-e_m t), exactly."""
    t = np.asarray(t, dtype=float)
    return np.exp(-np.multiply.outer(t, profile.e)) @ profile.wake_weights


def alternation_active_fraction(profile: SeedBankProfile, cycles: int, rng, *,
                                batches: int = 100):
    """Empirical long-run active fraction over complete sleep/wake cycles.

    Simulates `cycles` pairs (active spell, dormant spell) and returns
    (fraction, standard error); the SE comes from batch means, so `cycles`
    should be a multiple of `batches`.
    """
    if cycles < batches:
        raise ValueError(f"need at least one cycle per batch, got {cycles} < {batches}")
    awake = rng.exponential(1.0 / profile.chi, cycles)
    asleep = sample_wake_times(profile, cycles, rng)
    frac = float(awake.sum() / (awake.sum() + asleep.sum()))
    per = cycles // batches
    n = per * batches
    a = awake[:n].reshape(batches, per).sum(axis=1)
    d = asleep[:n].reshape(batches, per).sum(axis=1)
    batch_frac = a / (a + d)
    se = float(batch_frac.std(ddof=1) / math.sqrt(batches))
    return frac, se
