"""Coexistence versus clustering: integral tests and closed-form regions.

The deciding quantity is an integral of the migration return probability
weighted by how slowly lineages age through the dormant colours: with wake
tail exponent gamma the weight is t^-(1-gamma)/gamma, optionally divided by
a slowly varying modulation phi_hat(t)^(1/gamma). A finite integral means
locally coexisting equilibria; a divergent one means opinions consolidate.

Numerically a divergent integrand is recognised by its fitted tail exponent,
so exponents within a small band of the critical value -1 are flagged as
boundary rather than guessed.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .geometry import MigrationKernel, transition_row


@dataclasses.dataclass(frozen=True)
class FiniteRho:
    """Weight for a summable bank (finite total size): plain dt."""


@dataclasses.dataclass(frozen=True)
class InfiniteRho:
    """Weight t^-(1-gamma)/gamma for wake-tail exponent gamma in (0, 1]."""

    gamma: float

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


@dataclasses.dataclass(frozen=True, eq=False)
class Modulated:
    """Weight phi_hat(t)^(-1/gamma) t^-(1-gamma)/gamma.

    phi_hat must already be the effective modulation: the raw slowly varying
    factor for gamma < 1, its logarithmic average for gamma = 1 (see
    effective_modulation)."""

    gamma: float
    phi_hat: object

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


def effective_modulation(phi, gamma, horizon):
    """The modulation actually entering the integral test.

    For gamma < 1 this is phi itself. For gamma = 1 it is the running
    log-average integral_1^t phi(s) ds / s, tabulated once on a log grid up
    to `horizon` and interpolated.
    """
    if gamma < 1.0:
        return phi
    grid = np.geomspace(1.0, 10.0 * horizon, 4096)
    vals = np.asarray(phi(grid), dtype=float)
    log_t = np.log(grid)
    cum = np.concatenate([[0.0], np.cumsum(np.diff(log_t) * 0.5 * (vals[1:] + vals[:-1]))])

    def phi_hat(t):
        return np.interp(np.log(np.asarray(t, dtype=float)), log_t, cum)

    return phi_hat


@dataclasses.dataclass
class RegimeVerdict:
    verdict: str  # "coexistence" | "clustering" | "boundary"
    value: float  # integral including tail extrapolation (inf if divergent)
    tail_exponent: float | None
    tail_error: float | None
    evidence: dict


def _weight(mode, t):
    if isinstance(mode, FiniteRho):
        return np.ones_like(t)
    if isinstance(mode, InfiniteRho):
        return t ** (-(1.0 - mode.gamma) / mode.gamma)
    if isinstance(mode, Modulated):
        base = t ** (-(1.0 - mode.gamma) / mode.gamma)
        return base * np.asarray(mode.phi_hat(t), dtype=float) ** (-1.0 / mode.gamma)
    raise ValueError(f"unknown mode {mode!r}")


def _kernel_return_probability(kernel: MigrationKernel):
    """Transient return probability of a finite geography, a_t(0,0) - 1/size.

    A finite group always equilibrates, so the raw return probability does
    not decay and the integral test would be meaningless; the transient part
    emulates the infinite lattice up to the mixing time, past which it drops
    exponentially. Verdicts built on it describe the emulated lattice only
    through the fitted exponent window.
    """
    size = kernel.geography.size

    # spectral roundoff leaves ~1e-16 residue around the uniform mass; anything
    # below this floor is equilibration noise, not transient signal
    dead = 1e-12 / size

    def ret(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty(t.shape)
        for k, tk in enumerate(t):
            out[k] = transition_row(kernel, float(tk), method="spectral")[0] - 1.0 / size
        out[out < dead] = 0.0
        return out

    return ret


def coexistence_integral(return_probability, mode, *, horizon=1e6, band=0.05,
                         rtol=1e-6, fit_points=48) -> RegimeVerdict:
    """Integral test on [1, horizon] with tail extrapolation beyond it.

    return_probability: vectorised callable t -> a_t(0, 0) for the infinite
        geography, or a MigrationKernel (its transient part is used; see
        _kernel_return_probability for what that means).
    mode: FiniteRho, InfiniteRho(gamma), or Modulated(gamma, phi_hat).

    The integrand's tail exponent p is fitted on the last decade before the
    horizon; p < -1 - band extrapolates a convergent tail (coexistence),
    p > -1 + band reports divergence (clustering), anything within the band
    is flagged boundary.
    """
    notes = []
    if isinstance(return_probability, MigrationKernel):
        return_probability = _kernel_return_probability(return_probability)
        notes.append("finite geography: exponent fitted on the transient window")

    def integrand(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(return_probability(t), dtype=float) * _weight(mode, t)

    def finite_part(points):
        grid = np.geomspace(1.0, horizon, points)
        f = integrand(grid)
        return float(np.sum(np.diff(grid) * 0.5 * (f[1:] + f[:-1])))

    points = 512
    total = finite_part(points)
    for _ in range(6):
        better = finite_part(2 * points)
        points *= 2
        if abs(better - total) <= rtol * max(abs(better), 1e-300):
            total = better
            break
        total = better

    ts = np.geomspace(horizon / 10.0, horizon, fit_points)
    fs = integrand(ts)
    ok = fs > 0.0
    if ok.sum() < max(4, fit_points // 4):
        # integrand already dead before the horizon: nothing left to diverge
        return RegimeVerdict("coexistence", total, None, None,
                             {"notes": notes + ["integrand vanished before the horizon"],
                              "finite_part": total})
    slope, intercept = np.polyfit(np.log(ts[ok]), np.log(fs[ok]), 1)
    resid = np.log(fs[ok]) - (slope * np.log(ts[ok]) + intercept)
    dof = max(int(ok.sum()) - 2, 1)
    sigma = float(np.sqrt(resid @ resid / dof) / np.sqrt((np.var(np.log(ts[ok])) + 1e-300) * ok.sum()))
    evidence = {"notes": notes, "finite_part": total, "fit_sigma": sigma,
                "fit_window": (float(ts[0]), float(ts[-1]))}

    if slope < -1.0 - band:
        tail = float(fs[-1] * horizon / (-1.0 - slope))
        tail_err = abs(tail) * (abs(slope + 1.0) ** -1) * sigma
        return RegimeVerdict("coexistence", total + tail, float(slope), float(tail_err),
                             dict(evidence, tail=tail))
    if slope > -1.0 + band:
        return RegimeVerdict("clustering", math.inf, float(slope), None,
                             dict(evidence, divergent=True))
    return RegimeVerdict("boundary", math.inf, float(slope), None,
                         dict(evidence, within_band=band))


# ---------------------------------------------------------------------------
# closed-form example families


@dataclasses.dataclass(frozen=True)
class EuclideanSetting:
    """d-dimensional lattice walk with finite variance: return decay t^(-d/2)."""

    d: int
    gamma: float


@dataclasses.dataclass(frozen=True)
class HeavyTailSetting:
    """1-d symmetric walk with jump tail |k|^(-1-q): return decay t^(-1/q)."""

    q: float
    gamma: float


@dataclasses.dataclass(frozen=True)
class HierarchicalSetting:
    """Hierarchical geography with ball weights c^k and geometric bank K^m,
    wake base e; the effective wake-tail exponent is
    gamma_N = log(N/(K e)) / log(N/e)."""

    N: int
    c: float
    K: float
    e: float


def _verdict_from_margin(margin: float, evidence: dict, *, scale=1.0) -> RegimeVerdict:
    if margin > 1e-12 * scale:
        return RegimeVerdict("coexistence", math.nan, None, None, evidence)
    if margin < -1e-12 * scale:
        return RegimeVerdict("clustering", math.nan, None, None, evidence)
    return RegimeVerdict("boundary", math.nan, None, None, evidence)


def classify_example(setting) -> RegimeVerdict:
    """Exact verdict for a closed-form example family.

    Coexistence regions are open: sitting exactly on a threshold gives the
    boundary verdict (the defining integral diverges logarithmically there).
    """
    if isinstance(setting, EuclideanSetting):
        if setting.d < 1:
            raise ValueError(f"dimension must be >= 1, got {setting.d}")
        g = _check_gamma(setting.gamma)
        margin = (1.0 - g) / g + setting.d / 2.0 - 1.0
        return _verdict_from_margin(margin, {
            "family": "euclidean", "d": setting.d, "gamma": g, "margin": margin})
    if isinstance(setting, HeavyTailSetting):
        if not 0.0 < setting.q < 2.0:
            raise ValueError(f"jump exponent q must lie in (0, 2), got {setting.q}")
        g = _check_gamma(setting.gamma)
        margin = (1.0 - g) / g + 1.0 / setting.q - 1.0
        return _verdict_from_margin(margin, {
            "family": "heavy_tail", "q": setting.q, "gamma": g, "margin": margin})
    if isinstance(setting, HierarchicalSetting):
        N, c, K, e = setting.N, setting.c, setting.K, setting.e
        if N < 2:
            raise ValueError(f"hierarchy order must be >= 2, got {N}")
        if not 0.0 < c < N:
            raise ValueError(f"ball weight base must lie in (0, N), got {c}")
        if K < 1:
            raise ValueError(f"bank growth base must be >= 1, got {K}")
        if not 0.0 < e < N or K * e >= N:
            raise ValueError(f"need 0 < e and K*e < N, got K={K}, e={e}, N={N}")
        gamma_n = math.log(N / (K * e)) / math.log(N / e)
        delta_n = math.log(c) / math.log(N / c)
        lhs = math.log(N) * math.log(K * c)
        rhs = math.log(c) * math.log(K * K * e)
        return _verdict_from_margin(lhs - rhs, {
            "family": "hierarchical", "N": N, "c": c, "K": K, "e": e,
            "gamma_N": gamma_n, "delta_N": delta_n, "lhs": lhs, "rhs": rhs},
            scale=max(abs(lhs), abs(rhs), 1.0))
    raise ValueError(f"unknown setting {setting!r}")


def _check_gamma(gamma: float) -> float:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return float(gamma)


# ---------------------------------------------------------------------------
# renormalisation of the resampling rate


def renormalize_fw(d: float, bhat: float) -> float:
    """Volatility reduction d -> d / (1 + d * Bhat) across one scale.

    Bhat is the pair hazard (mean total joint activity time); the result
    always lies strictly between 0 and d for Bhat > 0.
    """
    if d <= 0:
        raise ValueError(f"resampling rate must be > 0, got {d}")
    if bhat < 0:
        raise ValueError(f"hazard must be >= 0, got {bhat}")
    out = d / (1.0 + d * bhat)
    assert 0.0 < out <= d
    return out
