"""Forward-in-time dynamics: interacting diffusions with dormant layers.

Each site i carries an active type frequency x_i in [0, 1] and one dormant
frequency y_{i,m} per colour m. Active components migrate through the
kernel, fluctuate with local variance g(x_i), and exchange with the banks
at colour rates K_m e_m (in), e_m (out). Dormant components neither migrate
nor fluctuate, except in the displaced-exchange model ("M3") where the
exchange itself moves mass through per-colour displacement distributions.

Integration is Euler with reflection-free clamping to [0, 1]: the noise
amplitude is evaluated at the clamped pre-step state, so the scheme is the
usual full-truncation variant and preserves the simplex exactly.
"""

from __future__ import annotations

import dataclasses
import math
from functools import cached_property

import numpy as np

from .geometry import DisplacementOperator, MigrationKernel
from .seedbank import SeedBankProfile

# ---------------------------------------------------------------------------
# local diffusion functions (class: vanish at 0 and 1, positive inside,
# Lipschitz on [0, 1])


@dataclasses.dataclass(frozen=True)
class FisherWright:
    """g(x) = d x(1-x)."""

    d: float = 1.0

    def __call__(self, x):
        return self.d * x * (1.0 - x)

    @property
    def lipschitz(self) -> float:
        return self.d


@dataclasses.dataclass(frozen=True)
class OhtaKimura:
    """g(x) = d (x(1-x))^2; vanishes quadratically at both ends."""

    d: float = 1.0

    def __call__(self, x):
        z = x * (1.0 - x)
        return self.d * z * z

    @property
    def lipschitz(self) -> float:
        return self.d * math.sqrt(3.0) / 9.0


@dataclasses.dataclass(frozen=True, eq=False)
class TabulatedDiffusion:
    """g given on a uniform grid over [0, 1], linearly interpolated."""

    values: np.ndarray
    lipschitz: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1 or self.values.size < 3:
            raise ValueError("need at least 3 grid values including both endpoints")

    @cached_property
    def _grid(self):
        return np.linspace(0.0, 1.0, self.values.size)

    def __call__(self, x):
        return np.interp(x, self._grid, self.values)


def validate_diffusion(g, *, interior_points=1999):
    """Check membership in the admissible class; raises ValueError if not.

    Requires g(0) = g(1) = 0 to within 1e-12, g > 0 on an interior grid, and
    a finite declared Lipschitz constant that the difference quotients on
    the grid do not exceed.
    """
    lip = getattr(g, "lipschitz", None)
    if lip is None or not np.isfinite(lip) or lip < 0:
        raise ValueError(f"diffusion function needs a finite lipschitz >= 0, got {lip}")
    ends = np.abs(np.asarray(g(np.array([0.0, 1.0])), dtype=float))
    if np.any(ends > 1e-12):
        raise ValueError(f"g must vanish at 0 and 1, got {ends}")
    grid = np.linspace(0.0, 1.0, interior_points + 2)
    vals = np.asarray(g(grid), dtype=float)
    if np.max(np.abs(vals)) <= 1e-12:
        return  # identically zero: the noise-free member of the class
    if lip == 0:
        raise ValueError("a nonzero g needs a positive lipschitz")
    if np.any(vals[1:-1] <= 0.0):
        bad = grid[1:-1][vals[1:-1] <= 0.0][0]
        raise ValueError(f"g must be positive on (0, 1); g({bad}) <= 0")
    quot = np.max(np.abs(np.diff(vals))) / (grid[1] - grid[0])
    if quot > lip * (1.0 + 1e-9) + 1e-12:
        raise ValueError(
            f"grid difference quotient {quot:.6g} exceeds declared lipschitz {lip:.6g}")


# ---------------------------------------------------------------------------
# system bundle and state


@dataclasses.dataclass(eq=False)
class System:
    """Everything fixed along a trajectory: kernel, bank profile, g, model.

    model "M1" is the single-colour bank (profile must have M = 0), "M2" the
    colour-ladder bank, "M3" the displaced-exchange variant: displacement
    holds one probability row per colour and both exchange directions move
    through it.
    """

    kernel: MigrationKernel
    profile: SeedBankProfile
    g: object
    model: str = "M2"
    displacement: np.ndarray | None = None

    def __post_init__(self):
        if self.model not in ("M1", "M2", "M3"):
            raise ValueError(f"model must be M1, M2 or M3, got {self.model!r}")
        if self.model == "M1" and self.profile.M != 0:
            raise ValueError(f"model M1 has a single colour, profile has M={self.profile.M}")
        if self.model == "M3":
            if self.displacement is None:
                raise ValueError("model M3 needs per-colour displacement rows")
            disp = np.asarray(self.displacement, dtype=float)
            want = (self.profile.M + 1, self.kernel.geography.size)
            if disp.shape != want:
                raise ValueError(f"displacement must have shape {want}, got {disp.shape}")
            if np.any(disp < 0) or not np.allclose(disp.sum(axis=1), 1.0, atol=1e-12):
                raise ValueError("displacement rows must be probability distributions")
            self.displacement = disp
        elif self.displacement is not None:
            raise ValueError("displacement rows are only meaningful for model M3")
        validate_diffusion(self.g)

    @cached_property
    def displacement_ops(self):
        return [DisplacementOperator(self.kernel.geography, r) for r in self.displacement]

    @property
    def default_dt(self) -> float:
        """min(0.01, 0.1 / per-site event rate); rate counts migration out,
        total sleep pressure, and the fastest wake rate."""
        rate = self.kernel.total_rate + self.profile.chi + float(np.max(self.profile.e))
        return min(0.01, 0.1 / rate)


@dataclasses.dataclass(eq=False)
class SystemState:
    """x: (..., size) active frequencies; y: (..., colours, size) dormant."""

    x: np.ndarray
    y: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.shape != self.x.shape[:-1] + (self.y.shape[-2], self.x.shape[-1]):
            raise ValueError(f"y shape {self.y.shape} incompatible with x shape {self.x.shape}")

    @property
    def size(self) -> int:
        return self.x.shape[-1]

    @property
    def colours(self) -> int:
        return self.y.shape[-2]

    @property
    def batch_shape(self):
        return self.x.shape[:-1]

    def copy(self) -> "SystemState":
        return SystemState(self.x.copy(), self.y.copy(), self.time)


def make_state(geography, profile, theta, *, batch=(), kind="constant",
               rng=None) -> SystemState:
    """Initial state at density theta.

    kind "constant" sets every component to theta exactly; "bernoulli" draws
    each component in {0, 1} with mean theta (needs rng).
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    shape_x = tuple(batch) + (geography.size,)
    shape_y = tuple(batch) + (profile.M + 1, geography.size)
    if kind == "constant":
        return SystemState(np.full(shape_x, float(theta)), np.full(shape_y, float(theta)))
    if kind == "bernoulli":
        if rng is None:
            raise ValueError("kind 'bernoulli' needs an rng")
        x = (rng.random(shape_x) < theta).astype(float)
        y = (rng.random(shape_y) < theta).astype(float)
        return SystemState(x, y)
    raise ValueError(f"unknown initial kind {kind!r}")


# ---------------------------------------------------------------------------
# dynamics


def drift(state: SystemState, system: System):
    """Drift fields (dx, dy) at the current state."""
    x, y = state.x, state.y
    prof = system.profile
    w = prof.K * prof.e
    mig = system.kernel.apply(x) - system.kernel.total_rate * x
    if system.model == "M3":
        pull = np.zeros_like(x)
        dy = np.empty_like(y)
        for m, op in enumerate(system.displacement_ops):
            pull += w[m] * op.convolve(y[..., m, :])
            dy[..., m, :] = prof.e[m] * (op.correlate(x) - y[..., m, :])
        dx = mig + pull - prof.chi * x
        return dx, dy
    pull = np.einsum("c,...cs->...s", w, y)
    dx = mig + pull - prof.chi * x
    dy = prof.e[:, None] * (x[..., None, :] - y)
    return dx, dy


def step(state: SystemState, system: System, dt: float, rng) -> SystemState:
    """One Euler step of length dt, in place. Noise only on active components;
    the diffusion coefficient is evaluated before the move."""
    dx, dy = drift(state, system)
    gx = system.g(state.x)
    noise = rng.standard_normal(state.x.shape)
    state.x += dt * dx + np.sqrt(gx * dt) * noise
    np.clip(state.x, 0.0, 1.0, out=state.x)
    state.y += dt * dy
    np.clip(state.y, 0.0, 1.0, out=state.y)
    state.time += dt
    return state


def macroscopic(state: SystemState, profile: SeedBankProfile):
    """Conserved-mean coordinates (theta_hat, theta_x).

    theta_hat averages active and dormant mass with bank weights K_m and is
    the martingale coordinate; theta_x averages the active layer only.
    """
    xbar = state.x.mean(axis=-1)
    ybar = state.y.mean(axis=-1)
    theta_hat = (xbar + ybar @ profile.K) / (1.0 + profile.rho)
    return theta_hat, xbar


def increasing_process_increment(state: SystemState, system: System, dt: float,
                                 *, clock="fine"):
    """Quadratic-variation increment of theta_hat over a step of length dt.

    clock "fine": dt * sum_i g(x_i) / (size^2 kappa), the raw clock.
    clock "macroscopic": ds * mean_i g(x_i), the same quantity per unit of
    slowed-down time s = t / (kappa * size).
    """
    total = system.g(state.x).sum(axis=-1)
    if clock == "fine":
        return dt * total / (state.size**2 * system.profile.kappa)
    if clock == "macroscopic":
        return dt * total / state.size
    raise ValueError(f"unknown clock {clock!r}")


def diversity(state: SystemState):
    """Site-averaged active heterozygosity mean_i x_i (1 - x_i)."""
    return (state.x * (1.0 - state.x)).mean(axis=-1)


@dataclasses.dataclass
class DepthMoments:
    """Site-averaged first and second moments, colour by colour."""

    x_mean: np.ndarray
    x_var: np.ndarray
    y_mean: np.ndarray  # (..., colours)
    y_var: np.ndarray
    xy_cov: np.ndarray  # (..., colours), cov of x_i and y_{i,m} across sites


def depth_moments(state: SystemState) -> DepthMoments:
    x, y = state.x, state.y
    xm = x.mean(axis=-1)
    ym = y.mean(axis=-1)
    xc = x - xm[..., None]
    yc = y - ym[..., None]
    return DepthMoments(
        x_mean=xm,
        x_var=(xc * xc).mean(axis=-1),
        y_mean=ym,
        y_var=(yc * yc).mean(axis=-1),
        xy_cov=(xc[..., None, :] * yc).mean(axis=-1),
    )


# ---------------------------------------------------------------------------
# trajectories


@dataclasses.dataclass
class Trajectory:
    """Observables recorded along a run; leading axes are the batch shape."""

    times: np.ndarray
    theta_hat: np.ndarray
    theta_x: np.ndarray
    diversity: np.ndarray
    qvar: np.ndarray
    g_mean: np.ndarray = None  # site-mean of g(x), the quadratic-variation density
    x_spread: np.ndarray = None  # site-mean of (x_i - theta_hat)^2


def run(state: SystemState, system: System, observe_times, rng, *, dt=None) -> Trajectory:
    """Integrate in place, recording observables at the requested times.

    observe_times must be nondecreasing and start at or after state.time;
    steps shrink to land on each observation time exactly. qvar accumulates
    the fine-clock quadratic variation of theta_hat from state.time onward.
    """
    times = np.asarray(observe_times, dtype=float)
    if times.ndim != 1:
        raise ValueError("observe_times must be a 1-d sequence")
    if np.any(np.diff(times) < 0):
        raise ValueError("observe_times must be nondecreasing")
    if times.size and times[0] < state.time - 1e-12:
        raise ValueError(f"first observation {times[0]} precedes state time {state.time}")
    if dt is None:
        dt = system.default_dt

    batch = state.batch_shape
    out = Trajectory(
        times=times.copy(),
        theta_hat=np.empty(batch + times.shape),
        theta_x=np.empty(batch + times.shape),
        diversity=np.empty(batch + times.shape),
        qvar=np.empty(batch + times.shape),
        g_mean=np.empty(batch + times.shape),
        x_spread=np.empty(batch + times.shape),
    )
    qv = np.zeros(batch)
    for k, target in enumerate(times):
        while state.time < target - 1e-9 * max(1.0, target):
            h = min(dt, target - state.time)
            qv += increasing_process_increment(state, system, h)
            step(state, system, h, rng)
        th, tx = macroscopic(state, system.profile)
        out.theta_hat[..., k] = th
        out.theta_x[..., k] = tx
        out.diversity[..., k] = diversity(state)
        out.qvar[..., k] = qv
        out.g_mean[..., k] = system.g(state.x).mean(axis=-1)
        out.x_spread[..., k] = ((state.x - th[..., None]) ** 2).mean(axis=-1)
    return out
