"""Finite-systems experiments: how growing geographies approach the
infinite-population picture.

The natural clock of a geography with size sites and bank weight rho is
beta = (1 + rho)^2 * size: on times s * beta the conserved mean behaves like
a single diffusion with a renormalised volatility. Two competing scales
decide what happens when the colour cutoff grows with the geography: the
deepest-colour wake scale beta_star = M^beta_exponent and the scale
beta_star2 = size^(1/(2 gamma - 1)) at which two lineages meet; their order
splits the parameter space into regimes (ratio below 0.1 or above 10; the
band in between is reported as critical rather than forced).

Everything here draws through block-structured streams, so results are
byte-identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import optimize, special

from .errors import BudgetError, DiagnosticError
from .forward import (DepthMoments, System, SystemState, depth_moments, make_state,
                      run, step)
from .geometry import Geography, estimate_mixing_time
from .seedbank import SeedBankProfile, summarize
from .streams import DEFAULT_BLOCK_SIZE, block_sizes, parallel_map, spawn_rng


# ---------------------------------------------------------------------------
# time scales and regimes


@dataclasses.dataclass
class TimeScaleReport:
    size: int
    kappa: float
    beta: float
    gamma: float | None
    beta_star: float | None
    beta_star2: float | None
    ratio: float | None
    regime: str  # "I" | "II" | "critical" | "not_applicable"


def time_scales(geography: Geography, profile: SeedBankProfile,
                model: str = "M2") -> TimeScaleReport:
    """Characteristic scales of one ladder level.

    beta = kappa * size is the macroscopic clock for every model. Growth
    regimes only make sense for polynomial profiles with a wake-tail
    exponent gamma in (0, 1]: there beta_star = M^beta_exponent is when the
    deepest colour wakes and beta_star2 = size^(1/(2 gamma - 1)) is when two
    lineages meet (exp(size) at gamma = 1/2, infinite below, which forces
    regime I). Everything else reports not_applicable.
    """
    size = geography.size
    beta = profile.kappa * size
    gamma = summarize(profile).gamma
    if (profile.provenance != "polynomial" or profile.M < 1
            or gamma is None or not 0.0 < gamma <= 1.0):
        return TimeScaleReport(size, profile.kappa, beta, gamma, None, None, None,
                               "not_applicable")
    beta_star = float(profile.M) ** dict(profile.params)["beta"]
    if gamma > 0.5:
        beta_star2 = float(size) ** (1.0 / (2.0 * gamma - 1.0))
    elif gamma == 0.5:
        beta_star2 = math.exp(size) if size < 700 else math.inf
    else:
        beta_star2 = math.inf
    ratio = 0.0 if math.isinf(beta_star2) else beta_star / beta_star2
    if ratio < 0.1:
        regime = "I"
    elif ratio > 10.0:
        regime = "II"
    else:
        regime = "critical"
    return TimeScaleReport(size, profile.kappa, beta, gamma, beta_star, beta_star2,
                           ratio, regime)


# ---------------------------------------------------------------------------
# blocked deterministic ensembles


@dataclasses.dataclass
class EnsembleResult:
    """Stacked trajectories, replica-major; extras from Trajectory fields."""

    times: np.ndarray
    theta_hat: np.ndarray  # (replicas, samples)
    theta_x: np.ndarray
    diversity: np.ndarray
    qvar: np.ndarray
    g_mean: np.ndarray
    x_spread: np.ndarray
    final_x: np.ndarray | None = None
    final_y: np.ndarray | None = None


def _label_parts(label):
    return tuple(label) if isinstance(label, (tuple, list)) else (label,)


def projected_cost(system: System, replicas: int, horizon: float, dt=None) -> float:
    """Component updates a run will need: replicas * steps * components."""
    dt = system.default_dt if dt is None else dt
    comps = system.kernel.geography.size * (system.profile.M + 2)
    return float(replicas) * math.ceil(max(horizon, 0.0) / dt) * comps


def run_ensemble(system: System, theta0: float, replicas: int, observe_times, *,
                 master_seed: int, label, dt=None, block_size=DEFAULT_BLOCK_SIZE,
                 workers=1, init="constant", keep_final=False,
                 budget=None) -> EnsembleResult:
    """Independent forward trajectories in fixed replica blocks.

    Block b draws from the stream (master_seed, *label, "block", b) no matter
    which worker runs it, so any `workers` value gives identical output.
    Raises BudgetError before starting if the projected cost exceeds budget.
    """
    times = np.asarray(observe_times, dtype=float)
    if budget is not None:
        need = projected_cost(system, replicas, float(times[-1]), dt)
        if need > budget:
            raise BudgetError(
                f"projected cost {need:.3g} component updates exceeds budget {budget:.3g}")
    sizes = block_sizes(replicas, block_size)
    geog = system.kernel.geography
    parts = _label_parts(label)

    def one_block(job):
        b, nb = job
        rng = spawn_rng(master_seed, *parts, "block", b)
        state = make_state(geog, system.profile, theta0, batch=(nb,), kind=init, rng=rng)
        traj = run(state, system, times, rng, dt=dt)
        return traj, (state if keep_final else None)

    results = parallel_map(one_block, list(enumerate(sizes)), workers)
    trajs = [t for t, _ in results]
    out = EnsembleResult(
        times=times,
        theta_hat=np.concatenate([t.theta_hat for t in trajs]),
        theta_x=np.concatenate([t.theta_x for t in trajs]),
        diversity=np.concatenate([t.diversity for t in trajs]),
        qvar=np.concatenate([t.qvar for t in trajs]),
        g_mean=np.concatenate([t.g_mean for t in trajs]),
        x_spread=np.concatenate([t.x_spread for t in trajs]),
    )
    if keep_final:
        out.final_x = np.concatenate([s.x for _, s in results])
        out.final_y = np.concatenate([s.y for _, s in results])
    return out


# ---------------------------------------------------------------------------
# the finite-systems ladder


@dataclasses.dataclass
class LadderLevel:
    n: int
    report: TimeScaleReport
    ensemble: EnsembleResult
    final_moments: DepthMoments


def finite_systems_run(build_system, ladder, s_grid, theta0, replicas, *,
                       master_seed, label="fss", workers=1, dt=None,
                       block_size=DEFAULT_BLOCK_SIZE, init="constant",
                       budget=None) -> list:
    """Run the same model on a ladder of geographies, on matched clocks.

    build_system: callable n -> System for ladder entry n.
    s_grid: observation times in units of each level's own beta.

    The projected cost of the whole ladder is checked against the budget
    before any level starts. Each level keeps its final states (for
    colour-resolved moments) alongside the macroscopic trajectories.
    """
    if list(ladder) != sorted(set(ladder)):
        raise ValueError("ladder must be strictly increasing")
    systems = {n: build_system(n) for n in ladder}
    reports = {n: time_scales(systems[n].kernel.geography, systems[n].profile)
               for n in ladder}
    s_grid = np.asarray(s_grid, dtype=float)
    if budget is not None:
        need = sum(projected_cost(systems[n], replicas, float(s_grid[-1] * reports[n].beta), dt)
                   for n in ladder)
        if need > budget:
            raise BudgetError(
                f"projected ladder cost {need:.3g} component updates exceeds budget {budget:.3g}")
    levels = []
    for n in ladder:
        ens = run_ensemble(systems[n], theta0, replicas, s_grid * reports[n].beta,
                           master_seed=master_seed, label=_label_parts(label) + (f"n{n}",),
                           dt=dt, block_size=block_size, workers=workers, init=init,
                           keep_final=True, budget=None)
        final = SystemState(ens.final_x, ens.final_y)
        levels.append(LadderLevel(n, reports[n], ens, depth_moments(final)))
    return levels


# ---------------------------------------------------------------------------
# the renormalised volatility map


def relaxation_time(system: System) -> float:
    """Longer of the slowest wake-up time and the kernel relaxation time.

    1/min_m e_m bounds how long the deepest colour takes to turn over; the
    reciprocal spectral gap does the same for migration. Quasi-equilibrium
    burn-ins are measured in multiples of this.
    """
    slowest_wake = 1.0 / float(np.min(system.profile.e))
    if system.kernel.geography.size > 1:
        return max(slowest_wake, 1.0 / system.kernel.spectral_gap)
    return slowest_wake


@dataclasses.dataclass
class FgEstimate:
    thetas: np.ndarray
    value: np.ndarray
    se: np.ndarray
    equilibrated: np.ndarray
    var_route: np.ndarray | None
    relax_time: float
    burn_in: float
    window: float
    replicas: int


def estimate_Fg(system: System, thetas, *, master_seed, label="fg", replicas=4,
                workers=1, dt=None, burn_mult=10.0, sample_count=40,
                bhat=None) -> FgEstimate:
    """Quasi-equilibrium estimate of the renormalised volatility F g (theta).

    Runs `replicas` copies per theta, discards a burn-in of burn_mult
    relaxation times, then time-averages the site-mean of g over
    sample_count snapshots spaced half a relaxation time apart. The standard
    error is across replicas; `equilibrated` flags whether the two window
    halves agree within twice their pooled spread. With `bhat` the variance
    route mean (x_i - theta_hat)^2 / bhat is reported alongside.
    """
    thetas = np.asarray(thetas, dtype=float)
    relax = relaxation_time(system)
    burn = burn_mult * relax
    delta = 0.5 * relax
    times = burn + delta * np.arange(1, sample_count + 1)
    value = np.empty(thetas.shape)
    se = np.empty(thetas.shape)
    flag = np.empty(thetas.shape, dtype=bool)
    var_route = np.empty(thetas.shape) if bhat is not None else None
    for k, theta in enumerate(thetas):
        ens = run_ensemble(system, float(theta), replicas, times,
                           master_seed=master_seed,
                           label=_label_parts(label) + (f"theta{k}",),
                           dt=dt, workers=workers, block_size=max(replicas, 1))
        per_rep = ens.g_mean.mean(axis=1)
        value[k] = float(per_rep.mean())
        se[k] = float(per_rep.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
        half = sample_count // 2
        a = ens.g_mean[:, :half].mean()
        b = ens.g_mean[:, half:].mean()
        flag[k] = abs(a - b) <= 2.0 * max(se[k], 1e-300)
        if var_route is not None:
            var_route[k] = float(ens.x_spread.mean() / bhat)
    return FgEstimate(thetas, value, se, flag, var_route, relax, burn,
                      float(times[-1] - times[0]), replicas)


# ---------------------------------------------------------------------------
# the limiting single diffusions


def fg_diffusion_reference(g_fn, theta0: float, s_grid, replicas: int, *,
                           master_seed, label="reference", dt=1e-3) -> np.ndarray:
    """Ensemble of the limit diffusion d Theta = sqrt(g(Theta)) dW.

    g_fn is a callable on [0, 1], or a table of values on a uniform grid
    over [0, 1] (endpoints forced to zero, linear in between). Returns
    samples of Theta at the s_grid times, shape (replicas, len(s_grid)).
    Endpoints are absorbing because g vanishes there.
    """
    if not callable(g_fn):
        table = np.asarray(g_fn, dtype=float).copy()
        if table.ndim != 1 or table.size < 3:
            raise ValueError("a tabulated g needs at least 3 values on [0, 1]")
        table[0] = table[-1] = 0.0
        grid = np.linspace(0.0, 1.0, table.size)
        g_fn = lambda x: np.interp(x, grid, table)
    s_grid = np.asarray(s_grid, dtype=float)
    rng = spawn_rng(master_seed, *_label_parts(label))
    theta = np.full(replicas, float(theta0))
    out = np.empty((replicas, s_grid.size))
    t = 0.0
    for k, target in enumerate(s_grid):
        while t < target - 1e-12 * max(1.0, target):
            h = min(dt, target - t)
            theta += np.sqrt(np.clip(g_fn(theta), 0.0, None) * h) * rng.standard_normal(replicas)
            np.clip(theta, 0.0, 1.0, out=theta)
            t += h
        out[:, k] = theta
    return out


def reference_hitting_times(g_fn, theta0: float, replicas: int, *, master_seed,
                            label="hitting", dt=1e-3, eps=1e-4, horizon=100.0):
    """First times the limit diffusion comes within eps of an endpoint.

    Returns (times, censored); censored entries report the horizon."""
    rng = spawn_rng(master_seed, *_label_parts(label))
    theta = np.full(replicas, float(theta0))
    times = np.full(replicas, float(horizon))
    open_ = np.ones(replicas, dtype=bool)
    t = 0.0
    while open_.any() and t < horizon:
        theta += np.sqrt(np.clip(g_fn(theta), 0.0, None) * dt) * rng.standard_normal(replicas)
        np.clip(theta, 0.0, 1.0, out=theta)
        t += dt
        hit = open_ & (np.minimum(theta, 1.0 - theta) <= eps)
        times[hit] = t
        open_ &= ~hit
    return times, open_


# ---------------------------------------------------------------------------
# trapping times of the finite system


def accessibility_index(g_fn, *, cuts=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6), points=4096):
    """Numerical probe of whether the diffusion can reach its endpoints.

    Computes I(eps) = integral of x(1-x)/g(x) over [eps, 1-eps] for a
    shrinking sequence of eps. Returns (values, accessible): accessible when
    the last refinement grows the integral by under 5 percent, i.e. the
    integral looks convergent. Endpoints are reachable in finite time
    exactly when it is.
    """
    vals = []
    for eps in cuts:
        x = np.linspace(eps, 1.0 - eps, points)
        y = x * (1.0 - x) / np.clip(g_fn(x), 1e-300, None)
        vals.append(float(np.trapezoid(y, x)))
    vals = np.asarray(vals)
    accessible = bool(vals[-1] - vals[-2] <= 0.05 * abs(vals[-1]))
    return vals, accessible


@dataclasses.dataclass
class TrappingResult:
    times: np.ndarray
    censored: np.ndarray
    eps: float
    horizon: float
    accessible: bool


def trapping_time(system: System, theta0: float, replicas: int, *, master_seed,
                  label="trapping", horizon, eps=1e-4, dt=None,
                  block_size=DEFAULT_BLOCK_SIZE, workers=1,
                  init="constant") -> TrappingResult:
    """First time every component of a replica is within eps of a common trap.

    Replicas that never trap before the horizon are censored at it; when g
    fails the accessibility test censoring is the expected outcome, not an
    error. A replica already trapped at the start reports time 0.
    """
    if dt is None:
        dt = system.default_dt
    geog = system.kernel.geography
    parts = _label_parts(label)

    def margin(state):
        # distance of the farthest component from each trap; the replica is
        # trapped once one trap has every component within eps of it
        far0 = np.maximum(state.x.max(axis=-1), state.y.max(axis=(-2, -1)))
        far1 = np.maximum((1.0 - state.x).max(axis=-1),
                          (1.0 - state.y).max(axis=(-2, -1)))
        return np.minimum(far0, far1)

    def one_block(job):
        b, nb = job
        rng = spawn_rng(master_seed, *parts, "block", b)
        state = make_state(geog, system.profile, theta0, batch=(nb,), kind=init, rng=rng)
        times = np.full(nb, float(horizon))
        open_ = margin(state) > eps
        times[~open_] = 0.0
        while open_.any() and state.time < horizon:
            step(state, system, min(dt, horizon - state.time), rng)
            hit = open_ & (margin(state) <= eps)
            times[hit] = state.time
            open_ &= ~hit
        return times, open_

    results = parallel_map(one_block, list(enumerate(block_sizes(replicas, block_size))),
                           workers)
    _, accessible = accessibility_index(system.g)
    return TrappingResult(np.concatenate([t for t, _ in results]),
                          np.concatenate([c for _, c in results]), eps, float(horizon),
                          accessible)


# ---------------------------------------------------------------------------
# clustering depth diagnostics


@dataclasses.dataclass
class ClusterProbe:
    time: float
    depth: int
    shallow_diag: np.ndarray  # (replicas,) pair diagnostic over colours <= depth
    full_diag: np.ndarray  # same over every colour
    upsilon: np.ndarray  # (replicas,) shallow consensus indicator in {0, 1}
    x_mean: np.ndarray
    y_mean: np.ndarray  # (replicas, colours)


@dataclasses.dataclass
class ClusterReport:
    probes: list
    warnings: list


def _pair_diagnostic(v):
    """Mean of z_u (1 - z_w) over ordered pairs u != w of components."""
    P = v.shape[-1]
    s1 = v.sum(axis=-1)
    mixed = (v * (1.0 - v)).sum(axis=-1)
    return (s1 * (P - s1) - mixed) / (P * (P - 1))


def monitor_depth(t: float, beta_exponent: float) -> int:
    """Colour depth reachable by time t: floor(t^(1/beta_exponent) / 10)."""
    if t <= 0.0:
        return 0
    return int(math.floor(t ** (1.0 / beta_exponent) / 10.0))


def clustering_diagnostics(system: System, theta0: float, probe_times, replicas: int, *,
                           master_seed, label="clustering", dt=None,
                           block_size=DEFAULT_BLOCK_SIZE, workers=1, init="constant",
                           depth_rule=None, mixing_eps=0.01) -> ClusterReport:
    """Consensus formation colour by colour along a single long run.

    At each probe time the components down to the monitor depth (active
    layer plus colours m <= depth) form the shallow set; reported are the
    pair diagnostic mean z(1-z) over shallow components, the same over all
    components, the per-replica shallow consensus indicator, and layer
    means. depth_rule overrides the default cutoff floor(t^(1/beta)/10).

    Emits a warning when the migration mixing time is not small against the
    meeting scale (beta_star2 ** gamma), where the local-equilibrium reading
    of the shallow diagnostic becomes unreliable.
    """
    times = np.asarray(probe_times, dtype=float)
    prof = system.profile
    if depth_rule is None:
        if prof.provenance != "polynomial":
            raise ValueError("default depth rule needs a polynomial profile; pass depth_rule")
        beta_exp = dict(prof.params)["beta"]
        depth_rule = lambda t: monitor_depth(t, beta_exp)
    geog = system.kernel.geography
    parts = _label_parts(label)

    def one_block(job):
        b, nb = job
        rng = spawn_rng(master_seed, *parts, "block", b)
        state = make_state(geog, prof, theta0, batch=(nb,), kind=init, rng=rng)
        rows = []
        dt_eff = system.default_dt if dt is None else dt
        for target in times:
            while state.time < target - 1e-9 * max(1.0, target):
                step(state, system, min(dt_eff, target - state.time), rng)
            depth = min(depth_rule(target), prof.M)
            shallow = np.concatenate(
                [state.x[..., None, :], state.y[..., :depth + 1, :]], axis=-2)
            shallow = shallow.reshape(nb, -1)
            full = np.concatenate([state.x[..., None, :], state.y], axis=-2).reshape(nb, -1)
            rows.append((depth,
                         _pair_diagnostic(shallow),
                         _pair_diagnostic(full),
                         (shallow.mean(axis=-1) > 0.5).astype(float),
                         state.x.mean(axis=-1),
                         state.y.mean(axis=-1)))
        return rows

    blocks = parallel_map(one_block, list(enumerate(block_sizes(replicas, block_size))),
                          workers)
    probes = []
    for k, t in enumerate(times):
        depth = blocks[0][k][0]
        probes.append(ClusterProbe(
            float(t), depth,
            shallow_diag=np.concatenate([b[k][1] for b in blocks]),
            full_diag=np.concatenate([b[k][2] for b in blocks]),
            upsilon=np.concatenate([b[k][3] for b in blocks]),
            x_mean=np.concatenate([b[k][4] for b in blocks]),
            y_mean=np.concatenate([b[k][5] for b in blocks]),
        ))
    warnings = []
    report = time_scales(geog, prof)
    if report.gamma is not None and report.beta_star2 is not None \
            and not math.isinf(report.beta_star2):
        meet = report.beta_star2 ** report.gamma
        psi = estimate_mixing_time(system.kernel, mixing_eps)
        if psi >= 0.1 * meet:
            warnings.append(
                f"mixing time {psi:.3g} is not small against the meeting scale "
                f"{meet:.3g}; local-equilibrium diagnostics may be distorted")
    return ClusterReport(probes, warnings)


# ---------------------------------------------------------------------------
# renewal-intersection emulation of the meeting structure


@dataclasses.dataclass
class RenewalResult:
    gamma: float
    gamma_star_target: float
    gamma_star_hat: float
    fit_sigma: float
    gap_count: int
    ccdf_x: np.ndarray
    ccdf_y: np.ndarray
    laplace_lambda: np.ndarray
    laplace_empirical: np.ndarray
    laplace_D: float
    laplace_curve: np.ndarray
    group_size: int


def _power_law_epochs(horizon: int, cum: np.ndarray, total_mass: float, rng):
    """Epochs of a renewal process with increment tail exponent gamma on
    1..horizon; stops at the first epoch beyond the horizon."""
    chunks = []
    last = 0
    while last <= horizon:
        u = rng.uniform(0.0, total_mass, 65536)
        inc = np.searchsorted(cum, u, side="left") + 1
        epochs = last + np.cumsum(inc)
        over = np.searchsorted(epochs, horizon, side="right")
        if over < epochs.size:
            chunks.append(epochs[:over])
            break
        chunks.append(epochs)
        last = int(epochs[-1])
    return np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)


def renewal_intersection(gamma: float, *, horizon=10_000_000, replicas=100,
                         master_seed, label="renewal", group_size=4096,
                         lambdas=None, laplace_draws=2000) -> RenewalResult:
    """Common epochs of two heavy-tailed renewal walks, and their time law.

    Increments follow P(zeta = k) proportional to k^-(1+gamma) with gamma in
    (1/2, 1); the gaps of the intersected walk have tail exponent
    gamma_star = 2 gamma - 1, fitted here from the pooled gap CCDF. The
    meeting-time emulation thins the gaps by a Geometric(1/group_size) count
    and rescales by group_size^(1/gamma_star); its Laplace transform is
    fitted with the one-parameter family 1 / (1 + D lambda^gamma_star).
    """
    if not 0.5 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (1/2, 1), got {gamma}")
    horizon = int(horizon)
    n = np.arange(1, horizon + 1, dtype=float)
    cum = np.cumsum(n ** -(1.0 + gamma))
    total_mass = float(special.zeta(1.0 + gamma, 1.0))
    del n

    gaps = []
    for r in range(replicas):
        rng = spawn_rng(master_seed, *_label_parts(label), "walk", r)
        e1 = _power_law_epochs(horizon, cum, total_mass, rng)
        e2 = _power_law_epochs(horizon, cum, total_mass, rng)
        common = np.intersect1d(e1, e2, assume_unique=True)
        if common.size >= 2:
            gaps.append(np.diff(common))
    if not gaps:
        raise DiagnosticError("no common epochs found; raise the horizon or replicas")
    gaps = np.concatenate(gaps).astype(np.int64)

    target = 2.0 * gamma - 1.0
    srt = np.sort(gaps)
    # Window: from the square root of the 200th-largest gap up to that gap.
    # Below it the gap law has not reached its power tail; above it the
    # window edge censors (a gap of size x only fits in the remaining
    # horizon), which the (1 - x/H)^a factor undoes, iterating on a.
    x_hi = srt[max(0, srt.size - 200)]
    x_lo = max(4, int(x_hi ** 0.5))
    xs = np.unique(np.geomspace(x_lo, max(x_hi, x_lo + 1), 40).astype(np.int64))
    ccdf = 1.0 - np.searchsorted(srt, xs, side="right") / srt.size
    keep = ccdf > 0.0
    xs, ccdf = xs[keep], ccdf[keep]
    if xs.size < 4:
        raise DiagnosticError("too few distinct tail gaps to fit; raise the horizon")
    alpha = None
    for _ in range(3):
        corr = ccdf if alpha is None else \
            ccdf / np.clip(1.0 - xs / horizon, 1e-6, None) ** alpha
        slope, intercept = np.polyfit(np.log(xs), np.log(corr), 1)
        alpha = min(max(-slope, 0.05), 1.0)  # clipped only for the correction factor
    resid = np.log(corr) - (slope * np.log(xs) + intercept)
    sigma = float(np.sqrt((resid @ resid) / max(xs.size - 2, 1))
                  / np.sqrt(np.var(np.log(xs)) * xs.size + 1e-300))

    rng = spawn_rng(master_seed, *_label_parts(label), "laplace")
    counts = rng.geometric(1.0 / group_size, laplace_draws)
    owner = np.repeat(np.arange(laplace_draws), counts)
    draws = gaps[rng.integers(0, gaps.size, int(counts.sum()))]
    sums = np.zeros(laplace_draws)
    np.add.at(sums, owner, draws.astype(float))
    T = sums / group_size ** (1.0 / target)
    lam = np.geomspace(0.05, 20.0, 24) if lambdas is None else np.asarray(lambdas, float)
    empirical = np.exp(-np.multiply.outer(lam, T)).mean(axis=1)

    def loss(log_d):
        model = 1.0 / (1.0 + math.exp(log_d) * lam ** target)
        return float(np.sum((model - empirical) ** 2))

    fit = optimize.minimize_scalar(loss, bounds=(-12.0, 12.0), method="bounded")
    D = float(math.exp(fit.x))
    curve = 1.0 / (1.0 + D * lam ** target)
    return RenewalResult(gamma, target, float(-slope), sigma, int(gaps.size),
                         xs.astype(float), ccdf, lam, empirical, D, curve, group_size)
