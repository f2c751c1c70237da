"""Backward-in-time duals: coalescing lineages that migrate and lie dormant.

A lineage is either active at a site (migrating with the symmetrised kernel,
falling asleep at rate K_m e_m into colour m) or dormant with a colour
(waking at rate e_m). Two active lineages at the same site coalesce at the
resampling rate d. In the displaced-exchange model ("M3") falling asleep and
waking also move the lineage through the per-colour displacement rows, which
must themselves be symmetric for the dual to be well defined.

Moment identities against the forward system hold exactly when g is the
pure resampling diffusion g(x) = d x(1-x); the moment-dual routines here are
therefore restricted to that case and serve as oracles for the integrator.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DiagnosticError
from .geometry import DisplacementOperator, Geography, MigrationKernel
from .markov import uniformized_distribution
from .seedbank import ACTIVE, SeedBankProfile


def _hat(kernel: MigrationKernel) -> MigrationKernel:
    return kernel if kernel.symmetric else kernel.symmetrized()


def _displacement_ops(geography: Geography, displacement, colours: int):
    if displacement is None:
        raise ValueError("model M3 needs per-colour displacement rows")
    if isinstance(displacement, (list, tuple)) and displacement and isinstance(
            displacement[0], DisplacementOperator):
        ops = list(displacement)
    else:
        rows = np.asarray(displacement, dtype=float)
        ops = [DisplacementOperator(geography, r) for r in rows]
    if len(ops) != colours:
        raise ValueError(f"need {colours} displacement rows, got {len(ops)}")
    perm = geography.neg(np.arange(geography.size))
    for m, op in enumerate(ops):
        if not np.allclose(op.row, op.row[perm], rtol=0.0, atol=1e-12):
            raise ValueError(
                f"displaced-exchange dual needs symmetric displacement rows; row {m} is not")
    return ops


# ---------------------------------------------------------------------------
# single lineages and the general coalescent


@dataclasses.dataclass(frozen=True)
class Lineage:
    site: int
    mode: int  # ACTIVE or a dormancy colour >= 0
    id: int = 0
    alive: bool = True


@dataclasses.dataclass(frozen=True)
class Event:
    t: float
    type: str  # "migrate" | "sleep" | "wake" | "coalesce"
    ids: tuple
    site: int
    colour: int | None


@dataclasses.dataclass
class CoalescentHistory:
    events: list
    blocks: tuple  # partition of the initial ids by common ancestry
    lineages: list  # surviving Lineage records at the horizon
    horizon: float


def step_lineage(lineage: Lineage, kernel: MigrationKernel, profile: SeedBankProfile,
                 rng, *, model="M2", displacement=None):
    """One jump of a single lineage: returns (holding time, next Lineage)."""
    khat = _hat(kernel)
    g = khat.geography
    if lineage.mode == ACTIVE:
        rate = khat.total_rate + profile.chi
        elapsed = rng.exponential(1.0 / rate)
        if rng.random() * rate < khat.total_rate:
            site = g.add(lineage.site, int(khat.sample_jump(rng)))
            return elapsed, dataclasses.replace(lineage, site=int(site))
        colour = int(profile.sample_colour(rng))
        site = lineage.site
        if model == "M3":
            ops = _displacement_ops(g, displacement, profile.M + 1)
            site = int(g.sub(lineage.site, int(ops[colour].sample(rng))))
        return elapsed, dataclasses.replace(lineage, site=site, mode=colour)
    if not 0 <= lineage.mode <= profile.M:
        raise ValueError(f"lineage mode must be ACTIVE or a colour <= {profile.M}")
    elapsed = rng.exponential(1.0 / profile.e[lineage.mode])
    site = lineage.site
    if model == "M3":
        ops = _displacement_ops(g, displacement, profile.M + 1)
        site = int(g.add(lineage.site, int(ops[lineage.mode].sample(rng))))
    return elapsed, dataclasses.replace(lineage, site=site, mode=ACTIVE)


def run_coalescent(initial, kernel: MigrationKernel, profile: SeedBankProfile,
                   d: float, horizon: float, rng, *, model="M2",
                   displacement=None, log_events=True) -> CoalescentHistory:
    """Evolve a finite family of lineages with coalescence up to the horizon.

    initial: sequence of (site, mode) pairs; lineage ids are positional.
    d: pair coalescence rate for co-located active lineages.

    Merged lineages continue as one; the survivor keeps the smaller id. The
    event log records every jump with the schema (t, type, ids, site, colour).
    """
    if d < 0:
        raise ValueError(f"coalescence rate must be >= 0, got {d}")
    khat = _hat(kernel)
    g = khat.geography
    ops = _displacement_ops(g, displacement, profile.M + 1) if model == "M3" else None
    sites = np.array([int(s) for s, _ in initial], dtype=np.int64)
    modes = np.array([int(m) for _, m in initial], dtype=np.int64)
    if np.any(modes < ACTIVE) or np.any(modes > profile.M):
        raise ValueError(f"modes must be ACTIVE or colours 0..{profile.M}")
    L = sites.size
    alive = np.ones(L, dtype=bool)
    parent = list(range(L))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    R, chi, e = khat.total_rate, profile.chi, profile.e
    events = []
    t = 0.0
    while True:
        act = alive & (modes == ACTIVE)
        rates = np.where(act, R + chi, np.where(alive, e[np.clip(modes, 0, None)], 0.0))
        counts = np.bincount(sites[act], minlength=0) if act.any() else np.array([0])
        npairs = float(np.sum(counts * (counts - 1) // 2))
        total = float(rates.sum()) + d * npairs
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        u = rng.random() * total
        cum = np.cumsum(rates)
        if u < cum[-1]:
            k = int(np.searchsorted(cum, u, side="right"))
            if modes[k] == ACTIVE:
                if rng.random() * (R + chi) < R:
                    sites[k] = g.add(int(sites[k]), int(khat.sample_jump(rng)))
                    if log_events:
                        events.append(Event(t, "migrate", (k,), int(sites[k]), None))
                else:
                    colour = int(profile.sample_colour(rng))
                    if ops is not None:
                        sites[k] = g.sub(int(sites[k]), int(ops[colour].sample(rng)))
                    modes[k] = colour
                    if log_events:
                        events.append(Event(t, "sleep", (k,), int(sites[k]), colour))
            else:
                if ops is not None:
                    sites[k] = g.add(int(sites[k]), int(ops[modes[k]].sample(rng)))
                if log_events:
                    events.append(Event(t, "wake", (k,), int(sites[k]), int(modes[k])))
                modes[k] = ACTIVE
        else:
            # coalescence: pick a co-located active pair uniformly
            weights = counts * (counts - 1) / 2.0
            csum = np.cumsum(weights)
            s = int(np.searchsorted(csum, rng.random() * csum[-1], side="right"))
            here = np.flatnonzero(act & (sites == s))
            pair = rng.choice(here, size=2, replace=False)
            keeper, gone = int(pair.min()), int(pair.max())
            alive[gone] = False
            parent[find(gone)] = find(keeper)
            if log_events:
                events.append(Event(t, "coalesce", (keeper, gone), s, None))

    groups = {}
    for k in range(L):
        groups.setdefault(find(k), []).append(k)
    blocks = tuple(tuple(v) for _, v in sorted(groups.items()))
    final = [Lineage(int(sites[k]), int(modes[k]), k, bool(alive[k]))
             for k in range(L)]
    return CoalescentHistory(events, blocks, final, horizon)


# ---------------------------------------------------------------------------
# joint activity of a pair: Monte Carlo hazard estimate


@dataclasses.dataclass
class HazardEstimate:
    """Joint-activity time of two non-coalescing lineages.

    value: plateau estimate of the drift-corrected total (the emulated
        infinite-geography hazard); falls back to the horizon value.
    curve/corrected: mean cumulative joint time on `grid`, raw and with the
        equilibrium drift grid / (size * kappa) removed.
    """

    value: float
    se: float
    grid: np.ndarray
    curve: np.ndarray
    corrected: np.ndarray
    equilibrium_rate: float
    converged: bool
    plateau_time: float
    replicas: int


def plateau(times, values, *, rel=0.01):
    """First time at which the trailing decade adds less than rel of the value.

    Returns (converged, time, value)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    for k in range(times.size):
        if times[k] < 10.0 * times[0] or values[k] <= 0.0:
            continue
        j = int(np.searchsorted(times, times[k] / 10.0, side="right")) - 1
        if j >= 0 and abs(values[k] - values[j]) < rel * abs(values[k]):
            return True, float(times[k]), float(values[k])
    return False, float(times[-1]), float(values[-1])


def estimate_hazard(kernel: MigrationKernel, profile: SeedBankProfile, horizon: float,
                    replicas: int, rng, *, start=((0, ACTIVE), (0, ACTIVE)),
                    model="M2", displacement=None, grid=None) -> HazardEstimate:
    """Monte Carlo mean total time two independent lineages are active together.

    On a finite geography the pair equilibrates, so the raw curve eventually
    grows linearly at rate 1 / (size * kappa); the corrected curve removes
    that drift and its plateau emulates the infinite-geography hazard.
    """
    khat = _hat(kernel)
    g = khat.geography
    ops = _displacement_ops(g, displacement, profile.M + 1) if model == "M3" else None
    if grid is None:
        grid = np.geomspace(max(horizon * 1e-4, 1e-3), horizon, 160)
    grid = np.asarray(grid, dtype=float)
    G = grid.size
    R, chi, e = khat.total_rate, profile.chi, profile.e

    (s1, m1), (s2, m2) = start
    sites = np.empty((2, replicas), dtype=np.int64)
    modes = np.empty((2, replicas), dtype=np.int64)
    sites[0], sites[1] = int(s1), int(s2)
    modes[0], modes[1] = int(m1), int(m2)
    t = np.zeros(replicas)
    total_joint = np.zeros(replicas)
    slope_d = np.zeros(G + 1)
    const_d = np.zeros(G + 1)
    live = np.ones(replicas, dtype=bool)

    while live.any():
        act0 = modes[0] == ACTIVE
        act1 = modes[1] == ACTIVE
        r0 = np.where(act0, R + chi, e[np.clip(modes[0], 0, None)])
        r1 = np.where(act1, R + chi, e[np.clip(modes[1], 0, None)])
        total = r0 + r1
        t_new = t + rng.exponential(1.0, replicas) / total
        ends = np.minimum(t_new, horizon)

        joint = np.flatnonzero(live & act0 & act1 & (sites[0] == sites[1]))
        if joint.size:
            a_v, b_v = t[joint], ends[joint]
            ia = np.searchsorted(grid, a_v, side="left")
            ib = np.searchsorted(grid, b_v, side="left")
            np.add.at(slope_d, ia, 1.0)
            np.add.at(slope_d, ib, -1.0)
            np.add.at(const_d, ia, -a_v)
            np.add.at(const_d, ib, b_v)
            total_joint[joint] += b_v - a_v

        move_second = rng.random(replicas) * total > r0
        u_act = rng.random(replicas) * (R + chi)
        still = live & (t_new < horizon)
        sel = np.flatnonzero(still)
        which = move_second[sel].astype(np.int64)
        cur = modes[which, sel]
        is_act = cur == ACTIVE

        mig = np.flatnonzero(is_act & (u_act[sel] < R))
        if mig.size:
            idx, lin = sel[mig], which[mig]
            hops = khat.sample_jump(rng, mig.size)
            sites[lin, idx] = g.add(sites[lin, idx], hops)
        slp = np.flatnonzero(is_act & (u_act[sel] >= R))
        if slp.size:
            idx, lin = sel[slp], which[slp]
            colours = profile.sample_colour(rng, slp.size)
            if ops is not None:
                for m in range(profile.M + 1):
                    mm = colours == m
                    if mm.any():
                        sites[lin[mm], idx[mm]] = g.sub(
                            sites[lin[mm], idx[mm]], ops[m].sample(rng, int(mm.sum())))
            modes[lin, idx] = colours
        wak = np.flatnonzero(~is_act)
        if wak.size:
            idx, lin = sel[wak], which[wak]
            if ops is not None:
                cols = modes[lin, idx]
                for m in range(profile.M + 1):
                    mm = cols == m
                    if mm.any():
                        sites[lin[mm], idx[mm]] = g.add(
                            sites[lin[mm], idx[mm]], ops[m].sample(rng, int(mm.sum())))
            modes[lin, idx] = ACTIVE

        t = np.where(live, t_new, t)
        live = live & (t_new < horizon)

    s_cum = np.cumsum(slope_d)[:G]
    c_cum = np.cumsum(const_d)[:G]
    curve = (s_cum * grid + c_cum) / replicas
    eq_rate = 1.0 / (g.size * profile.kappa)
    corrected = curve - eq_rate * grid
    converged, at, value = plateau(grid, corrected)
    se = float(total_joint.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
    return HazardEstimate(value, se, grid, curve, corrected, eq_rate,
                          converged, at, replicas)


# ---------------------------------------------------------------------------
# joint activity of a pair: exact spectral route (models M1/M2)


@dataclasses.dataclass
class ExactHazard:
    value: float
    grid: np.ndarray
    curve: np.ndarray
    corrected: np.ndarray
    equilibrium_rate: float
    converged: bool
    plateau_time: float
    quadrature_error: float


def _activity_spectrum(kernel: MigrationKernel, profile: SeedBankProfile):
    """Eigen-decomposition of the one-lineage generator, character by character.

    The chain (site, mode) is reversible for bank weights (1, K_m), so each
    character block is symmetrisable; returns (mu, w) with w the squared
    active-component overlaps: b_t((0,A),(.,A)) has transform
    sum_r w[lam, r] exp(mu[lam, r] t).
    """
    khat = _hat(kernel)
    dims = khat.geography.dims
    h = np.fft.fftn(khat.jump_row.reshape(dims)).reshape(-1)
    if np.max(np.abs(h.imag)) > 1e-9 * max(khat.total_rate, 1.0):
        raise ValueError("exact hazard needs a symmetric kernel")
    h = h.real
    C = profile.M + 1
    n_lam = h.size
    blocks = np.zeros((n_lam, C + 1, C + 1))
    blocks[:, 0, 0] = h - khat.total_rate - profile.chi
    off = np.sqrt(profile.K) * profile.e
    blocks[:, 0, 1:] = off
    blocks[:, 1:, 0] = off
    idx = np.arange(C)
    blocks[:, 1 + idx, 1 + idx] = -profile.e
    mu, vec = np.linalg.eigh(blocks)
    w = vec[:, 0, :] ** 2
    return mu, w


def _joint_activity_probability(mu, w, times):
    """P(two independent lineages from (0, A) are both active and co-located)."""
    out = np.empty(times.size)
    n_lam = mu.shape[0]
    chunk = max(1, int(2**22 // max(n_lam * mu.shape[1], 1)))
    for k in range(0, times.size, chunk):
        ts = times[k:k + chunk]
        f = np.einsum("lr,lrt->lt", w, np.exp(mu[:, :, None] * ts[None, None, :]))
        out[k:k + chunk] = (f * f).mean(axis=0)
    return out


def hazard_exact(kernel: MigrationKernel, profile: SeedBankProfile, horizon: float,
                 *, grid_points=512, rtol=1e-6) -> ExactHazard:
    """Numerically exact cumulative joint-activity time via diagonalisation.

    Valid for models M1/M2 with a symmetric kernel. The time integral is a
    trapezoid sum on a log grid, refined until it changes by less than rtol;
    the drift-corrected plateau emulates the infinite-geography hazard.
    """
    mu, w = _activity_spectrum(kernel, profile)
    rate = kernel.total_rate + profile.chi + float(np.max(profile.e))
    t0 = min(1e-3 / rate, horizon / 100.0)

    def cumulative(points):
        grid = np.concatenate([[0.0], np.geomspace(t0, horizon, points)])
        p = _joint_activity_probability(mu, w, grid)
        cum = np.concatenate([[0.0], np.cumsum(np.diff(grid) * 0.5 * (p[1:] + p[:-1]))])
        return grid[1:], cum[1:]

    grid, cum = cumulative(grid_points)
    for _ in range(4):
        grid2, cum2 = cumulative(2 * grid.size)
        err = abs(cum2[-1] - cum[-1]) / max(abs(cum2[-1]), 1e-300)
        grid, cum = grid2, cum2
        if err < rtol:
            break
    else:
        raise DiagnosticError(f"hazard quadrature did not reach rtol={rtol}")
    eq_rate = 1.0 / (kernel.geography.size * profile.kappa)
    corrected = cum - eq_rate * grid
    converged, at, value = plateau(grid, corrected)
    return ExactHazard(value, grid, cum, corrected, eq_rate, converged, at, err)


# ---------------------------------------------------------------------------
# activity bursts of a pair


@dataclasses.dataclass
class Bursts:
    """Alternating joint-activity spells (on) and gaps (off) of a pair.

    starts[k] is when the k-th spell began; on[k] its length; off[k] the gap
    that followed (the last gap may be censored by the horizon)."""

    starts: np.ndarray
    on: np.ndarray
    off: np.ndarray
    horizon: float

    def count(self, t):
        """Number of spells completed by time t."""
        t = np.asarray(t, dtype=float)
        return np.searchsorted(self.starts + self.on, t, side="right")

    def total(self, t):
        """Total joint-activity time accumulated by time t."""
        t = np.asarray(t, dtype=float)
        ends = self.starts + self.on
        full = np.cumsum(self.on)
        k = np.searchsorted(ends, t, side="right")
        partial = np.clip(t - np.concatenate([self.starts, [np.inf]])[k], 0.0, None)
        partial = np.minimum(partial, np.concatenate([self.on, [0.0]])[k])
        base = np.concatenate([[0.0], full])[k]
        return base + partial


def joint_activity_bursts(kernel: MigrationKernel, profile: SeedBankProfile,
                          horizon: float, rng, *, start=((0, ACTIVE), (0, ACTIVE)),
                          model="M2", displacement=None) -> Bursts:
    """Simulate one pair of independent lineages and record their joint spells."""
    khat = _hat(kernel)
    g = khat.geography
    ops = _displacement_ops(g, displacement, profile.M + 1) if model == "M3" else None
    (s1, m1), (s2, m2) = start
    lin = [Lineage(int(s1), int(m1), 0), Lineage(int(s2), int(m2), 1)]
    t = 0.0
    starts, ons, offs = [], [], []
    spell_start = None
    last_end = 0.0
    R, chi = khat.total_rate, profile.chi

    def jointly_active():
        return (lin[0].mode == ACTIVE and lin[1].mode == ACTIVE
                and lin[0].site == lin[1].site)

    if jointly_active():
        spell_start = 0.0
    while t < horizon:
        r = [R + chi if l.mode == ACTIVE else float(profile.e[l.mode]) for l in lin]
        total = r[0] + r[1]
        t_new = t + rng.exponential(1.0 / total)
        if t_new >= horizon:
            t = horizon
            break
        k = 1 if rng.random() * total > r[0] else 0
        _, lin[k] = step_lineage(lin[k], khat, profile, rng, model=model,
                                 displacement=ops)
        was_on = spell_start is not None
        now_on = jointly_active()
        if was_on and not now_on:
            starts.append(spell_start)
            ons.append(t_new - spell_start)
            spell_start = None
            last_end = t_new
        elif not was_on and now_on:
            spell_start = t_new
            offs.append(t_new - last_end)
        t = t_new
    if spell_start is not None:
        starts.append(spell_start)
        ons.append(horizon - spell_start)
    return Bursts(np.asarray(starts), np.asarray(ons), np.asarray(offs), horizon)


# ---------------------------------------------------------------------------
# moment duals (exact, for g = d x(1-x))


def _state_index(size: int, site: int, mode: int) -> int:
    row = 0 if mode == ACTIVE else 1 + mode
    return row * size + site


def single_dual_generator(kernel: MigrationKernel, profile: SeedBankProfile, *,
                          model="M2", displacement=None) -> np.ndarray:
    """Dense generator of one dual lineage on states (mode, site).

    State index = mode_row * size + site with mode_row 0 for active and
    1 + m for colour m."""
    khat = _hat(kernel)
    g = khat.geography
    size = g.size
    C = profile.M + 1
    ops = _displacement_ops(g, displacement, C) if model == "M3" else None
    n = (C + 1) * size
    q = np.zeros((n, n))
    alls = np.arange(size)
    for i in range(size):
        q[i, :size] = khat.jump_row[g.sub(alls, i)]
    for m in range(C):
        rate_in = profile.K[m] * profile.e[m]
        rate_out = profile.e[m]
        row0 = (1 + m) * size
        if ops is None:
            q[alls, row0 + alls] += rate_in
            q[row0 + alls, alls] += rate_out
        else:
            disp = ops[m].row
            for i in range(size):
                q[i, row0 + alls] += rate_in * disp[g.sub(i, alls)]
                q[row0 + i, alls] += rate_out * disp[g.sub(alls, i)]
    q[np.arange(n), np.arange(n)] -= q.sum(axis=1)
    return q


def moment_dual_expectation(field, kernel: MigrationKernel, profile: SeedBankProfile,
                            t: float, start, *, model="M2", displacement=None,
                            tol=1e-10, size_cap=4096):
    """First-moment dual: E[z_U(t)] for one lineage from `start` = (site, mode).

    field: array (colours + 1, size); row 0 is the active layer z_(i,A),
    row 1 + m the colour-m layer. Returns (value, error bound).
    """
    field = np.asarray(field, dtype=float)
    size = kernel.geography.size
    C = profile.M + 1
    if field.shape != (C + 1, size):
        raise ValueError(f"field must have shape {(C + 1, size)}, got {field.shape}")
    n = (C + 1) * size
    if n > size_cap:
        raise DiagnosticError(f"moment dual refused: {n} states > size_cap={size_cap}")
    q = single_dual_generator(kernel, profile, model=model, displacement=displacement)
    v0 = np.zeros(n)
    v0[_state_index(size, *start)] = 1.0
    lam = float(np.max(-np.diag(q)))
    dist, err = uniformized_distribution(lambda v: v @ q, v0, t, lam, tol=tol)
    value = float(dist @ field.reshape(-1))
    return value, err * float(np.max(np.abs(field)))


def pair_moment_dual(field, kernel: MigrationKernel, profile: SeedBankProfile,
                     t: float, start1, start2, d: float, *, model="M2",
                     displacement=None, tol=1e-10, size_cap=4096):
    """Second-moment dual: E[z_U1(t) z_U2(t)] for two coalescing lineages.

    Exact for the forward system with g(x) = d x(1-x). The chain lives on
    ordered pairs plus merged singles; after a merger the product collapses
    to a single factor. Returns (value, error bound).
    """
    field = np.asarray(field, dtype=float).reshape(-1)
    size = kernel.geography.size
    C = profile.M + 1
    n = (C + 1) * size
    if field.size != n:
        raise ValueError(f"field must have {n} entries, got {field.size}")
    n_pair = n * n + n
    if n_pair > size_cap:
        raise DiagnosticError(
            f"pair moment dual refused: {n_pair} states > size_cap={size_cap}")
    q1 = single_dual_generator(kernel, profile, model=model, displacement=displacement)
    eye = np.eye(n)
    qp = np.zeros((n_pair, n_pair))
    qp[:n * n, :n * n] = np.kron(q1, eye) + np.kron(eye, q1)
    for i in range(size):
        p = i * n + i  # both active at site i
        qp[p, p] -= d
        qp[p, n * n + i] += d
    qp[n * n:, n * n:] = q1

    v0 = np.zeros(n_pair)
    u1 = _state_index(size, *start1)
    u2 = _state_index(size, *start2)
    v0[u1 * n + u2] = 1.0
    lam = float(np.max(-np.diag(qp)))
    dist, err = uniformized_distribution(lambda v: v @ qp, v0, t, lam, tol=tol)
    pair_part = dist[:n * n].reshape(n, n)
    value = float(field @ pair_part @ field + dist[n * n:] @ field)
    bound = err * max(1.0, float(np.max(np.abs(field))) ** 2)
    return value, bound
