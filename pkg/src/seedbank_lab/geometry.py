"""Finite geographies and translation-invariant migration kernels.

Sites form a finite Abelian group addressed by integer labels 0..size-1:
either a d-dimensional torus of side 2n (the box with opposite faces glued,
labels in row-major coordinate order) or the depth-n ball of an N-ary
hierarchy (labels read as base-N digit strings, one digit per level, added
digit-wise). Translation invariance means a kernel is a single row a(0, .);
contractions against site fields go through the group's Fourier transform.

Rate convention: row[j] for j != 0 is the jump rate from 0 to site j.
row[0] holds mass that folding maps back onto the origin; such null jumps do
not move anything and are excluded from the dynamics, but the entry is kept
so that folded rows conserve the infinite-lattice mass exactly.
"""

from __future__ import annotations

import dataclasses
import math
from functools import cached_property

import numpy as np
from scipy import special

from .errors import DiagnosticError
from .markov import uniformized_distribution


# ---------------------------------------------------------------------------
# geographies


@dataclasses.dataclass(frozen=True)
class Geography:
    """A finite Abelian group of sites.

    family: "torus" or "hierarchical".
    dims: per-axis moduli, (2n,)*d for a torus and (N,)*n for a hierarchy.
        Labels are row-major over dims, so axis 0 is the most significant.
    """

    family: str
    dims: tuple

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def coords(self, labels):
        """Coordinates of labels, shape (..., ndim)."""
        parts = np.unravel_index(np.asarray(labels), self.dims)
        return np.stack(parts, axis=-1)

    def label(self, coords):
        """Inverse of coords; accepts shape (..., ndim)."""
        coords = np.asarray(coords)
        parts = tuple(np.moveaxis(coords, -1, 0))
        return np.ravel_multi_index(parts, self.dims)

    def add(self, i, j):
        scalar = np.isscalar(i) and np.isscalar(j)
        dims = np.array(self.dims)
        out = self.label((self.coords(i) + self.coords(j)) % dims)
        return int(out) if scalar else out

    def neg(self, i):
        scalar = np.isscalar(i)
        dims = np.array(self.dims)
        out = self.label((-self.coords(i)) % dims)
        return int(out) if scalar else out

    def sub(self, i, j):
        """Group difference i - j."""
        scalar = np.isscalar(i) and np.isscalar(j)
        dims = np.array(self.dims)
        out = self.label((self.coords(i) - self.coords(j)) % dims)
        return int(out) if scalar else out

    def signed_offsets(self, labels):
        """Torus only: coordinates folded into the symmetric box [-n, n)^d."""
        if self.family != "torus":
            raise ValueError("signed offsets are defined for the torus family only")
        c = self.coords(labels)
        dims = np.array(self.dims)
        return c - dims * (c >= dims // 2)

    def level_distance(self, i, j):
        """Hierarchical only: lowest level above which all digits of i, j agree.

        Equals 0 iff i == j; digit-wise addition has no carries, so this is
        1 + the most significant nonzero digit position of i - j.
        """
        if self.family != "hierarchical":
            raise ValueError("level distance is defined for the hierarchical family only")
        digits = self.coords(self.sub(i, j))
        # coords axis 0 is most significant; level 1 is the last axis
        weights = np.arange(self.ndim, 0, -1)
        return ((digits != 0) * weights).max(axis=-1)


def make_torus(d: int, n: int) -> Geography:
    """d-dimensional torus of side 2n ((2n)^d sites)."""
    if d < 1:
        raise ValueError(f"torus dimension must be >= 1, got {d}")
    if n < 1:
        raise ValueError(f"torus radius must be >= 1, got {n}")
    return Geography("torus", (2 * n,) * d)


def make_hierarchy(N: int, n: int) -> Geography:
    """Depth-n ball of the N-ary hierarchy (N^n sites)."""
    if N < 2:
        raise ValueError(f"hierarchy order must be >= 2, got {N}")
    if n < 1:
        raise ValueError(f"hierarchy depth must be >= 1, got {n}")
    return Geography("hierarchical", (N,) * n)


def make_geography(family: str, **params) -> Geography:
    if family == "torus":
        return make_torus(params.pop("d"), params.pop("n"))
    if family == "hierarchical":
        return make_hierarchy(params.pop("N"), params.pop("n"))
    raise ValueError(f"unknown geography family {family!r}")


# ---------------------------------------------------------------------------
# spectral contraction helper


class DisplacementOperator:
    """A nonnegative row on the group, with FFT contraction and sampling.

    correlate(f)[i] = sum_j row[j - i] f[j]   (what drift terms need)
    convolve(f)[i]  = sum_j row[i - j] f[j]   (the adjoint)
    """

    def __init__(self, geography: Geography, row):
        row = np.asarray(row, dtype=float)
        if row.shape != (geography.size,):
            raise ValueError(f"row must have shape ({geography.size},), got {row.shape}")
        if np.any(row < 0):
            raise ValueError("row entries must be >= 0")
        self.geography = geography
        self.row = row

    @cached_property
    def mass(self) -> float:
        return float(self.row.sum())

    @cached_property
    def _hat(self):
        dims = self.geography.dims
        return np.fft.fftn(self.row.reshape(dims))

    def _transform(self, field, factor):
        dims = self.geography.dims
        field = np.asarray(field, dtype=float)
        shaped = field.reshape(field.shape[:-1] + dims)
        axes = tuple(range(-len(dims), 0))
        out = np.fft.ifftn(np.fft.fftn(shaped, axes=axes) * factor, axes=axes).real
        return out.reshape(field.shape)

    def correlate(self, field):
        return self._transform(field, np.conj(self._hat))

    def convolve(self, field):
        return self._transform(field, self._hat)

    @cached_property
    def _sampler(self):
        labels = np.flatnonzero(self.row)
        if labels.size == 0:
            raise ValueError("cannot sample from an all-zero row")
        cum = np.cumsum(self.row[labels])
        return labels, cum / cum[-1]

    def sample(self, rng, size=None):
        """Draw site labels with probability proportional to the row."""
        labels, cum = self._sampler
        return labels[np.searchsorted(cum, rng.random(size))]


# ---------------------------------------------------------------------------
# kernel variants and folding


@dataclasses.dataclass(frozen=True)
class NearestNeighbour:
    """Jumps to each of the 2d adjacent sites at the given rate."""

    rate: float


@dataclasses.dataclass(frozen=True)
class HeavyTail:
    """Integer-line rates Q |k|^(-1-q); 1-d torus only, q in (0, 2)."""

    Q: float
    q: float


@dataclasses.dataclass(frozen=True)
class HierarchicalJump:
    """Nested-ball jumps with ball weights c^(k-1) N^(-(2k-1)), summed over
    every ball containing both endpoints; requires c < N for finite rates."""

    c: float


def _nn_row(geography: Geography, spec: NearestNeighbour) -> np.ndarray:
    if geography.family != "torus":
        raise ValueError("NearestNeighbour requires a torus geography")
    if spec.rate <= 0:
        raise ValueError(f"rate must be > 0, got {spec.rate}")
    row = np.zeros(geography.size)
    eye = np.eye(geography.ndim, dtype=int)
    dims = np.array(geography.dims)
    for axis in range(geography.ndim):
        for sign in (+1, -1):
            row[geography.label((sign * eye[axis]) % dims)] += spec.rate
    return row


def _heavy_tail_row(geography: Geography, spec: HeavyTail, fold: bool) -> np.ndarray:
    if geography.family != "torus" or geography.ndim != 1:
        raise ValueError("HeavyTail requires a 1-d torus geography")
    if not 0.0 < spec.q < 2.0:
        raise ValueError(f"tail exponent q must lie in (0, 2), got {spec.q}")
    if spec.Q <= 0:
        raise ValueError(f"amplitude Q must be > 0, got {spec.Q}")
    L = geography.dims[0]
    s = 1.0 + spec.q
    row = np.zeros(L)
    if fold:
        # sum over all integer representatives of each residue: Hurwitz zeta
        j = np.arange(1, L)
        row[j] = spec.Q * L ** (-s) * (special.zeta(s, j / L) + special.zeta(s, 1.0 - j / L))
        row[0] = 2.0 * spec.Q * L ** (-s) * special.zeta(s, 1.0)
    else:
        j = np.arange(1, L)
        rep = np.where(j < L // 2, j, j - L)
        row[j] = spec.Q * np.abs(rep) ** (-s)
    return row


def _hierarchy_ball_rates(N: int, c: float, depth: int) -> np.ndarray:
    # q_s = sum_{k >= s} c^(k-1) N^(1-2k) for s = 1..depth (infinite-group rates)
    s = np.arange(1, depth + 1)
    return c ** (s - 1.0) * float(N) ** (1.0 - 2.0 * s) / (1.0 - c / N**2)


def _hierarchical_row(geography: Geography, spec: HierarchicalJump, fold: bool) -> np.ndarray:
    if geography.family != "hierarchical":
        raise ValueError("HierarchicalJump requires a hierarchical geography")
    N, n = geography.dims[0], geography.ndim
    if not 0.0 < spec.c < N:
        raise ValueError(f"ball weight base c must lie in (0, N)={N}, got {spec.c}")
    q = _hierarchy_ball_rates(N, spec.c, n)
    dist = geography.level_distance(np.arange(geography.size), 0)
    row = np.zeros(geography.size)
    nonzero = dist > 0
    row[nonzero] = q[dist[nonzero] - 1]
    if fold:
        # jumps of the infinite group to distance s > n land uniformly over the
        # ball: every site (the origin included) picks up the same tail mass
        cN = spec.c / N
        tail = (N - 1) * N ** (-1.0 - n) * cN**n / ((1.0 - cN) * (1.0 - spec.c / N**2))
        row += tail
    return row


@dataclasses.dataclass(frozen=True, eq=False)
class MigrationKernel:
    """A translation-invariant migration kernel on a finite geography."""

    geography: Geography
    row: np.ndarray
    symmetric: bool
    fold_report: dict

    @cached_property
    def jump_row(self) -> np.ndarray:
        jr = self.row.copy()
        jr[0] = 0.0
        return jr

    @cached_property
    def total_rate(self) -> float:
        """Total rate of jumps that actually move (origin mass excluded)."""
        return float(self.jump_row.sum())

    @cached_property
    def _op(self) -> DisplacementOperator:
        return DisplacementOperator(self.geography, self.jump_row)

    def rate(self, i, j):
        """Jump rate a(i, j) = a(0, j - i); zero on the diagonal."""
        return self.jump_row[self.geography.sub(j, i)]

    def apply(self, field):
        """Contraction (A f)(i) = sum_j a(i, j) f(j) for fields (..., size)."""
        return self._op.correlate(field)

    def apply_adjoint(self, field):
        """(A* f)(i) = sum_j a(j, i) f(j)."""
        return self._op.convolve(field)

    def sample_jump(self, rng, size=None):
        """Displacement labels distributed as jump_row / total_rate."""
        return self._op.sample(rng, size)

    def symmetrized(self) -> "MigrationKernel":
        """Kernel with row (a(0,j) + a(0,-j)) / 2; idempotent."""
        if self.symmetric:
            return self
        perm = self.geography.neg(np.arange(self.geography.size))
        row = 0.5 * (self.row + self.row[perm])
        report = dict(self.fold_report, symmetrized=True)
        return MigrationKernel(self.geography, row, True, report)

    @cached_property
    def _eigenvalues(self):
        """Generator eigenvalues on the group characters, lambda=0 first."""
        hat = np.fft.fftn(self.jump_row.reshape(self.geography.dims)).reshape(-1)
        return hat - self.total_rate

    @cached_property
    def spectral_gap(self) -> float:
        """min over nonzero characters of -(real part of the eigenvalue)."""
        ev = self._eigenvalues
        if ev.size == 1:
            return math.inf
        return float(np.min(-ev.real[1:]))


def _check_symmetric(geography: Geography, row: np.ndarray) -> bool:
    perm = geography.neg(np.arange(geography.size))
    return bool(np.array_equal(row, row[perm]))


def build_kernel(geography: Geography, specs, *, symmetrize=False, fold=True,
                 eps_fold=1e-9) -> MigrationKernel:
    """Assemble a migration kernel from one variant spec or a list (rows add).

    fold=True projects the infinite-lattice kernel onto the finite group
    (mass preserving; for the variants here the projection is in closed form,
    so the omitted mass is zero). fold=False restricts the infinite kernel to
    the embedded box/ball instead, discarding mass that jumps outside.
    The fold report records the relative mass omitted either way.
    """
    if isinstance(specs, (NearestNeighbour, HeavyTail, HierarchicalJump)):
        specs = [specs]
    if not specs:
        raise ValueError("at least one kernel spec is required")
    row = np.zeros(geography.size)
    infinite_mass = 0.0
    for spec in specs:
        if isinstance(spec, NearestNeighbour):
            row += _nn_row(geography, spec)
            infinite_mass += 2 * geography.ndim * spec.rate
        elif isinstance(spec, HeavyTail):
            row += _heavy_tail_row(geography, spec, fold)
            infinite_mass += 2.0 * spec.Q * special.zeta(1.0 + spec.q, 1.0)
        elif isinstance(spec, HierarchicalJump):
            row += _hierarchical_row(geography, spec, fold)
            N, n = geography.dims[0], geography.ndim
            q_inf = _hierarchy_ball_rates(N, spec.c, 64)
            counts = (N - 1.0) * float(N) ** np.arange(64)
            infinite_mass += float(np.sum(counts * q_inf))
        else:
            raise ValueError(f"unknown kernel spec {spec!r}")
    omitted = max(0.0, 1.0 - row.sum() / infinite_mass)
    if fold and omitted > eps_fold:
        raise DiagnosticError(
            f"folding omitted relative mass {omitted:.3g} > eps_fold={eps_fold}")
    report = {"folded": bool(fold), "eps_fold": eps_fold,
              "omitted_relative_mass": omitted, "infinite_mass": infinite_mass}
    kernel = MigrationKernel(geography, row, _check_symmetric(geography, row), report)
    if symmetrize:
        kernel = kernel.symmetrized()
    return kernel


def kernel_from_row(geography: Geography, row, *, fold_report=None) -> MigrationKernel:
    """Wrap an explicit rate row (for custom kernels and tests)."""
    row = np.asarray(row, dtype=float)
    if row.shape != (geography.size,):
        raise ValueError(f"row must have shape ({geography.size},), got {row.shape}")
    if np.any(row < 0):
        raise ValueError("rates must be >= 0")
    report = dict(fold_report or {"folded": False, "omitted_relative_mass": 0.0})
    return MigrationKernel(geography, row, _check_symmetric(geography, row), report)


# ---------------------------------------------------------------------------
# transition probabilities: certified, spectral, and Monte Carlo routes


def _dense_generator(kernel: MigrationKernel) -> np.ndarray:
    size = kernel.geography.size
    q = np.empty((size, size))
    alls = np.arange(size)
    for i in range(size):
        q[i] = kernel.jump_row[kernel.geography.sub(alls, i)]
    q[alls, alls] = -kernel.total_rate
    return q


def transition_row(kernel: MigrationKernel, t: float, *, method="exact",
                   size_cap=4096, tol=1e-10, replicas=20000, rng=None):
    """Distribution a_t(0, .) of the migration process started at the origin.

    method "exact": dense uniformisation, certified L1 error <= tol; refuses
        geographies above size_cap sites.
    method "spectral": diagonalisation on the group characters (fast, used
        internally; cross-checked against "exact" in the test-suite).
    method "mc": empirical distribution of `replicas` independent walks,
        simulated exactly as a compound Poisson on the group.
    """
    size = kernel.geography.size
    if method == "exact":
        if size > size_cap:
            raise DiagnosticError(
                f"exact transition refused: {size} sites > size_cap={size_cap}")
        v0 = np.zeros(size)
        v0[0] = 1.0
        dist, _ = uniformized_distribution(
            lambda v: v @ _dense_generator(kernel), v0, t, kernel.total_rate, tol=tol)
        return dist
    if method == "spectral":
        dims = kernel.geography.dims
        hat = np.fft.fftn(kernel.jump_row.reshape(dims))
        a_t = np.fft.ifftn(np.exp(t * (hat - kernel.total_rate))).real
        return np.clip(a_t.reshape(-1), 0.0, None)
    if method == "mc":
        if rng is None:
            raise ValueError("method 'mc' needs an rng")
        g = kernel.geography
        counts = rng.poisson(kernel.total_rate * t, replicas)
        hops = kernel.sample_jump(rng, int(counts.sum()))
        owner = np.repeat(np.arange(replicas), counts)
        acc = np.zeros((replicas, g.ndim), dtype=np.int64)
        np.add.at(acc, owner, g.coords(hops))
        finals = g.label(acc % np.array(g.dims))
        return np.bincount(finals, minlength=size) / replicas
    raise ValueError(f"unknown method {method!r}")


def transition_probability(kernel: MigrationKernel, t: float, i: int, j: int, *,
                           method="exact", size_cap=4096, tol=1e-10,
                           replicas=20000, rng=None):
    """a_t(i, j) with an error bound: (value, error).

    The exact route's error is the uniformisation tolerance; the Monte Carlo
    route reports the binomial standard error.
    """
    delta = kernel.geography.sub(j, i)
    row = transition_row(kernel, t, method=method, size_cap=size_cap, tol=tol,
                         replicas=replicas, rng=rng)
    value = float(row[delta])
    if method == "mc":
        return value, math.sqrt(max(value * (1.0 - value), 1e-300) / replicas)
    return value, tol if method == "exact" else 1e-12


def estimate_mixing_time(kernel: MigrationKernel, eps: float, *, horizon=None,
                         method="spectral") -> float:
    """Smallest t with max_i | size * a_t(0, i) - 1 | <= eps.

    Uses the spectral route by default (the dense route is available for
    cross-checks). Raises DiagnosticError if the kernel does not mix (zero
    spectral gap) or if the bound is not met before `horizon`.
    """
    size = kernel.geography.size
    if not eps > 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if size - 1 <= eps:
        return 0.0  # bound holds at t = 0 already (single-site group included)
    gap = kernel.spectral_gap
    if not gap > 1e-13 * max(kernel.total_rate, 1.0):
        raise DiagnosticError(
            f"kernel does not mix on this geography (spectral gap {gap:.3g})")

    def deviation(t):
        row = transition_row(kernel, t, method="spectral" if method == "spectral" else "exact")
        return float(np.max(np.abs(size * row - 1.0)))

    # deviation(t) <= (size-1) exp(-gap t) with equality when a single
    # eigenvalue carries the whole deviation, so pad the certainty point
    # by a hair of roundoff
    t_star = math.log((size - 1) / eps) / gap * (1.0 + 1e-9) + 1e-12
    hi = min(t_star, horizon) if horizon is not None else t_star
    if deviation(hi) > eps:
        raise DiagnosticError(
            f"mixing bound eps={eps} not met by horizon {hi:.6g}")
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if deviation(mid) <= eps:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-9 * max(hi, 1.0):
            break
    return hi
