"""Uniformisation for finite-rate continuous-time Markov chains.

exp(tQ) applied to a distribution is evaluated as a Poisson mixture of
powers of the uniformised jump matrix P = I + Q/lam. Truncating the Poisson
weights once their remaining mass is below tol bounds the L1 error of the
result by tol, since every power of P maps distributions to distributions.
That tail bound is the certificate callers rely on.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DiagnosticError


def uniformized_distribution(apply_q, v0, t, lam, *, tol=1e-10, max_terms=None):
    """Distribution at time t of the chain with generator Q, error <= tol in L1.

    apply_q: callable v -> v @ Q for a row vector v.
    v0: initial distribution (1-d array).
    lam: uniformisation rate, >= max_i |Q[i,i]|.
    tol: certified L1 truncation error.

    Returns (dist, err) where err is the actual truncated Poisson tail mass.
    """
    v0 = np.asarray(v0, dtype=float)
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    m = lam * t
    if m == 0.0:
        return v0.copy(), 0.0
    if max_terms is None:
        max_terms = int(m + 12.0 * math.sqrt(m + 25.0) + 64.0)

    acc = np.zeros_like(v0)
    v = v0.copy()
    covered = 0.0
    log_m = math.log(m)
    k = 0
    while k <= max_terms:
        log_w = -m + k * log_m - math.lgamma(k + 1)
        w = math.exp(log_w)  # underflows harmlessly far below the mode
        if w > 0.0:
            acc += w * v
            covered += w
        if k >= m and 1.0 - covered <= tol:
            return acc, 1.0 - covered
        # v_{k+1} = v_k P with P = I + Q/lam
        v = v + apply_q(v) / lam
        k += 1
    raise DiagnosticError(
        f"uniformisation did not certify tol={tol} within {max_terms} terms "
        f"(lam*t={m:.3g}, covered={covered:.17g})"
    )


def dense_uniformized_distribution(q, v0, t, *, tol=1e-10):
    """uniformized_distribution for a dense generator matrix q (rows sum to 0)."""
    q = np.asarray(q, dtype=float)
    lam = float(np.max(-np.diag(q))) if q.shape[0] else 0.0
    if lam <= 0.0:
        return np.asarray(v0, dtype=float).copy(), 0.0
    return uniformized_distribution(lambda v: v @ q, v0, t, lam, tol=tol)


def stationary_distribution(q):
    """Stationary distribution of a dense generator (least-squares on Q^T pi = 0)."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    a = np.vstack([q.T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()
