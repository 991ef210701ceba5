"""Weibull latent augmentation used by the conditional-maximisation steps.

Inside hard-assignment group ``j`` every member is rescaled by a fresh unit
exponential, ``caly_i = (y_i - mu_j) / sqrt(E_i)``.  Then
``caly_i | V_i = v ~ N(0, sigma_j / v**2)`` with ``V_i ~ Weibull(alpha_j, 1)``,
so the group's complete-data log-likelihood is

    n_j log(alpha) - n_j/2 log|sigma| + alpha sum(log v) - sum(v**alpha)
        - 1/2 sum(v**2 caly^T sigma^-1 caly)

which has a closed-form maximiser in ``sigma`` and a one-dimensional score
equation in ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import optimize

from .errors import (DegenerateCovarianceError, DegenerateGroupError, DomainError,
                     RootBracketError, SamplerStuckError)
from .sgas import cholesky, mahalanobis
from .stable import ALPHA_MAX, ALPHA_MIN

RETRY_BUDGET = 100_000


@dataclass(frozen=True, eq=False)
class GroupData:
    members: np.ndarray
    caly: np.ndarray

    @property
    def n(self) -> int:
        return int(self.members.size)


def assign_groups(e1, strict: bool = True) -> List[np.ndarray]:
    """Row indices of each group by maximal responsibility (ties go to the lower index)."""
    e1 = np.asarray(e1, dtype=float)
    labels = np.argmax(e1, axis=1)
    groups = [np.flatnonzero(labels == j) for j in range(e1.shape[1])]
    if strict:
        for j, members in enumerate(groups):
            if members.size == 0:
                raise DegenerateGroupError(f"group {j} is empty", group=j)
    return groups


def exponential_transform(data, labels, locations, rng: np.random.Generator) -> np.ndarray:
    """``(y_i - mu_{label_i}) / sqrt(E_i)`` with one fresh ``E_i`` per row, drawn in row order."""
    data = np.asarray(data, dtype=float)
    e = rng.standard_exponential(data.shape[0])
    return (data - np.asarray(locations)[labels]) / np.sqrt(e)[:, None]


def make_groups(caly, groups) -> List[GroupData]:
    return [GroupData(members, caly[members]) for members in groups]


def rejection_bound(q: float, d: int, sigma) -> float:
    """Maximum over ``v`` of the Gaussian factor ``v^d exp(-q v^2/2) / ((2 pi)^(d/2) |sigma|^(1/2))``."""
    if not q > 0:
        raise DomainError("the quadratic form must be positive")
    logdet = 2.0 * float(np.sum(np.log(np.diag(cholesky(sigma)))))
    return math.exp(0.5 * d * math.log(d / q) - 0.5 * d
                    - 0.5 * d * math.log(2.0 * math.pi) - 0.5 * logdet)


def likelihood_mode(q: float, d: int) -> float:
    return math.sqrt(d / q)


def sample_v_batch(q, alpha, d: int, rng: np.random.Generator,
                   budget: int = RETRY_BUDGET) -> np.ndarray:
    """Rejection draws of ``V`` with density proportional to ``v^(d+alpha-1) exp(-q v^2/2 - v^alpha)``.

    Proposals are Weibull(alpha, 1); a proposal ``v`` is kept when
    ``U * b < v^d exp(-q v^2 / 2)`` (normalising constants cancel against
    the bound ``b``).  Rows are processed in index order, proposals in
    rounds of doubling size, so the stream consumption depends only on the
    inputs.
    """
    q = np.asarray(q, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), q.shape)
    if np.any(~(q > 0)):
        raise DomainError("the quadratic form must be positive for every row")
    out = np.full(q.shape, np.nan)
    log_bound = 0.5 * d * (np.log(d / q) - 1.0)
    pending = np.arange(q.size)
    used = 0
    batch = 4
    while pending.size:
        if used >= budget:
            raise SamplerStuckError(
                f"{pending.size} rows not accepted after {budget} proposals", rows=pending)
        m = min(batch, budget - used)
        a = alpha[pending][:, None]
        v = rng.weibull(np.broadcast_to(a, (pending.size, m)))
        u = rng.uniform(size=(pending.size, m))
        with np.errstate(divide="ignore"):
            accept = (np.log(u) + log_bound[pending][:, None]
                      < d * np.log(v) - 0.5 * q[pending][:, None] * v * v)
        hit = accept.any(axis=1)
        first = np.argmax(accept, axis=1)
        rows = pending[hit]
        out[rows] = v[hit, first[hit]]
        pending = pending[~hit]
        used += m
        batch *= 2
    return out


def sample_v_posterior(caly_row, alpha: float, sigma, rng: np.random.Generator,
                       budget: int = RETRY_BUDGET) -> float:
    """One posterior draw of ``V`` for a single transformed observation."""
    caly_row = np.atleast_1d(np.asarray(caly_row, dtype=float))
    q = mahalanobis(np.zeros_like(caly_row), sigma, caly_row)
    return float(sample_v_batch(np.array([q]), alpha, caly_row.size, rng, budget)[0])


def update_sigma(group: GroupData, v, group_id=None) -> np.ndarray:
    """Closed-form maximiser ``sum v_i^2 caly_i caly_i^T / n_j``."""
    caly = np.asarray(group.caly, dtype=float)
    n, d = caly.shape
    if n < d + 1:
        raise DegenerateGroupError(f"group {group_id} has {n} members, needs {d + 1}",
                                   group=group_id)
    scaled = caly * np.asarray(v, dtype=float)[:, None]
    sigma = scaled.T @ scaled / n
    sigma = 0.5 * (sigma + sigma.T)
    eig = np.linalg.eigvalsh(sigma)
    if not eig[0] > 1e-10 * max(eig[-1], 1e-300):
        raise DegenerateCovarianceError(f"group {group_id} shape matrix is rank deficient",
                                        group=group_id)
    return sigma


def alpha_score(alpha, v) -> float:
    """``h(alpha) = n/alpha + sum log v - sum v^alpha log v``."""
    log_v = np.log(np.asarray(v, dtype=float))
    # v^alpha may overflow for wildly spread groups; the score is then -inf, which brentq handles
    with np.errstate(over="ignore", invalid="ignore"):
        return float(log_v.size / alpha + log_v.sum() - np.sum(np.exp(alpha * log_v) * log_v))


def update_alpha(v, lo: float = ALPHA_MIN, hi: float = ALPHA_MAX):
    """Root of the tail-index score on ``[lo, hi]``.

    Returns ``(alpha, clamped)``.  The score is strictly decreasing, so when
    it keeps one sign over the bracket the constrained maximiser is the
    nearer endpoint and ``clamped`` is set.
    """
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        raise DomainError("update_alpha needs at least two latent values")
    if np.any(~(v > 0)):
        raise DomainError("latent values must be positive")
    if np.all(np.log(v) == 0.0):
        raise RootBracketError("score is n/alpha > 0 for every alpha when all v equal 1")
    h_lo, h_hi = alpha_score(lo, v), alpha_score(hi, v)
    if h_hi >= 0:
        return hi, True
    if h_lo <= 0:
        return lo, True
    root = optimize.brentq(alpha_score, lo, hi, args=(v,), xtol=1e-14, rtol=1e-15, maxiter=200)
    return float(root), False


def group_loglik(alpha: float, sigma, caly, v) -> float:
    """The group complete-data log-likelihood above, up to its constant."""
    caly = np.atleast_2d(np.asarray(caly, dtype=float))
    v = np.asarray(v, dtype=float)
    n = caly.shape[0]
    chol = cholesky(sigma)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    q = mahalanobis(np.zeros(caly.shape[1]), sigma, caly, chol=chol)
    return float(n * math.log(alpha) - 0.5 * n * logdet + alpha * np.sum(np.log(v))
                 - np.sum(v ** alpha) - 0.5 * np.sum(v * v * q))
