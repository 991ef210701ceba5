"""Sub-Gaussian alpha-stable components and finite mixtures of them.

A component is ``Y = mu + sqrt(P) G`` with ``G ~ N(0, sigma)`` and ``P`` the
positive stable law of :mod:`sgasmix.stable`.  Its density and the posterior
mean of ``1/P`` depend on ``y`` only through the Mahalanobis distance
``delta``, via the two mixing integrals

    I_k(delta) = int_0^inf u^(-d/2-k) f_P(u) exp(-delta / (2u)) du,  k = 0, 1.

Both are evaluated on one shared rule in ``t = log u``: Gauss-Legendre
panels graded around the bulk of ``log P`` plus the exact power series of
the right tail integrated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import List, Sequence

import numpy as np
from scipy import linalg, special

from .errors import DomainError, NotPositiveDefiniteError
from .stable import PositiveStableLaw, positive_stable_logpdf, positive_stable_sample, series_coefficients

LOG_DENSITY_FLOOR = math.log(1e-300)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_TAIL_TERMS = 30


def cholesky(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    try:
        return linalg.cholesky(sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("shape matrix is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class SgasComponent:
    alpha: float
    mu: np.ndarray
    sigma: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if mu.ndim != 1:
            raise DomainError("mu must be a vector")
        d = mu.shape[0]
        if sigma.shape != (d, d):
            raise DomainError(f"sigma has shape {sigma.shape}, expected {(d, d)}")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(sigma)):
            raise DomainError("non-finite component parameters")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(1.0, np.max(np.abs(sigma))):
            raise DomainError("sigma must be symmetric")
        if not (0.0 <= float(self.weight) <= 1.0):
            raise DomainError(f"weight must lie in [0, 1], got {self.weight!r}")
        PositiveStableLaw(self.alpha)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))
        self.chol  # fail early on an indefinite matrix

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @cached_property
    def chol(self) -> np.ndarray:
        return cholesky(self.sigma)

    @cached_property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def replace(self, **changes) -> "SgasComponent":
        values = dict(alpha=self.alpha, mu=self.mu, sigma=self.sigma, weight=self.weight)
        values.update(changes)
        return SgasComponent(**values)


@dataclass(frozen=True, eq=False)
class MixtureModel:
    components: List[SgasComponent] = field(default_factory=list)

    def __post_init__(self):
        comps = list(self.components)
        if not comps:
            raise DomainError("a mixture needs at least one component")
        d = comps[0].d
        if any(c.d != d for c in comps):
            raise DomainError("components disagree on the dimension")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-10:
            raise DomainError(f"mixing weights sum to {total!r}, not 1")
        object.__setattr__(self, "components", comps)

    @property
    def d(self) -> int:
        return self.components[0].d

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([c.alpha for c in self.components])

    @property
    def locations(self) -> np.ndarray:
        return np.array([c.mu for c in self.components])

    @property
    def shapes(self) -> np.ndarray:
        return np.array([c.sigma for c in self.components])

    def permuted(self, order: Sequence[int]) -> "MixtureModel":
        return MixtureModel([self.components[j] for j in order])


def mahalanobis(mu, sigma, y, chol=None):
    """``(y - mu)^T sigma^-1 (y - mu)`` by a triangular solve; ``y`` may be ``n x d``."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if chol is None:
        chol = cholesky(np.atleast_2d(sigma))
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    diff = np.atleast_2d(y) - mu
    if diff.shape[1] != mu.shape[0]:
        raise DomainError("dimension mismatch between y and mu")
    z = linalg.solve_triangular(chol, diff.T, lower=True)
    delta = np.sum(z * z, axis=0)
    return float(delta[0]) if single else delta


# ---------------------------------------------------------------------------
# mixing integrals


@dataclass(frozen=True)
class _MixingRule:
    a: float
    t: np.ndarray          # nodes in log u
    log_w: np.ndarray      # log(quadrature weight * u f_P(u))
    t_hi: float
    coef: np.ndarray       # right-tail series coefficients


def _panel_edges(a):
    r = (1.0 - a) / a
    center = r * np.euler_gamma
    t_lo = -r * (math.log(700.0 / ((1.0 - a) * a ** (a / (1.0 - a)))) + 2.0)
    t_hi = max(center + 1.0, math.log(10.0) / a)

    def walk(limit, sign):
        edges = []
        pos = center
        k = 0
        while sign * (limit - pos) > 0:
            width = min(1.0, 0.5 * r * 1.3 ** max(0, k - 4))
            pos = pos + sign * width
            if sign * (pos - limit) > 0:
                pos = limit
            edges.append(pos)
            k += 1
        return edges

    left = walk(min(t_lo, center - 1e-9), -1.0)
    right = walk(t_hi, 1.0)
    return np.array(left[::-1] + [center] + right), t_hi


@lru_cache(maxsize=128)
def _mixing_rule(alpha: float) -> _MixingRule:
    a = alpha / 2.0
    edges, t_hi = _panel_edges(a)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    t = (lo + half * (_GL_NODES + 1.0)).ravel()
    w = (half * _GL_WEIGHTS).ravel()
    with np.errstate(divide="ignore"):
        log_g = positive_stable_logpdf(alpha, np.exp(t)) + t
    keep = np.isfinite(log_g)
    return _MixingRule(a, t[keep], np.log(w[keep]) + log_g[keep], t_hi,
                       series_coefficients(a, _TAIL_TERMS))


def _tail_moment(s, x):
    """``int_0^1 w^(s-1) exp(-x w) dw`` for ``s > 0``, ``x >= 0``."""
    s, x = np.broadcast_arrays(s, x)
    out = np.empty(s.shape)
    small = x < 1e-8
    out[small] = 1.0 / s[small] - x[small] / (s[small] + 1.0)
    big = ~small
    with np.errstate(divide="ignore", under="ignore"):
        out[big] = np.exp(special.gammaln(s[big]) + np.log(special.gammainc(s[big], x[big]))
                          - s[big] * np.log(x[big]))
    return out


def log_mixing_integrals(alpha: float, d: int, delta, orders=(0, 1)):
    """``log I_k(delta)`` for each ``k`` in ``orders``; one row per order."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if np.any(delta < 0) or not np.all(np.isfinite(delta)):
        raise DomainError("Mahalanobis distances must be finite and non-negative")
    rule = _mixing_rule(float(alpha))
    out = np.empty((len(orders), delta.size))
    decay = np.exp(-rule.t)
    kernel = rule.log_w[None, :] - 0.5 * delta[:, None] * decay[None, :]
    j = np.arange(1, rule.coef.size + 1)
    x_hi = 0.5 * delta * math.exp(-rule.t_hi)
    for row, k in enumerate(orders):
        m = 0.5 * d + k
        main = special.logsumexp(kernel - m * rule.t[None, :], axis=1)
        s = rule.a * j[None, :] + m
        tail = np.sum(rule.coef * np.exp(-s * rule.t_hi) * _tail_moment(s, x_hi[:, None]), axis=1)
        with np.errstate(divide="ignore"):
            out[row] = np.logaddexp(main, np.log(np.maximum(tail, 0.0)))
    return out


def sgas_logpdf(comp: SgasComponent, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    delta = mahalanobis(comp.mu, comp.sigma, np.atleast_2d(y), chol=comp.chol)
    log_i0 = log_mixing_integrals(comp.alpha, comp.d, delta, orders=(0,))[0]
    out = log_i0 - 0.5 * comp.d * math.log(2.0 * math.pi) - 0.5 * comp.logdet
    return float(out[0]) if y.ndim == 1 else out


def sgas_pdf(comp: SgasComponent, y):
    """Density of one component at ``y`` (a vector, or rows of a matrix)."""
    return np.exp(sgas_logpdf(comp, y))


def cond_inv_p_delta(alpha: float, d: int, delta) -> np.ndarray:
    """``E[1/P | delta]`` as the ratio ``I_1 / I_0`` on a shared rule."""
    log_i = log_mixing_integrals(alpha, d, delta)
    return np.exp(log_i[1] - log_i[0])


def cond_inv_p(comp: SgasComponent, y):
    """Posterior mean of ``1/P`` given an observation from ``comp``."""
    y = np.asarray(y, dtype=float)
    delta = mahalanobis(comp.mu, comp.sigma, np.atleast_2d(y), chol=comp.chol)
    out = cond_inv_p_delta(comp.alpha, comp.d, delta)
    return float(out[0]) if y.ndim == 1 else out


def sgas_sample(comp: SgasComponent, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of ``mu + sqrt(P) L z``."""
    if n < 0:
        raise DomainError("sample size must be non-negative")
    if n == 0:
        return np.empty((0, comp.d))
    p = positive_stable_sample(PositiveStableLaw(comp.alpha), rng, size=n)
    z = rng.standard_normal((n, comp.d))
    return comp.mu + np.sqrt(p)[:, None] * (z @ comp.chol.T)


def mixture_component_logpdf(model: MixtureModel, data) -> np.ndarray:
    """``n x K`` matrix of ``log f(y_i; component j)`` (weights excluded)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return np.column_stack([sgas_logpdf(c, data) for c in model.components])


def mixture_logpdf(model: MixtureModel, data) -> np.ndarray:
    logf = np.maximum(mixture_component_logpdf(model, data), LOG_DENSITY_FLOOR)
    with np.errstate(divide="ignore"):
        return special.logsumexp(logf + np.log(model.weights), axis=1)


def mixture_sample(model: MixtureModel, n: int, rng: np.random.Generator):
    """Draw ``n`` rows; returns ``(data, labels)`` with labels in ``0..K-1``."""
    counts = rng.multinomial(n, model.weights) if n > 0 else np.zeros(model.k, dtype=int)
    labels = np.repeat(np.arange(model.k), counts)
    rng.shuffle(labels)
    data = np.empty((n, model.d))
    for j, comp in enumerate(model.components):
        rows = labels == j
        data[rows] = sgas_sample(comp, int(rows.sum()), rng)
    return data, labels
