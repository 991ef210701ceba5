"""Positive (totally skewed) stable mixing law.

The mixing variable ``P`` of a sub-Gaussian alpha-stable vector is a
positive stable variable with index ``a = alpha / 2``, skewness one and
scale ``(cos(pi * alpha / 4)) ** (2 / alpha)``.  With that scale its Laplace
transform is simply ``E[exp(-s P)] = exp(-s ** a)``, which is the
normalisation every routine in this module works with.

Densities use Zolotarev's integral over a bounded angle::

    f(p) = a / ((1 - a) pi p) * int_0^pi  E(t) exp(-E(t)) dt,
    E(t) = exp((l(t) - a log p) / (1 - a)),
    l(t) = a log sin(a t) + (1 - a) log sin((1 - a) t) - log sin t,

and the right tail uses the convergent power series in ``p ** -a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import DomainError, EvaluationError

ALPHA_MIN = 0.02
ALPHA_MAX = 1.98


@dataclass(frozen=True)
class PositiveStableLaw:
    """Law of ``P ~ S(alpha/2, cos(pi alpha/4)^(2/alpha), 1, 0)``."""

    alpha: float

    def __post_init__(self):
        alpha = float(self.alpha)
        if not (0.0 < alpha < 2.0) or not math.isfinite(alpha):
            raise DomainError(f"alpha must lie in (0, 2), got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def index(self) -> float:
        return self.alpha / 2.0

    @property
    def scale(self) -> float:
        return math.cos(math.pi * self.alpha / 4.0) ** (2.0 / self.alpha)

    def laplace(self, s):
        """``E[exp(-s P)]``."""
        return np.exp(-np.power(s, self.index))


def _log_sinc(x):
    # log(sin x / x), finite at 0
    return np.log(np.sinc(np.asarray(x, dtype=float) / np.pi))


def zolotarev_log_kernel(theta, a):
    """``l(theta)``; increasing on ``(0, pi)`` from ``a log a + (1-a) log(1-a)``."""
    theta = np.asarray(theta, dtype=float)
    b = 1.0 - a
    with np.errstate(divide="ignore"):
        return (a * _log_sinc(a * theta) + b * _log_sinc(b * theta)
                - _log_sinc(theta) + a * math.log(a) + b * math.log(b))


def _phi(theta, a, log_p):
    # log of the Zolotarev integrand E exp(-E)
    lam = (zolotarev_log_kernel(theta, a) - a * log_p) / (1.0 - a)
    lam = np.minimum(lam, 700.0)
    return lam - np.exp(lam)


def _peak_angle(a, log_p):
    """Angle where E = 1 (the integrand maximum); zero when E > 1 everywhere."""
    log_p = np.atleast_1d(np.asarray(log_p, dtype=float))
    target = a * log_p
    l0 = a * math.log(a) + (1.0 - a) * math.log(1.0 - a)
    lo = np.zeros_like(target)
    hi = np.full_like(target, np.pi)
    inside = target > l0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        up = zolotarev_log_kernel(mid, a) < target
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return np.where(inside, 0.5 * (lo + hi), 0.0)


def _levy_logpdf(p):
    # alpha = 1: Levy law with scale 1/2
    p = np.asarray(p, dtype=float)
    return -0.5 * math.log(4.0 * math.pi) - 1.5 * np.log(p) - 0.25 / p


def _check_positive(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)):
        raise DomainError("positive stable density is defined for p > 0 only")
    return p


def positive_stable_pdf(law: PositiveStableLaw, p: float) -> float:
    """Density of ``P`` at a single point by adaptive quadrature."""
    p = float(_check_positive(p))
    if law.alpha == 1.0:
        return float(np.exp(_levy_logpdf(p)))
    if law.index * math.log(p) > math.log(10.0):
        # p^-a < 0.1: the series converges geometrically
        return float(np.exp(_series_logpdf(law.index, math.log(p))))
    return math.exp(_logpdf_quad(law.index, p))


def _kernel_slope(theta, a):
    b = 1.0 - a
    return a * a / np.tan(a * theta) + b * b / np.tan(b * theta) - 1.0 / np.tan(theta)


def _breakpoints(a, log_p):
    """Split points for ``quad``, graded geometrically around the integrand peak."""
    theta_star = float(_peak_angle(a, log_p)[0])
    if theta_star > 0:
        width = (1.0 - a) / max(float(_kernel_slope(theta_star, a)), 1e-300)
    else:
        lam0 = (a * math.log(a) + (1 - a) * math.log(1 - a) - a * log_p) / (1.0 - a)
        width = 1.0 / math.sqrt(a * max(math.expm1(min(lam0, 700.0)), 1e-300))
    pts = {0.0, theta_star, math.pi}
    step = width
    while step < math.pi:
        for x in (theta_star - step, theta_star + step):
            if 0.0 < x < math.pi:
                pts.add(x)
        step *= 4.0
    return theta_star, sorted(pts)


def _quad_pieces(integrand, pts, epsabs):
    total = 0.0
    err = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, est = integrate.quad(integrand, lo, hi, epsabs=epsabs, epsrel=1e-11, limit=200)
        total += val
        err += est
    return total, err


_ZETA_TERMS = np.arange(1, 31)
_ZETA_COEF = special.zeta(2.0 * _ZETA_TERMS) / (_ZETA_TERMS * np.pi ** (2.0 * _ZETA_TERMS))


def _kernel_increment(theta, a):
    """``l(theta) - l(0)`` with full relative accuracy near zero.

    Uses ``log(sin x / x) = -sum_n zeta(2n) x^(2n) / (n pi^(2n))`` below 1,
    where differencing the closed form would lose all digits.
    """
    b = 1.0 - a
    if theta >= 1.0:
        return float(a * _log_sinc(a * theta) + b * _log_sinc(b * theta) - _log_sinc(theta))
    n2 = 2.0 * _ZETA_TERMS
    return float(np.sum(_ZETA_COEF * theta ** n2 * (1.0 - a ** (n2 + 1) - b ** (n2 + 1))))


def _logpdf_quad(a, p):
    log_p = math.log(p)
    theta_star, pts = _breakpoints(a, log_p)
    if theta_star > 0:
        phi_max = -1.0

        def integrand(t):
            return math.exp(float(_phi(t, a, log_p)) + 1.0)
    else:
        # peak at the endpoint: phi(t) - phi(0) = d - E0 expm1(d), free of cancellation
        lam0 = (a * math.log(a) + (1.0 - a) * math.log(1.0 - a) - a * log_p) / (1.0 - a)
        if lam0 > 700.0:
            return -math.inf  # exp(-E0) underflows long before this
        big = math.exp(lam0)
        phi_max = lam0 - big

        def integrand(t):
            d = _kernel_increment(t, a) / (1.0 - a)
            return math.exp(d - big * math.expm1(d))

    total, err = _quad_pieces(integrand, pts, epsabs=0.0)
    if not total > 0 or err > 1e-7 * total:
        raise EvaluationError(f"quadrature failed for p={p!r}", error_estimate=err)
    return math.log(a / ((1.0 - a) * math.pi * p)) + math.log(total) + phi_max


def positive_stable_cdf(law: PositiveStableLaw, p: float) -> float:
    """``P(P <= p) = (1/pi) int_0^pi exp(-E(t)) dt``."""
    p = float(_check_positive(p))
    if law.alpha == 1.0:
        return float(special.erfc(0.5 / math.sqrt(p)))
    a = law.index
    log_p = math.log(p)
    _, pts = _breakpoints(a, log_p)

    def integrand(t):
        lam = min(float((zolotarev_log_kernel(t, a) - a * log_p) / (1.0 - a)), 700.0)
        return math.exp(-math.exp(lam))

    total, _ = _quad_pieces(integrand, pts, epsabs=1e-15)
    return min(max(total / math.pi, 0.0), 1.0)


# ---------------------------------------------------------------------------
# vectorised evaluation used by the mixture integrals

_TS_STEP = 1.0 / 16.0
_TS_HALF = 64


@lru_cache(maxsize=1)
def _tanh_sinh_rule():
    s = _TS_STEP * np.arange(-_TS_HALF, _TS_HALF + 1)
    q = np.pi * np.sinh(s)
    x = special.expit(q)
    xc = special.expit(-q)  # 1 - x without cancellation
    w = _TS_STEP * np.pi * np.cosh(s) * x * xc
    return x, xc, w


def series_coefficients(a, n_terms):
    """Coefficients ``c_k`` of ``p f(p) = sum_k c_k p^(-a k)``."""
    k = np.arange(1, n_terms + 1, dtype=float)
    return (np.sin(np.pi * k * (1.0 - a))
            * np.exp(special.gammaln(a * k + 1.0) - special.gammaln(k + 1.0)) / np.pi)


def _series_logpdf(a, log_p, n_terms=80):
    c = series_coefficients(a, n_terms)
    k = np.arange(1, n_terms + 1)
    z = np.exp(-a * np.asarray(log_p))[..., None]
    total = np.sum(c * z ** k, axis=-1)
    return np.log(total) - log_p


def _zolotarev_logpdf(a, log_p):
    log_p = np.asarray(log_p, dtype=float)
    x, xc, w = _tanh_sinh_rule()
    theta_star = _peak_angle(a, log_p)[:, None]
    inside = theta_star > 0
    # interior peak: [0, t*] and [t*, pi]; peak at zero: [0, pi]
    left = np.where(x < 0.5, theta_star * x, theta_star - theta_star * xc)
    left_w = theta_star * w
    right_lo = np.where(inside, theta_star, 0.0)
    span = np.pi - right_lo
    right = np.where(x < 0.5, right_lo + span * x, np.pi - span * xc)
    right_w = span * w
    lp = log_p[:, None]
    phi = np.concatenate([_phi(left, a, lp), _phi(right, a, lp)], axis=1)
    weights = np.concatenate([np.where(inside, left_w, 0.0), right_w], axis=1)
    with np.errstate(divide="ignore"):
        log_int = special.logsumexp(phi, b=weights, axis=1)
    return math.log(a / ((1.0 - a) * math.pi)) - log_p + log_int


def positive_stable_logpdf(alpha: float, p) -> np.ndarray:
    """Vectorised log-density of the mixing law for ``alpha`` in (0, 2)."""
    p = _check_positive(p)
    shape = p.shape
    log_p = np.log(p).ravel()
    if alpha == 1.0:
        return _levy_logpdf(p)
    a = alpha / 2.0
    out = np.empty_like(log_p)
    tail = a * log_p > math.log(2.0)  # p^-a < 1/2
    if np.any(tail):
        out[tail] = _series_logpdf(a, log_p[tail])
    if np.any(~tail):
        out[~tail] = _zolotarev_logpdf(a, log_p[~tail])
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# sampling


def positive_stable_sample(law: PositiveStableLaw, rng: np.random.Generator, size=None):
    """Chambers-Mallows-Stuck draw for the totally skewed case.

    ``log P = (l(U) - (1 - a) log W) / a`` with ``U ~ U(0, pi)`` and
    ``W ~ Exp(1)``.
    """
    a = law.index
    u = rng.uniform(0.0, np.pi, size=size)
    w = rng.standard_exponential(size=size)
    log_p = (zolotarev_log_kernel(u, a) - (1.0 - a) * np.log(w)) / a
    out = np.exp(log_p)
    return float(out) if size is None else out


def weibull_quotient_check(law: PositiveStableLaw, m: int, rng: np.random.Generator) -> float:
    """Sup distance between the empirical law of ``E/P`` and Weibull(alpha/2, 1)."""
    if m < 1000:
        raise DomainError("weibull_quotient_check needs m >= 1000 draws")
    e = rng.standard_exponential(m)
    q = e / positive_stable_sample(law, rng, size=m)
    return kolmogorov_distance(q, lambda w: -np.expm1(-np.power(w, law.index)))


def kolmogorov_distance(sample, cdf) -> float:
    """Two-sided sup distance between the empirical CDF of ``sample`` and ``cdf``."""
    x = np.sort(np.asarray(sample, dtype=float))
    m = x.size
    c = cdf(x)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - c), np.max(c - (i - 1) / m)))

