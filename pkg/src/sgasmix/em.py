"""Stochastic ECM fitting of sub-Gaussian alpha-stable mixtures.

Each iteration runs

1. E-step: responsibilities ``e1`` and posterior means ``e2 = E[1/P | y]``;
2. M-step: weights ``mean(e1)`` and locations weighted by ``e1 * e2``;
3. CM-steps: hard assignment by ``argmax e1``, an exponential rescaling of
   every row, one rejection draw of the Weibull latent per row, and the
   closed-form shape / root-found tail-index updates per group.

The estimate is the average of the iterates after the burn-in.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist

from .errors import (DegenerateGroupError, DomainError, RootBracketError, SamplerStuckError,
                     SgasError)
from .latent import (GroupData, assign_groups, exponential_transform, sample_v_batch,
                     update_alpha, update_sigma)
from .sgas import (LOG_DENSITY_FLOOR, MixtureModel, SgasComponent, log_mixing_integrals,
                   mahalanobis)
from .stable import ALPHA_MAX, ALPHA_MIN

log = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-8
STUCK_REDRAWS = 5


@dataclass
class FitConfig:
    k: int = 1
    n_iter: int = 70
    burn_in: int = 40
    seed: int = 0
    alpha_init: float = 1.5
    fixed_alpha: Optional[float] = None
    max_restarts: int = 3
    workers: int = 1
    kmedoids_max_iter: int = 50

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("k must be at least 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise DomainError("need 0 <= burn_in < n_iter")
        if not ALPHA_MIN <= self.alpha_init <= ALPHA_MAX:
            raise DomainError(f"alpha_init must lie in [{ALPHA_MIN}, {ALPHA_MAX}]")
        if self.fixed_alpha is not None and not 0 < self.fixed_alpha < 2:
            raise DomainError("fixed_alpha must lie in (0, 2)")
        if self.workers < 1:
            raise DomainError("workers must be positive")

    def replace(self, **changes) -> "FitConfig":
        values = dict(self.__dict__)
        values.update(changes)
        return FitConfig(**values)


@dataclass
class Responsibilities:
    e1: np.ndarray
    e2: np.ndarray
    loglik: float

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.e1, axis=1)


@dataclass
class IterationRecord:
    iteration: int
    loglik: float
    weights: np.ndarray
    alphas: np.ndarray
    locations: np.ndarray
    shapes: np.ndarray


@dataclass
class FitResult:
    model: MixtureModel
    labels: np.ndarray
    e1: np.ndarray
    bic: float
    loglik: float
    trace: List[IterationRecord]
    events: List[dict]
    config: FitConfig
    n_restarts: int = 0
    bic_table: Dict[int, Optional[float]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# E- and M-steps


def _component_terms(comp: SgasComponent, data):
    delta = mahalanobis(comp.mu, comp.sigma, data, chol=comp.chol)
    log_i = log_mixing_integrals(comp.alpha, comp.d, delta)
    logf = log_i[0] - 0.5 * comp.d * math.log(2.0 * math.pi) - 0.5 * comp.logdet
    return logf, np.exp(log_i[1] - log_i[0])


def e_step(data, model: MixtureModel, workers: int = 1) -> Responsibilities:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != model.d:
        raise DomainError(f"data has {data.shape[1]} columns, model dimension is {model.d}")
    if workers > 1 and model.k > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            terms = list(pool.map(lambda c: _component_terms(c, data), model.components))
    else:
        terms = [_component_terms(c, data) for c in model.components]
    logf = np.maximum(np.column_stack([t[0] for t in terms]), LOG_DENSITY_FLOOR)
    e2 = np.column_stack([t[1] for t in terms])
    with np.errstate(divide="ignore"):
        joint = logf + np.log(model.weights)
    norm = special.logsumexp(joint, axis=1)
    e1 = np.exp(joint - norm[:, None])
    return Responsibilities(e1, e2, float(norm.sum()))


def m_step_weights(e1) -> np.ndarray:
    w = np.asarray(e1, dtype=float).mean(axis=0)
    return w / w.sum()


def m_step_locations(data, e1, e2) -> np.ndarray:
    """Rows are the ``e1 * e2``-weighted means of the data, one per component."""
    wts = np.asarray(e1, dtype=float) * np.asarray(e2, dtype=float)
    denom = wts.sum(axis=0)
    bad = np.flatnonzero(~(denom > 0))
    if bad.size:
        raise DegenerateGroupError(f"component {bad[0]} has zero location weight",
                                   group=int(bad[0]))
    return (wts.T @ np.asarray(data, dtype=float)) / denom[:, None]


def observed_loglik(model: MixtureModel, data) -> float:
    return e_step(data, model).loglik


def n_free_parameters(k: int, d: int, fixed_alpha: bool = False) -> int:
    per_component = d + d * (d + 1) // 2 + (0 if fixed_alpha else 1)
    return (k - 1) + k * per_component


def bic(model: MixtureModel, data, fixed_alpha: bool = False) -> float:
    """``m log(n) - 2 log L`` for the observed-data likelihood."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    m = n_free_parameters(model.k, model.d, fixed_alpha)
    return m * math.log(data.shape[0]) - 2.0 * observed_loglik(model, data)


# ---------------------------------------------------------------------------
# initialisation


def k_medoids(data, k: int, max_iter: int = 50, rng: Optional[np.random.Generator] = None):
    """PAM: greedy BUILD (or random start when ``rng`` is given) then best-swap descent.

    Returns ``(medoid_indices, labels)``.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    if k > n:
        raise DomainError(f"cannot pick {k} medoids from {n} rows")
    dist = cdist(data, data)
    if rng is None:
        medoids = [int(np.argmin(dist.sum(axis=1)))]
        nearest = dist[medoids[0]].copy()
        for _ in range(1, k):
            gain = np.maximum(nearest[None, :] - dist, 0.0).sum(axis=1)
            gain[medoids] = -np.inf
            h = int(np.argmax(gain))
            medoids.append(h)
            nearest = np.minimum(nearest, dist[h])
    else:
        medoids = [int(i) for i in rng.choice(n, size=k, replace=False)]

    for _ in range(max_iter):
        md = dist[medoids]
        order = np.argsort(md, axis=0, kind="stable")
        near_pos = order[0]
        d_near = md[near_pos, np.arange(n)]
        d_second = md[order[1], np.arange(n)] if k > 1 else np.full(n, np.inf)
        base = d_near.sum()
        candidates = np.setdiff1d(np.arange(n), medoids)
        best = (-1e-12 * max(base, 1.0), None, None)
        for i in range(k):
            fallback = np.where(near_pos == i, d_second, d_near)
            cost = np.minimum(dist[candidates], fallback[None, :]).sum(axis=1) - base
            h = int(np.argmin(cost))
            if cost[h] < best[0]:
                best = (cost[h], i, int(candidates[h]))
        if best[1] is None:
            break
        medoids[best[1]] = best[2]
    labels = np.argmin(dist[medoids], axis=0)
    return np.array(medoids), labels


def _trimmed_scatter(points, center, keep=0.8):
    d = points.shape[1]
    if points.shape[0] < d + 1:
        return None
    r = np.sqrt(np.sum((points - center) ** 2, axis=1))
    m = max(d + 1, int(math.ceil(keep * points.shape[0])))
    core = points[np.argsort(r, kind="stable")[:m]] - center
    scatter = core.T @ core / m
    ridge = 1e-6 * (np.trace(scatter) / d + 1e-12)
    return scatter + ridge * np.eye(d)


def initialize(data, k: int, seed: int = 0, alpha: float = 1.5, randomized: bool = False,
               max_iter: int = 50) -> MixtureModel:
    """k-medoids partition, then per-cluster median, trimmed scatter and a common tail index."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    if k > n:
        raise DomainError(f"K={k} exceeds the number of observations {n}")
    rng = np.random.default_rng(seed) if randomized else None
    _, labels = k_medoids(data, k, max_iter=max_iter, rng=rng)
    global_center = np.median(data, axis=0)
    fallback = _trimmed_scatter(data, global_center)
    if fallback is None:
        fallback = np.eye(d)
    comps = []
    counts = np.bincount(labels, minlength=k)
    for j in range(k):
        pts = data[labels == j]
        mu = np.median(pts, axis=0) if pts.size else global_center
        sigma = _trimmed_scatter(pts, mu)
        if sigma is None or np.linalg.eigvalsh(sigma)[0] <= 0:
            sigma = fallback
        comps.append(SgasComponent(alpha, mu, sigma, counts[j] / n))
    return MixtureModel(comps)


# ---------------------------------------------------------------------------
# the stochastic ECM loop


def _align(reference, locations):
    """Greedy nearest-location matching; returns ``order`` with ``locations[order[j]] ~ reference[j]``."""
    k = len(reference)
    dist = cdist(reference, locations)
    order = np.full(k, -1)
    free_ref, free_new = set(range(k)), set(range(k))
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = divmod(int(flat), k)
        if i in free_ref and j in free_new:
            order[i] = j
            free_ref.discard(i)
            free_new.discard(j)
    return order


def _project_pd(sigma, events, j):
    sigma = 0.5 * (sigma + sigma.T)
    vals, vecs = np.linalg.eigh(sigma)
    if vals[0] < EIGEN_FLOOR:
        events.append({"kind": "eigen_floor", "component": j, "min_eigenvalue": float(vals[0])})
        vals = np.maximum(vals, EIGEN_FLOOR)
        sigma = (vecs * vals) @ vecs.T
        sigma = 0.5 * (sigma + sigma.T)
    return sigma


def _draw_latents(data, labels, mu, model, rng, events, iteration):
    d = model.d
    caly = exponential_transform(data, labels, mu, rng)
    sigmas = model.shapes
    alphas = model.alphas
    q = np.empty(data.shape[0])
    for j, comp in enumerate(model.components):
        rows = labels == j
        q[rows] = mahalanobis(np.zeros(d), comp.sigma, caly[rows], chol=comp.chol)
    if np.any(~(q > 0)):
        raise DegenerateGroupError("an observation coincides with its group location")
    v = np.empty_like(q)
    todo = np.arange(q.size)
    for attempt in range(STUCK_REDRAWS + 1):
        try:
            v[todo] = sample_v_batch(q[todo], alphas[labels[todo]], d, rng)
            break
        except SamplerStuckError as exc:
            stuck = todo[exc.rows]
            events.append({"kind": "sampler_stuck", "iteration": iteration,
                           "rows": stuck.tolist()})
            if attempt == STUCK_REDRAWS:
                raise
            # accepted rows of this batch are discarded; redraw E for stuck rows only
            fresh = exponential_transform(data[stuck], labels[stuck], mu, rng)
            caly[stuck] = fresh
            for j in np.unique(labels[stuck]):
                rows = stuck[labels[stuck] == j]
                q[rows] = mahalanobis(np.zeros(d), sigmas[j], caly[rows],
                                      chol=model.components[j].chol)
    return caly, v


def _run(data, config: FitConfig, attempt: int, events: List[dict],
         init: Optional[MixtureModel] = None) -> FitResult:
    n, d = data.shape
    k = config.k
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, attempt]))
    alpha0 = config.fixed_alpha if config.fixed_alpha is not None else config.alpha_init
    if init is not None and attempt == 0:
        model = init
    else:
        model = initialize(data, k, seed=config.seed + attempt, alpha=alpha0,
                           randomized=attempt > 0, max_iter=config.kmedoids_max_iter)
    trace: List[IterationRecord] = []
    acc_w = np.zeros(k)
    acc_a = np.zeros(k)
    acc_mu = np.zeros((k, d))
    acc_s = np.zeros((k, d, d))
    for t in range(1, config.n_iter + 1):
        resp = e_step(data, model, workers=config.workers)
        w = m_step_weights(resp.e1)
        mu = m_step_locations(data, resp.e1, resp.e2)
        groups = assign_groups(resp.e1)
        labels = resp.labels
        weak = int(np.sum(resp.e1.max(axis=1) < 1.5 / k)) if k > 1 else 0
        if weak:
            events.append({"kind": "weak_assignment", "iteration": t, "rows": weak})
        for j, members in enumerate(groups):
            if members.size < d + 1:
                raise DegenerateGroupError(f"group {j} has {members.size} members", group=j)
        caly, v = _draw_latents(data, labels, mu, model, rng, events, t)
        comps = []
        for j, members in enumerate(groups):
            sigma = update_sigma(GroupData(members, caly[members]), v[members], group_id=j)
            alpha = model.components[j].alpha
            if config.fixed_alpha is None:
                try:
                    alpha, clamped = update_alpha(v[members])
                    if clamped:
                        events.append({"kind": "alpha_clamp", "iteration": t, "component": j,
                                       "alpha": alpha})
                except RootBracketError:
                    events.append({"kind": "alpha_bracket", "iteration": t, "component": j})
            comps.append(SgasComponent(alpha, mu[j], sigma, w[j]))
        model = MixtureModel(comps)
        order = _align(trace[-1].locations, model.locations) if trace else np.arange(k)
        if np.any(order != np.arange(k)):
            events.append({"kind": "relabel", "iteration": t, "order": order.tolist()})
            model = model.permuted(order)
        trace.append(IterationRecord(t, resp.loglik, model.weights, model.alphas,
                                     model.locations, model.shapes))
        if t > config.burn_in:
            acc_w += model.weights
            acc_a += model.alphas
            acc_mu += model.locations
            acc_s += model.shapes

    m = config.n_iter - config.burn_in
    w_bar = acc_w / m
    w_bar = w_bar / w_bar.sum()
    averaged = MixtureModel([
        SgasComponent(acc_a[j] / m, acc_mu[j] / m, _project_pd(acc_s[j] / m, events, j), w_bar[j])
        for j in range(k)])
    final = e_step(data, averaged, workers=config.workers)
    n_par = n_free_parameters(k, d, config.fixed_alpha is not None)
    return FitResult(
        model=averaged,
        labels=final.labels,
        e1=final.e1,
        bic=n_par * math.log(n) - 2.0 * final.loglik,
        loglik=final.loglik,
        trace=trace,
        events=events,
        config=config,
        n_restarts=attempt,
    )


def fit(data, config: FitConfig, init: Optional[MixtureModel] = None) -> FitResult:
    """Run the stochastic ECM; restarts from a random k-medoids start on degeneracy.

    ``init`` replaces the k-medoids start of the first attempt only.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    if init is not None and (init.k != config.k or init.d != d):
        raise DomainError("initial model does not match K or the data dimension")
    if not np.all(np.isfinite(data)):
        raise DomainError("data contain non-finite values")
    if n < config.k * (d + 1):
        raise DomainError(f"need at least K(d+1) = {config.k * (d + 1)} rows, got {n}")
    events: List[dict] = []
    last: Optional[Exception] = None
    for attempt in range(config.max_restarts + 1):
        try:
            return _run(data, config, attempt, events, init)
        except (DegenerateGroupError, SamplerStuckError) as exc:
            log.info("fit attempt %d failed: %s", attempt, exc)
            events.append({"kind": "restart", "attempt": attempt, "reason": str(exc)})
            last = exc
    raise DegenerateGroupError(
        f"fit failed after {config.max_restarts} restarts: {last}",
        group=getattr(last, "group", None))


def select_k(data, k_range: Sequence[int], config: FitConfig) -> FitResult:
    """Fit every feasible K and keep the smallest BIC; the table lists every K tried."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    ks = list(k_range)
    if not ks:
        raise DomainError("k_range is empty")
    table: Dict[int, Optional[float]] = {}
    best: Optional[FitResult] = None
    failures = []
    for k in ks:
        if n < k * (d + 1):
            log.info("skipping K=%d: needs %d rows, have %d", k, k * (d + 1), n)
            table[k] = None
            continue
        try:
            result = fit(data, config.replace(k=k))
        except SgasError as exc:
            log.info("K=%d failed: %s", k, exc)
            failures.append((k, str(exc)))
            table[k] = None
            continue
        table[k] = result.bic
        if best is None or result.bic < best.bic:
            best = result
    if best is None:
        raise DegenerateGroupError(f"every K in {ks} failed: {failures}")
    best.bic_table = table
    return best
