"""Simulation benchmark: three elliptical clusters in the plane.

Two generators share the same locations and shape matrices:

* ``"sgas"`` draws from a sub-Gaussian alpha-stable mixture;
* ``"mt"`` draws from a multivariate-t mixture, used to check that the
  stable fit degrades gracefully when the tail model is wrong.

Every replicate draws its own data stream from ``(seed, rep)`` so results do
not depend on the order or number of replicates run.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .em import FitConfig, fit
from .errors import DomainError, SgasError
from .metrics import adjusted_rand_index
from .sgas import MixtureModel, SgasComponent, mixture_sample

log = logging.getLogger(__name__)

EXAMPLE1_N = 600
EXAMPLE1_LOCATIONS = np.array([[0.0, 3.0], [3.0, 0.0], [-3.0, 0.0]])
EXAMPLE1_SHAPES = np.array([[[2.0, 0.5], [0.5, 0.5]],
                            np.eye(2),
                            [[2.0, -0.5], [-0.5, 0.5]]])
EXAMPLE1_ALPHAS = (1.5, 1.7, 1.9)
MT_DEGREES = (2.0, 4.0, 8.0)


def example1_model(alphas: Sequence[float] = EXAMPLE1_ALPHAS, scale: float = 1.0) -> MixtureModel:
    """Equal-weight three-component model; ``scale`` multiplies the locations."""
    if len(alphas) != 3:
        raise DomainError("the benchmark model has three components")
    return MixtureModel([SgasComponent(a, scale * mu, sigma, 1.0 / 3.0)
                         for a, mu, sigma in zip(alphas, EXAMPLE1_LOCATIONS, EXAMPLE1_SHAPES)])


def mt_mixture_sample(n: int, rng: np.random.Generator, nus: Sequence[float] = MT_DEGREES,
                      scale: float = 1.0):
    """Equal-weight multivariate-t mixture on the benchmark locations and shapes.

    A row of component ``j`` is ``mu_j + z / sqrt(g)`` with ``z ~ N(0, sigma_j)``
    and ``g ~ chi2(nu_j) / nu_j``.  Returns ``(data, labels)``.
    """
    k = len(nus)
    if k != 3:
        raise DomainError("the benchmark model has three components")
    counts = rng.multinomial(n, np.full(k, 1.0 / k))
    labels = np.repeat(np.arange(k), counts)
    rng.shuffle(labels)
    data = np.empty((n, 2))
    for j, nu in enumerate(nus):
        rows = labels == j
        m = int(rows.sum())
        z = rng.multivariate_normal(np.zeros(2), EXAMPLE1_SHAPES[j], size=m)
        g = rng.chisquare(nu, size=m) / nu
        data[rows] = scale * EXAMPLE1_LOCATIONS[j] + z / np.sqrt(g)[:, None]
    return data, labels


def match_locations(truth, estimate):
    """Optimal one-to-one matching of estimated to true locations.

    Returns ``(order, distances)`` where ``estimate[order[j]]`` is matched to
    ``truth[j]`` at Euclidean distance ``distances[j]``.
    """
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    cost = np.linalg.norm(truth[:, None, :] - estimate[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    order = cols[np.argsort(rows)]
    return order, cost[np.arange(len(truth)), order]


@dataclass
class BenchRecord:
    rep: int
    status: str
    ari: Optional[float] = None
    max_location_error: Optional[float] = None
    alphas: Optional[List[float]] = None
    n_restarts: int = 0
    message: str = ""


def _replicate_data(generator, rep, seed, n, scale, alphas):
    rng = np.random.default_rng([seed, rep])
    if generator == "sgas":
        return mixture_sample(example1_model(alphas, scale), n, rng)
    if generator == "mt":
        return mt_mixture_sample(n, rng, scale=scale)
    raise DomainError(f"unknown generator {generator!r}")


def run_replicate(rep: int, seed: int, config: FitConfig, generator: str = "sgas",
                  n: int = EXAMPLE1_N, scale: float = 1.0,
                  alphas: Sequence[float] = EXAMPLE1_ALPHAS) -> BenchRecord:
    data, truth = _replicate_data(generator, rep, seed, n, scale, alphas)
    fit_seed = int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])
    try:
        result = fit(data, config.replace(k=3, seed=fit_seed))
    except SgasError as exc:
        log.warning("replicate %d failed: %s", rep, exc)
        return BenchRecord(rep, "failed", message=str(exc))
    _, dist = match_locations(scale * EXAMPLE1_LOCATIONS, result.model.locations)
    return BenchRecord(rep, "ok", adjusted_rand_index(truth, result.labels),
                       float(dist.max()), result.model.alphas.tolist(), result.n_restarts)


def run_bench(reps: int, seed: int = 0, config: Optional[FitConfig] = None,
              generator: str = "sgas", n: int = EXAMPLE1_N, scale: float = 1.0,
              alphas: Sequence[float] = EXAMPLE1_ALPHAS) -> List[BenchRecord]:
    if reps < 1:
        raise DomainError("reps must be at least 1")
    config = config or FitConfig(k=3)
    return [run_replicate(r, seed, config, generator, n, scale, alphas) for r in range(reps)]


def summarize(records: Sequence[BenchRecord]) -> dict:
    """Quantiles of the ARI over successful replicates and the failure count."""
    ari = np.array([r.ari for r in records if r.status == "ok"], dtype=float)
    out = {"reps": len(records), "ok": int(ari.size), "failed": len(records) - int(ari.size)}
    if ari.size:
        q = np.quantile(ari, [0.0, 0.25, 0.5, 0.75, 1.0])
        out.update(zip(("min", "q25", "median", "q75", "max"), map(float, q)))
    return out


def records_as_dicts(records: Sequence[BenchRecord]) -> List[dict]:
    return [asdict(r) for r in records]
