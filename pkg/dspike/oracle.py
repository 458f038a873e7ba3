"""Brute-force reference computations used to check the samplers.

Nothing here imports :mod:`dspike.sampler`.  The densities are evaluated
with :mod:`scipy.stats` rather than the formulas in :mod:`dspike.core`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .core import DoubleSpikePrior, EnsembleData, WeightVector, validate_simplex

MAX_QUADRATURE_K = 4
MAX_GRID_SIZE = 10 ** 7
MAX_MOMENT_K = 10


@dataclass(frozen=True)
class QuadratureSpec:
    """Grid for the tiny-K posterior.  ``prior`` is a double spike prior or a
    symmetric Dirichlet concentration."""

    K: int
    grid_points_per_dim: int
    prior: Union[DoubleSpikePrior, float]

    def __post_init__(self) -> None:
        if not (2 <= self.K <= MAX_QUADRATURE_K):
            raise ValueError(f"quadrature supports 2 <= K <= {MAX_QUADRATURE_K}, got {self.K}")
        if self.grid_points_per_dim < 2:
            raise ValueError("need at least two grid points per dimension")
        if self.grid_points_per_dim ** (self.K - 1) > MAX_GRID_SIZE:
            raise ValueError(f"grid of {self.grid_points_per_dim}**{self.K - 1} points exceeds "
                             f"{MAX_GRID_SIZE}")
        if not isinstance(self.prior, DoubleSpikePrior) and not self.prior > 0:
            raise ValueError("symmetric concentration must be positive")


def simplex_grid(K: int, m: int) -> tuple[np.ndarray, float]:
    """Cell centres of an ``m``-per-axis grid on the first ``K-1`` coordinates.

    Centres whose implied last coordinate is not positive are dropped.
    Returns the points (rows on the simplex) and the common cell volume.
    """
    h = 1.0 / m
    axis = (np.arange(m) + 0.5) * h
    mesh = np.stack(np.meshgrid(*([axis] * (K - 1)), indexing="ij"), axis=-1).reshape(-1, K - 1)
    last = 1.0 - mesh.sum(axis=1)
    keep = last > 0
    points = np.column_stack([mesh[keep], last[keep]])
    return points, h ** (K - 1)


def _log_prior(points: np.ndarray, prior: Union[DoubleSpikePrior, float]) -> np.ndarray:
    K = points.shape[1]
    x = points.T
    if not isinstance(prior, DoubleSpikePrior):
        return stats.dirichlet.logpdf(x, np.full(K, float(prior)))
    terms = []
    for gamma in itertools.product((0, 1), repeat=K):
        g = np.array(gamma)
        conc = prior.rho1 * g + prior.rho2 * (1 - g)
        s = int(g.sum())
        log_weight = (s * math.log(prior.theta) if s else 0.0) + \
            ((K - s) * math.log1p(-prior.theta) if K - s else 0.0)
        terms.append(stats.dirichlet.logpdf(x, conc) + log_weight)
    return logsumexp(np.vstack(terms), axis=0)


def exact_posterior_tiny(data: EnsembleData, spec: QuadratureSpec, sigma_inv2: float) -> WeightVector:
    """Posterior mean of beta by Riemann summation over the simplex grid."""
    if data.K != spec.K:
        raise ValueError(f"data has K={data.K} but spec has K={spec.K}")
    if sigma_inv2 < 0:
        raise ValueError("sigma_inv2 must be non-negative")
    points, _ = simplex_grid(spec.K, spec.grid_points_per_dim)
    resid = data.y[None, :] - points @ data.X.T
    log_post = _log_prior(points, spec.prior) - 0.5 * sigma_inv2 * (resid ** 2).sum(axis=1)
    w = np.exp(log_post - log_post.max())
    mean = (w[:, None] * points).sum(axis=0) / w.sum()
    return validate_simplex(mean / mean.sum())


def dirichlet_moment_oracle(concentration: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(concentration, dtype=float)
    if np.any(c <= 0):
        raise ValueError("concentrations must be positive")
    total = c.sum()
    mean = c / total
    var = c * (total - c) / (total ** 2 * (total + 1))
    return mean, var


def double_spike_moment_oracle(prior: DoubleSpikePrior, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of beta under the marginal prior, mixing over all gamma."""
    if K > MAX_MOMENT_K:
        raise ValueError(f"moment oracle enumerates 2**K terms; K={K} exceeds {MAX_MOMENT_K}")
    first = np.zeros(K)
    second = np.zeros(K)
    for gamma in itertools.product((0, 1), repeat=K):
        g = np.array(gamma)
        s = int(g.sum())
        weight = prior.theta ** s * (1 - prior.theta) ** (K - s)
        mean, var = dirichlet_moment_oracle(prior.rho1 * g + prior.rho2 * (1 - g))
        first += weight * mean
        second += weight * (var + mean ** 2)
    return first, second - first ** 2


class BoundCheck(NamedTuple):
    estimate: float
    bound: float
    mc_se: float
    passed: bool


def _symmetric_log_gammas(alpha: float, K: int, n: int, rng: np.random.Generator) -> np.ndarray:
    # Gamma(alpha) = Gamma(alpha + 1) * U**(1/alpha), kept in logs for small alpha
    g = rng.gamma(alpha + 1.0, size=(n, K))
    u = rng.random((n, K))
    with np.errstate(divide="ignore"):
        return np.log(g) + np.log(u) / alpha


def _top_two(log_g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    part = np.partition(log_g, -2, axis=1)
    return part[:, -1], part[:, -2]


def proposition1_check(alpha: float, K: int, t: float, n_samples: int,
                       rng: np.random.Generator, chunk: int = 50_000) -> BoundCheck:
    """Monte Carlo check of ``P(pi_(K-1) <= t * pi_(K)) >= t**(alpha*(K-1))`` under ``Dir(alpha)``."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10**4")
    if not (0 < t < 1) or alpha <= 0 or K < 2:
        raise ValueError("need alpha > 0, K >= 2 and 0 < t < 1")
    hits = 0
    log_t = math.log(t)
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        top, second = _top_two(_symmetric_log_gammas(alpha, K, size, rng))
        hits += int(np.sum(second - top <= log_t))
        done += size
    p = hits / n_samples
    se = math.sqrt(max(p * (1 - p), 0.0) / n_samples)
    bound = t ** (alpha * (K - 1))
    return BoundCheck(p, bound, se, p >= bound - 3 * se)


def two_component_event_probability(alpha: float, t: float) -> float:
    """Exact ``P(min(pi) <= t * max(pi))`` for ``pi ~ Dir(alpha, alpha)``."""
    cut = t / (1.0 + t)
    return float(2.0 * stats.beta.cdf(cut, alpha, alpha))


def second_largest_check(alpha: float, K: int, n_samples: int,
                         rng: np.random.Generator, chunk: int = 50_000) -> BoundCheck:
    """Monte Carlo check of ``P(pi_(K-1) <= alpha) >= alpha**(alpha*(K-1))``."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    hits = 0
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        log_g = _symmetric_log_gammas(alpha, K, size, rng)
        log_norm = logsumexp(log_g, axis=1)
        _, second = _top_two(log_g)
        hits += int(np.sum(second - log_norm <= math.log(alpha)))
        done += size
    p = hits / n_samples
    se = math.sqrt(max(p * (1 - p), 0.0) / n_samples)
    bound = alpha ** (alpha * (K - 1))
    return BoundCheck(p, bound, se, p >= bound - 3 * se)


def expected_max_prob_check(alpha: float, K: int, n_samples: int, rng: np.random.Generator) -> bool:
    return second_largest_check(alpha, K, n_samples, rng).passed
