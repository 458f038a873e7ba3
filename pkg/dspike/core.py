"""Core data structures and densities for the double spike Dirichlet model.

This module contains the value types shared by every other module (weight
vectors on the probability simplex, inclusion vectors, the prior
hyperparameters and the ensemble data), prior sampling through the
Dirichlet/Gamma relationship, and the prior and likelihood densities.  It
also defines the exception hierarchy and a few constants used across the
project.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import InitVar, dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

logger = logging.getLogger(__name__)

# absolute tolerance on the unit-sum constraint
SIMPLEX_TOLERANCE = 1e-9
# entries are clamped to this before taking logs in density evaluations
DENSITY_FLOOR = 1e-300
# the marginal prior density enumerates 2**K inclusion vectors
MAX_MARGINAL_K = 20

# grids used by the simulation study: rho1 = K**alpha1, rho2 = K**-alpha2
SCENARIO_ALPHA1 = (0.5, 2.0, 6)
SCENARIO_ALPHA2 = (1.0, 2.0, 4)
# grids used by the rolling forecast combination
ROLLING_ALPHA1 = (1.0, 3.0, 100)
ROLLING_ALPHA2 = (1.0, 3.0, 20)
# log(lambda) grid for the two-step lasso
LAMBDA_LOG_RANGE = (-8.0, 8.0, 80)


class DspikeError(Exception):
    """Base class for errors raised by the package."""


class SimplexError(DspikeError, ValueError):
    """A vector violates the probability simplex constraints."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class DimensionError(DspikeError, ValueError):
    """Operands disagree on n or K."""


class NumericGuardError(DspikeError, ArithmeticError):
    """A computation produced a value that cannot be used (zero norm, NaN)."""


class DataFileError(DspikeError, ValueError):
    """A data file could not be turned into an :class:`EnsembleData`."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class UndefinedStatisticError(DspikeError, ValueError):
    """A requested summary is undefined for the given input."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before meeting its tolerance."""


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightVector:
    """A point on the probability simplex.

    Construct through :func:`validate_simplex` when the input may carry
    rounding error; the constructor itself only checks the invariants.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise SimplexError("weights must be a non-empty 1-D sequence")
        if np.any(arr < 0):
            idx = int(np.argmin(arr))
            raise SimplexError(f"negative weight {arr[idx]!r} at index {idx}", index=idx)
        total = float(arr.sum())
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise SimplexError(f"weights sum to {total!r}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def K(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.K

    def __iter__(self) -> Iterator[float]:
        return iter(self.values.tolist())

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True, eq=False)
class InclusionVector:
    """Binary indicators marking which coordinates carry the large concentration."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("inclusion vector must be a non-empty 1-D sequence")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("inclusion vector entries must be 0 or 1")
        arr = arr.astype(np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def K(self) -> int:
        return int(self.bits.size)

    @property
    def size(self) -> int:
        """Number of active coordinates, |gamma|."""
        return int(self.bits.sum())

    def __len__(self) -> int:
        return self.K


@dataclass(frozen=True)
class DoubleSpikePrior:
    """Hyperparameters of the double spike Dirichlet prior.

    ``a1``/``a2`` are the shape/rate of the Gamma prior on the noise
    precision.  ``validate=False`` skips the range checks; it exists so tests
    can build the degenerate ``theta`` in {0, 1} limits.
    """

    rho1: float
    rho2: float
    theta: float
    a1: float = 0.01
    a2: float = 0.01
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        if not validate:
            return
        if not (self.rho1 > self.rho2 > 0):
            raise ValueError(f"need rho1 > rho2 > 0, got rho1={self.rho1}, rho2={self.rho2}")
        if not (0 < self.theta < 1):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not (self.a1 > 0 and self.a2 > 0):
            raise ValueError(f"a1 and a2 must be positive, got a1={self.a1}, a2={self.a2}")

    @classmethod
    def from_exponents(cls, K: int, alpha1: float, alpha2: float,
                       theta: Optional[float] = None,
                       a1: float = 0.01, a2: float = 0.01) -> "DoubleSpikePrior":
        """Build ``rho1 = K**alpha1`` and ``rho2 = K**-alpha2``.

        ``theta`` defaults to ``1/K``.  Settings outside the range in which
        the posterior is known to contract are accepted but logged.
        """
        if alpha1 <= 0 or alpha2 <= 0:
            raise ValueError("alpha1 and alpha2 must be positive")
        if theta is None:
            theta = 1.0 / K
        if alpha1 / 2 + alpha2 < 1:
            logger.warning("alpha1/2 + alpha2 = %.3f < 1; contraction guidance not met",
                           alpha1 / 2 + alpha2)
        if not (1.0 / K <= theta <= 0.5):
            logger.info("theta=%.4g is outside [1/K, 1/2]", theta)
        return cls(rho1=float(K) ** alpha1, rho2=float(K) ** -alpha2,
                   theta=theta, a1=a1, a2=a2)


def _linspace(bounds: tuple[float, float, int]) -> tuple[float, ...]:
    lo, hi, points = bounds
    return tuple(float(v) for v in np.linspace(lo, hi, int(points)))


@dataclass(frozen=True)
class HyperGridSpec:
    """Exponent grids for ``rho1 = K**alpha1`` and ``rho2 = K**-alpha2``.

    ``theta=None`` leaves theta to the caller (fixed per run).
    """

    alpha1_grid: tuple[float, ...]
    alpha2_grid: tuple[float, ...]
    theta: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha1_grid", tuple(float(a) for a in self.alpha1_grid))
        object.__setattr__(self, "alpha2_grid", tuple(float(a) for a in self.alpha2_grid))
        if not self.alpha1_grid or not self.alpha2_grid:
            raise ValueError("exponent grids must be non-empty")
        if min(self.alpha1_grid) <= 0 or min(self.alpha2_grid) <= 0:
            raise ValueError("all exponents must be positive")
        if self.theta is not None and not (0 < self.theta < 1):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")

    @classmethod
    def scenario_default(cls, theta: Optional[float] = None) -> "HyperGridSpec":
        return cls(_linspace(SCENARIO_ALPHA1), _linspace(SCENARIO_ALPHA2), theta)

    @classmethod
    def rolling_default(cls, theta: Optional[float] = 0.05) -> "HyperGridSpec":
        return cls(_linspace(ROLLING_ALPHA1), _linspace(ROLLING_ALPHA2), theta)

    def __len__(self) -> int:
        return len(self.alpha1_grid) * len(self.alpha2_grid)

    def priors(self, K: int, theta: Optional[float] = None,
               a1: float = 0.01, a2: float = 0.01) -> list[DoubleSpikePrior]:
        """Expand the grid into priors, alpha1 varying slowest."""
        theta = self.theta if theta is None else theta
        if theta is None:
            theta = 1.0 / K
        return [
            DoubleSpikePrior(float(K) ** a1_, float(K) ** -a2_, theta, a1, a2)
            for a1_, a2_ in itertools.product(self.alpha1_grid, self.alpha2_grid)
        ]


def lambda_grid(log_min: float = LAMBDA_LOG_RANGE[0], log_max: float = LAMBDA_LOG_RANGE[1],
                points: int = int(LAMBDA_LOG_RANGE[2])) -> tuple[float, ...]:
    """Lasso penalties equally spaced on the log scale."""
    return tuple(float(v) for v in np.exp(np.linspace(log_min, log_max, points)))


@dataclass(frozen=True, eq=False)
class EnsembleData:
    """Prediction matrix ``X`` (n x K, one column per forecaster) and target ``y``.

    ``n == 0`` is allowed and represents the prior-only case.
    """

    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise DimensionError(f"X must be two-dimensional, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[1] < 2:
            raise DimensionError(f"need at least two columns, got {X.shape[1]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DimensionError("X and y must not contain missing or infinite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        columns = tuple(self.columns) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(columns) != X.shape[1]:
            raise DimensionError("column names do not match the number of columns")
        object.__setattr__(self, "columns", columns)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def K(self) -> int:
        return int(self.X.shape[1])

    def predict(self, beta) -> np.ndarray:
        b = _as_array(beta)
        if b.shape[-1] != self.K:
            raise DimensionError(f"weights have length {b.shape[-1]} but data has K={self.K}")
        return self.X @ b

    def rss(self, beta) -> float:
        """Residual sum of squares at ``beta``."""
        r = self.y - self.predict(beta)
        return float(r @ r)

    def rows(self, index: Iterable[int] | slice) -> "EnsembleData":
        """Return the sub-panel made of the selected rows."""
        if not isinstance(index, slice):
            index = np.asarray(list(index), dtype=int)
        return EnsembleData(self.X[index], self.y[index], self.columns)

    def take_columns(self, index: Sequence[int]) -> "EnsembleData":
        idx = list(index)
        return EnsembleData(self.X[:, idx], self.y, tuple(self.columns[j] for j in idx))


@dataclass(frozen=True)
class StructuredTruth:
    """A member of Theta(s, K): weight ``1/s`` on ``support``, zero elsewhere."""

    support: frozenset[int]
    K: int

    def __post_init__(self) -> None:
        support = frozenset(int(i) for i in self.support)
        object.__setattr__(self, "support", support)
        if len(support) < 2:
            raise ValueError("a structured truth needs s >= 2 nonzero entries")
        if min(support) < 0 or max(support) >= self.K:
            raise ValueError(f"support indices must lie in 0..{self.K - 1}")

    @property
    def s(self) -> int:
        return len(self.support)

    def weights(self) -> WeightVector:
        values = np.zeros(self.K)
        values[sorted(self.support)] = 1.0 / self.s
        return validate_simplex(values)


def _as_array(values) -> np.ndarray:
    if isinstance(values, WeightVector):
        return values.values
    if isinstance(values, InclusionVector):
        return values.bits
    return np.asarray(values, dtype=float)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def validate_simplex(values: Sequence[float] | np.ndarray,
                     tolerance: float = SIMPLEX_TOLERANCE) -> WeightVector:
    """Check ``values`` against the simplex constraints and return a :class:`WeightVector`.

    Entries in ``[-tolerance, 0)`` are clamped to zero and the result is
    renormalised.  Anything further off raises :class:`SimplexError` naming
    the offending index (or the sum).
    """
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise SimplexError("weights must be non-empty")
    bad = np.flatnonzero(~np.isfinite(arr) | (arr < -tolerance))
    if bad.size:
        idx = int(bad[0])
        raise SimplexError(f"entry {idx} is {arr[idx]!r}, below -{tolerance}", index=idx)
    total = float(arr.sum())
    if abs(total - 1.0) > tolerance:
        raise SimplexError(f"sum = {total!r} deviates from 1 by more than {tolerance}")
    arr = np.clip(arr, 0.0, None)
    return WeightVector(arr / arr.sum())


def concentration_vector(gamma, rho1: float, rho2: float) -> np.ndarray:
    g = _as_array(gamma)
    return rho1 * g + rho2 * (1 - g)


def log_gamma_variates(shapes: np.ndarray, rng: np.random.Generator,
                       size: Optional[int] = None) -> np.ndarray:
    """Draw ``log G`` with ``G ~ Gamma(shape, 1)`` for every entry of ``shapes``.

    Shapes below one use ``G = G' * U**(1/shape)`` with ``G' ~ Gamma(shape+1)``
    evaluated in log space, so draws that would underflow as floats still
    carry usable logs.  With ``size`` the result has shape ``(size, K)``.
    """
    shapes = np.asarray(shapes, dtype=float)
    out_shape = shapes.shape if size is None else (size,) + shapes.shape
    small = shapes < 1.0
    boosted = np.where(small, shapes + 1.0, shapes)
    g = rng.gamma(np.broadcast_to(boosted, out_shape))
    u = rng.random(out_shape)
    with np.errstate(divide="ignore"):
        log_g = np.log(g) + np.where(small, np.log(u) / np.where(small, shapes, 1.0), 0.0)
    return log_g


def normalize_log_weights(log_a: np.ndarray) -> np.ndarray:
    """Map log Gamma variates to the simplex, ``A / ||A||_1``, along the last axis."""
    peak = np.max(log_a, axis=-1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        raise NumericGuardError("||A||_1 is zero or non-finite after Gamma sampling")
    w = np.exp(log_a - peak)
    return w / w.sum(axis=-1, keepdims=True)


class PriorDraw(NamedTuple):
    gamma: InclusionVector
    log_A: np.ndarray
    beta: WeightVector

    @property
    def A(self) -> np.ndarray:
        """Latent Gamma variates; entries may underflow to 0, use ``log_A`` instead."""
        return np.exp(self.log_A)


def sample_conditional_weights(gamma, prior: DoubleSpikePrior, rng: np.random.Generator,
                               size: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(log A, beta)`` with ``beta ~ Dir(rho1*gamma + rho2*(1-gamma))``."""
    log_a = log_gamma_variates(concentration_vector(gamma, prior.rho1, prior.rho2), rng, size)
    return log_a, normalize_log_weights(log_a)


def sample_double_spike_prior(prior: DoubleSpikePrior, K: int,
                              rng: np.random.Generator) -> PriorDraw:
    """Draw ``(gamma, A, beta)`` from the hierarchical prior."""
    if K < 2:
        raise ValueError(f"K must be at least 2, got {K}")
    bits = (rng.random(K) < prior.theta).astype(np.int8)
    log_a, beta = sample_conditional_weights(bits, prior, rng)
    return PriorDraw(InclusionVector(bits), log_a, WeightVector(beta / beta.sum()))


def dirichlet_log_density(beta, concentration) -> float:
    """Log density of ``Dir(concentration)`` at ``beta`` with boundary clamping."""
    b = np.maximum(_as_array(beta), DENSITY_FLOOR)
    c = np.asarray(concentration, dtype=float)
    if b.shape != c.shape:
        raise DimensionError(f"beta has shape {b.shape} but concentration has {c.shape}")
    value = float(gammaln(c.sum()) - gammaln(c).sum() + np.dot(c - 1.0, np.log(b)))
    if not math.isfinite(value):
        raise NumericGuardError("Dirichlet log density is not finite")
    return value


def log_conditional_prior_density(beta, gamma, rho1: float, rho2: float) -> float:
    """Log of ``Dir(beta; rho1*gamma + rho2*(1-gamma))``."""
    return dirichlet_log_density(beta, concentration_vector(gamma, rho1, rho2))


def log_marginal_prior_density(beta, prior: DoubleSpikePrior) -> float:
    """Log of the prior marginalised over gamma, by enumeration of all 2**K vectors."""
    b = _as_array(beta)
    K = b.size
    if K > MAX_MARGINAL_K:
        raise ValueError(f"marginal density enumerates 2**K terms; K={K} exceeds {MAX_MARGINAL_K}")
    log_b = np.log(np.maximum(b, DENSITY_FLOOR))
    # active_log_sum[k] = sum of log beta_i over the active set of the k-th
    # gamma; m[k] = |gamma|.  Built by doubling so memory stays O(2**K).
    active_log_sum = np.zeros(1)
    m = np.zeros(1)
    for lb in log_b:
        active_log_sum = np.concatenate([active_log_sum, active_log_sum + lb])
        m = np.concatenate([m, m + 1.0])
    total_log = float(log_b.sum())
    terms = (
        gammaln(prior.rho1 * m + prior.rho2 * (K - m))
        - m * gammaln(prior.rho1) - (K - m) * gammaln(prior.rho2)
        + (prior.rho1 - 1.0) * active_log_sum
        + (prior.rho2 - 1.0) * (total_log - active_log_sum)
        + xlogy(m, prior.theta) + xlogy(K - m, 1.0 - prior.theta)
    )
    value = float(logsumexp(terms))
    if not math.isfinite(value):
        raise NumericGuardError("marginal prior log density is not finite")
    return value


def log_likelihood(beta, sigma_inv2: float, data: EnsembleData) -> float:
    """Gaussian log likelihood of ``y = X beta + eps`` with precision ``sigma_inv2``."""
    if sigma_inv2 <= 0:
        raise ValueError("sigma_inv2 must be positive")
    rss = data.rss(beta)
    return -0.5 * data.n * math.log(2 * math.pi / sigma_inv2) - 0.5 * sigma_inv2 * rss
