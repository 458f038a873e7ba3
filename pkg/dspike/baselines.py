"""Comparator methods: the two-step lasso and the simple average.

The lasso solves ``(1/(2n))||y - Xb||^2 + lambda ||b||_1`` with no intercept
and no column standardisation, since forecaster columns already share the
response scale and the weights must map back to columns directly.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import ConvergenceWarning, EnsembleData, WeightVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LassoFit:
    coefficients: np.ndarray
    lam: float
    n_iterations: int
    converged: bool
    objective_history: tuple[float, ...] = field(default=())

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.coefficients))


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0)


def lasso_objective(b: np.ndarray, data: EnsembleData, lam: float) -> float:
    r = data.y - data.X @ b
    return float(r @ r / (2.0 * data.n) + lam * np.abs(b).sum())


def full_shrinkage_lambda(data: EnsembleData) -> float:
    """Smallest penalty at which every coefficient is zero."""
    return float(np.max(np.abs(data.X.T @ data.y)) / data.n)


def lasso_coordinate_descent(data: EnsembleData, lam: float, tolerance: float = 1e-10,
                             max_sweeps: int = 10000) -> LassoFit:
    """Cyclic coordinate descent with soft-thresholding, started from zero.

    Stops when the largest coefficient change in a sweep falls below
    ``tolerance``; otherwise the fit comes back with ``converged=False`` and a
    :class:`ConvergenceWarning` is issued.
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if data.n == 0:
        raise ValueError("lasso needs at least one observation")
    X, y, n = data.X, data.y, data.n
    col_sq = (X ** 2).sum(axis=0) / n
    b = np.zeros(data.K)
    r = y.copy()
    history = [lasso_objective(b, data, lam)]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(data.K):
            if col_sq[j] == 0:
                continue
            old = b[j]
            rho = X[:, j] @ r / n + col_sq[j] * old
            new = float(soft_threshold(rho, lam)) / col_sq[j]
            if new != old:
                r -= X[:, j] * (new - old)
                b[j] = new
                max_delta = max(max_delta, abs(new - old))
        history.append(lasso_objective(b, data, lam))
        if max_delta < tolerance:
            converged = True
            break
    if not converged:
        msg = f"lasso did not converge in {max_sweeps} sweeps (lambda={lam:.4g})"
        logger.warning(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return LassoFit(b, float(lam), sweeps, converged, tuple(history))


def simple_average(K: int) -> WeightVector:
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    return WeightVector(np.full(K, 1.0 / K))


def two_step_lasso(data: EnsembleData, lam: float, positive_only: bool = False,
                   tolerance: float = 1e-10, max_sweeps: int = 10000) -> WeightVector:
    """Select columns by lasso, then give the selected ones equal weight.

    Nonzero coefficients of either sign count as selected unless
    ``positive_only``.  An empty selection falls back to the simple average.
    """
    fit = lasso_coordinate_descent(data, lam, tolerance, max_sweeps)
    coef = fit.coefficients
    selected = np.flatnonzero(coef > 0) if positive_only else np.flatnonzero(coef != 0)
    if selected.size == 0:
        logger.debug("two-step lasso selected nothing at lambda=%.4g; using simple average", lam)
        return simple_average(data.K)
    weights = np.zeros(data.K)
    weights[selected] = 1.0 / selected.size
    return WeightVector(weights)
