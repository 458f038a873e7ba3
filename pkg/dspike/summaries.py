"""Posterior summaries of a completed trace and predictor-group diagnostics.

All functions are read-only over a :class:`~dspike.sampler.Trace`; the
``burn_in`` argument counts iterations discarded from the start.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import helpers
from .core import EnsembleData, UndefinedStatisticError, WeightVector, validate_simplex
from .sampler import Trace

logger = logging.getLogger(__name__)

DEFAULT_SELECTION_THRESHOLD = 0.2


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    mean: WeightVector
    credible_center: WeightVector
    credible_radius_l1: float
    inclusion_freq: np.ndarray
    sigma_inv2_mean: float
    level: float = 0.95


@dataclass(frozen=True, eq=False)
class GroupDiagnostics:
    """Bias (prediction minus response) and variance of each column in ``group``.

    The arrays follow the order of ``group``.  ``mean_pairwise_bias_correlation``
    is ``None`` only when it was requested to be optional and the group has
    a single member.
    """

    group: tuple[int, ...]
    per_column_bias: np.ndarray
    per_column_variance: np.ndarray
    mean_pairwise_bias_correlation: Optional[float]


def _window(trace: Trace, burn_in: int) -> slice:
    if burn_in < 0 or burn_in >= len(trace):
        raise UndefinedStatisticError(
            f"burn_in={burn_in} leaves no samples in a trace of length {len(trace)}")
    return slice(burn_in, None)


def posterior_mean(trace: Trace, burn_in: int) -> WeightVector:
    window = trace.beta_samples[_window(trace, burn_in)]
    mean = window.mean(axis=0)
    return validate_simplex(mean / mean.sum())


def credible_ball(trace: Trace, burn_in: int, level: float) -> tuple[WeightVector, float]:
    """Posterior mean and the empirical ``level`` quantile of l1 distances to it."""
    if not (0 < level <= 1):
        raise ValueError(f"level must lie in (0, 1], got {level}")
    center = posterior_mean(trace, burn_in)
    dist = np.abs(trace.beta_samples[_window(trace, burn_in)] - center.values).sum(axis=1)
    radius = float(np.quantile(dist, level, method="inverted_cdf"))
    return center, radius


def inclusion_frequencies(trace: Trace, burn_in: int) -> np.ndarray:
    window = trace.gamma_samples[_window(trace, burn_in)]
    return window.sum(axis=0) / window.shape[0]


def selected_group(inclusion_freq: Sequence[float], threshold: float) -> tuple[int, ...]:
    """Indices whose inclusion frequency is strictly above ``threshold``."""
    if not (0 <= threshold <= 1):
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    freq = np.asarray(inclusion_freq, dtype=float)
    return tuple(int(i) for i in np.flatnonzero(freq > threshold))


def selection_counts(inclusion_freq: Sequence[float],
                     thresholds: Sequence[float] = (0.2, 0.05)) -> dict[str, int]:
    """How many coordinates clear each threshold, plus how many were never selected."""
    freq = np.asarray(inclusion_freq, dtype=float)
    counts = {f"above_{t:g}": len(selected_group(freq, t)) for t in thresholds}
    counts["never"] = int(np.sum(freq == 0))
    return counts


def summarize_posterior(trace: Trace, burn_in: int, level: float = 0.95) -> PosteriorSummary:
    center, radius = credible_ball(trace, burn_in, level)
    window = _window(trace, burn_in)
    return PosteriorSummary(
        mean=center,
        credible_center=center,
        credible_radius_l1=radius,
        inclusion_freq=inclusion_frequencies(trace, burn_in),
        sigma_inv2_mean=float(trace.sigma_inv2_samples[window].mean()),
        level=level,
    )


def summary_frame(summary: PosteriorSummary) -> pd.DataFrame:
    K = summary.mean.K
    return pd.DataFrame({
        "index": np.arange(1, K + 1),
        "mean": summary.mean.values,
        "incl_freq": summary.inclusion_freq,
        "radius": np.full(K, summary.credible_radius_l1),
        "level": np.full(K, summary.level),
    })


def write_summary_csv(summary: PosteriorSummary, path: Path | str) -> Path:
    return helpers.write_frame(summary_frame(summary), path)


# ---------------------------------------------------------------------------
# group diagnostics
# ---------------------------------------------------------------------------


def _bias_matrix(data: EnsembleData, group: Sequence[int]) -> np.ndarray:
    return data.X[:, list(group)] - data.y[:, None]


def mean_pairwise_bias_correlation(data: EnsembleData, group: Sequence[int]) -> float:
    """Average Pearson correlation between the bias vectors of all pairs in ``group``."""
    group = list(group)
    if len(group) < 2:
        raise UndefinedStatisticError("pairwise correlation needs at least two columns")
    if data.n < 2:
        raise UndefinedStatisticError("pairwise correlation needs at least two rows")
    bias = _bias_matrix(data, group)
    if np.any(bias.std(axis=0) == 0):
        raise UndefinedStatisticError("a column in the group has constant bias")
    corr = np.corrcoef(bias, rowvar=False)
    upper = corr[np.triu_indices(len(group), k=1)]
    return float(np.clip(upper.mean(), -1.0, 1.0))


def group_diagnostics(data: EnsembleData, group: Sequence[int], variance_of: str = "bias",
                      require_correlation: bool = True) -> GroupDiagnostics:
    """Per-column bias and variance plus the mean pairwise bias correlation.

    ``variance_of="prediction"`` computes the variance of the raw column
    instead of the bias vector.
    """
    group = tuple(int(j) for j in group)
    if not group:
        raise UndefinedStatisticError("group is empty")
    if variance_of not in ("bias", "prediction"):
        raise ValueError(f"variance_of must be 'bias' or 'prediction', got {variance_of!r}")
    bias = _bias_matrix(data, group)
    source = bias if variance_of == "bias" else data.X[:, list(group)]
    ddof = 1 if data.n > 1 else 0
    try:
        corr: Optional[float] = mean_pairwise_bias_correlation(data, group)
    except UndefinedStatisticError:
        if require_correlation:
            raise
        logger.warning("bias correlation undefined for group of size %d", len(group))
        corr = None
    return GroupDiagnostics(group, bias.mean(axis=0), source.var(axis=0, ddof=ddof), corr)


def best_individual_group(data: EnsembleData, size: int) -> tuple[int, ...]:
    """The ``size`` columns with the smallest mean squared error against ``y``."""
    if not (1 <= size <= data.K):
        raise ValueError(f"size must lie in 1..{data.K}, got {size}")
    mse = ((data.X - data.y[:, None]) ** 2).mean(axis=0)
    return tuple(int(j) for j in np.argsort(mse, kind="stable")[:size])


def diagnostics_frame(diagnostics: dict[str, GroupDiagnostics]) -> pd.DataFrame:
    """Long table with one row per (label, column) pair."""
    rows = []
    for label, diag in diagnostics.items():
        for j, b, v in zip(diag.group, diag.per_column_bias, diag.per_column_variance):
            rows.append({
                "group": label,
                "column": j + 1,
                "bias": b,
                "variance": v,
                "mean_pairwise_bias_correlation": diag.mean_pairwise_bias_correlation,
            })
    return pd.DataFrame(rows, columns=["group", "column", "bias", "variance",
                                       "mean_pairwise_bias_correlation"])
