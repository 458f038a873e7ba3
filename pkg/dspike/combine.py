"""Forecast combination on real panels.

Two workflows live here.  :func:`rolling_forecast_eval` walks a
time-ordered panel forward, refitting at every period and picking the
hyperparameter whose earlier out-of-sample forecasts had the smallest RMSE.
:func:`reweight_ensemble` fits once on a training panel, scores the
posterior-mean combination on a holdout panel and describes the group of
columns the sampler selected; :func:`reweight_splits` repeats it over
random train/holdout splits of one panel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import helpers
from .baselines import simple_average, two_step_lasso
from .core import DimensionError, DoubleSpikePrior, EnsembleData, HyperGridSpec, WeightVector, lambda_grid
from .sampler import SamplerConfig, Trace, UnknownSigma, run_chain, run_symmetric_dirichlet_chain
from .simulate import Method, StudyCell, StudyGrid, build_cells
from .summaries import (
    DEFAULT_SELECTION_THRESHOLD,
    GroupDiagnostics,
    best_individual_group,
    diagnostics_frame,
    group_diagnostics,
    inclusion_frequencies,
    posterior_mean,
    selected_group,
    selection_counts,
)
from .utils import derive_seed, rmse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RollingEvalSpec:
    """Settings for :func:`rolling_forecast_eval`.  Periods are 1-based."""

    start_period: int = 2
    method: str = Method.DOUBLE_SPIKE.value
    grid: HyperGridSpec = field(default_factory=HyperGridSpec.rolling_default)
    lambdas: tuple[float, ...] = field(default_factory=lambda_grid)
    theta: float = 0.05
    niter: int = 2000
    burn_in: int = 1000
    seed: int = 0
    exclude_periods: tuple[int, ...] = ()
    a1: float = 0.01
    a2: float = 0.01
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.start_period < 2:
            raise ValueError(f"start_period must be at least 2, got {self.start_period}")
        object.__setattr__(self, "method", Method(self.method).value)
        object.__setattr__(self, "exclude_periods", tuple(sorted({int(p) for p in self.exclude_periods})))
        if not (0 < self.theta < 1):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not (0 <= self.burn_in < self.niter):
            raise ValueError(f"need 0 <= burn_in < niter, got burn_in={self.burn_in}, niter={self.niter}")

    def cells(self, K: int) -> list[StudyCell]:
        return build_cells([self.method], K, StudyGrid(self.grid, self.lambdas, self.theta,
                                                       self.a1, self.a2))

    def midpoint(self) -> int:
        """Index of the grid cell used before any forecast history exists."""
        method = Method(self.method)
        if method is Method.DOUBLE_SPIKE:
            n2 = len(self.grid.alpha2_grid)
            return (len(self.grid.alpha1_grid) // 2) * n2 + n2 // 2
        if method is Method.SYMMETRIC_DIRICHLET:
            return len(self.grid.alpha2_grid) // 2
        if method is Method.TWO_STEP_LASSO:
            return len(self.lambdas) // 2
        return 0


def fit_weights(cell: StudyCell, train: EnsembleData, niter: int, burn_in: int, seed: int,
                a1: float = 0.01, a2: float = 0.01) -> WeightVector:
    """Combination weights of one method fitted on ``train``."""
    if cell.method is Method.DOUBLE_SPIKE:
        prior = DoubleSpikePrior(cell["rho1"], cell["rho2"], cell["theta"], a1, a2)
        return posterior_mean(run_chain(SamplerConfig(prior, niter, burn_in, seed=seed), train), burn_in)
    if cell.method is Method.SYMMETRIC_DIRICHLET:
        trace = run_symmetric_dirichlet_chain(cell["rho"], niter, burn_in, UnknownSigma(a1, a2),
                                              seed, train)
        return posterior_mean(trace, burn_in)
    if cell.method is Method.TWO_STEP_LASSO:
        return two_step_lasso(train, cell["lambda"])
    return simple_average(train.K)


def _forecast_job(data: EnsembleData, period: int, index: int, cell: StudyCell,
                  spec: RollingEvalSpec) -> float:
    # only rows before ``period`` are used for fitting
    train = data.rows(slice(0, period - 1))
    weights = fit_weights(cell, train, spec.niter, spec.burn_in,
                          derive_seed(spec.seed, period, index), spec.a1, spec.a2)
    return float(data.X[period - 1] @ weights.values)


@dataclass(eq=False)
class RollingResult:
    frame: pd.DataFrame
    rmse: float
    rmse_excluding: float

    def write_csv(self, path: Path | str) -> Path:
        return helpers.write_frame(self.frame, path)


def select_by_history(forecasts: np.ndarray, actual: np.ndarray, midpoint: int) -> np.ndarray:
    """Chosen column of ``forecasts`` for every row.

    Row 0 uses ``midpoint``; row ``p`` uses the column with the smallest RMSE
    over rows ``0..p-1`` (first column on ties).
    """
    n_periods = forecasts.shape[0]
    chosen = np.empty(n_periods, dtype=int)
    if n_periods == 0:
        return chosen
    chosen[0] = midpoint
    sq = (forecasts - actual[:, None]) ** 2
    cum = np.cumsum(sq, axis=0)
    for p in range(1, n_periods):
        chosen[p] = int(np.argmin(cum[p - 1]))
    return chosen


def rolling_forecast_eval(data: EnsembleData, spec: RollingEvalSpec) -> RollingResult:
    """Pseudo out-of-sample forecasts for periods ``start_period..n``.

    Every grid cell is refitted at every period on the rows before it; the
    emitted forecast comes from the cell chosen by :func:`select_by_history`
    on the cached forecasts of earlier periods.
    """
    if data.n < spec.start_period:
        raise DimensionError(f"panel has {data.n} periods; start period {spec.start_period} "
                             f"needs at least that many")
    bad = [p for p in spec.exclude_periods if not (spec.start_period <= p <= data.n)]
    if bad:
        raise ValueError(f"excluded periods outside {spec.start_period}..{data.n}: {bad}")
    cells = spec.cells(data.K)
    periods = list(range(spec.start_period, data.n + 1))
    logger.info("rolling evaluation: method=%s, %d cells x %d periods", spec.method,
                len(cells), len(periods))

    flat = Parallel(n_jobs=spec.n_jobs)(
        delayed(_forecast_job)(data, t, index, cell, spec)
        for t in periods
        for index, cell in enumerate(cells)
    )
    forecasts = np.asarray(flat, dtype=float).reshape(len(periods), len(cells))
    actual = data.y[spec.start_period - 1:]
    chosen = select_by_history(forecasts, actual, spec.midpoint())
    emitted = forecasts[np.arange(len(periods)), chosen]

    excluded = np.isin(periods, spec.exclude_periods)
    frame = pd.DataFrame({
        "period": periods,
        "actual": actual,
        "forecast": emitted,
        "selected": [cells[c].label for c in chosen],
        "excluded": excluded.astype(int),
    })
    total = rmse(emitted, actual)
    kept = rmse(emitted[~excluded], actual[~excluded])
    logger.info("rolling evaluation: rmse=%.4f (excluding %d periods: %.4f)",
                total, int(excluded.sum()), kept)
    return RollingResult(frame, total, kept)


# ---------------------------------------------------------------------------
# ensemble reweighting
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ReweightResult:
    weights: WeightVector
    holdout_rmse: float
    equal_weight_rmse: float
    best_group_rmse: float
    inclusion_freq: np.ndarray
    selected: tuple[int, ...]
    counts: dict[str, int]
    diagnostics: dict[str, GroupDiagnostics]
    active_set_range: tuple[int, int]
    trace: Trace

    def weights_frame(self, columns: Sequence[str] = ()) -> pd.DataFrame:
        K = self.weights.K
        return pd.DataFrame({
            "index": np.arange(1, K + 1),
            "column": list(columns) if columns else [f"x{j + 1}" for j in range(K)],
            "weight": self.weights.values,
            "incl_freq": self.inclusion_freq,
            "selected": np.isin(np.arange(K), self.selected).astype(int),
        })

    def diagnostics_frame(self) -> pd.DataFrame:
        return diagnostics_frame(self.diagnostics)


def _diagnose(data: EnsembleData, group: tuple[int, ...], label: str,
              out: dict[str, GroupDiagnostics]) -> None:
    if not group:
        logger.warning("%s: empty group, diagnostics skipped", label)
        return
    out[label] = group_diagnostics(data, group, require_correlation=False)


def reweight_ensemble(train: EnsembleData, holdout: EnsembleData, config: SamplerConfig,
                      threshold: float = DEFAULT_SELECTION_THRESHOLD) -> ReweightResult:
    """Fit the double spike posterior on ``train`` and score it on ``holdout``.

    The selected group holds the columns whose inclusion frequency exceeds
    ``threshold``; it is compared with the same number of columns that have
    the smallest training error on their own.  ``best_group_rmse`` is the
    holdout RMSE of the simple average of those columns (NaN when nothing
    is selected).
    """
    if train.K != holdout.K:
        raise DimensionError(f"train has K={train.K} but holdout has K={holdout.K}")
    trace = run_chain(config, train)
    weights = posterior_mean(trace, config.burn_in)
    freq = inclusion_frequencies(trace, config.burn_in)
    selected = selected_group(freq, threshold)
    holdout_rmse = rmse(holdout.predict(weights), holdout.y)
    equal_rmse = rmse(holdout.predict(simple_average(holdout.K)), holdout.y)

    best_rmse = float("nan")
    diagnostics: dict[str, GroupDiagnostics] = {}
    _diagnose(train, selected, "selected_train", diagnostics)
    _diagnose(holdout, selected, "selected_holdout", diagnostics)
    if selected:
        best = best_individual_group(train, len(selected))
        best_rmse = rmse(holdout.X[:, list(best)].mean(axis=1), holdout.y)
        _diagnose(train, best, "best_train", diagnostics)
        _diagnose(holdout, best, "best_holdout", diagnostics)

    sizes = trace.active_set_sizes(config.burn_in)
    result = ReweightResult(
        weights=weights,
        holdout_rmse=holdout_rmse,
        equal_weight_rmse=equal_rmse,
        best_group_rmse=best_rmse,
        inclusion_freq=freq,
        selected=selected,
        counts=selection_counts(freq, (threshold, 0.05)),
        diagnostics=diagnostics,
        active_set_range=(int(sizes.min()), int(sizes.max())),
        trace=trace,
    )
    logger.info("reweight: holdout rmse %.4f vs equal weights %.4f; %d columns selected",
                holdout_rmse, equal_rmse, len(selected))
    return result


# ---------------------------------------------------------------------------
# replicated train/test splits
# ---------------------------------------------------------------------------

SPLIT_COLUMNS = ["rep", "n_train", "holdout_rmse", "equal_weight_rmse", "difference",
                 "best_group_rmse", "n_selected"]


@dataclass(eq=False)
class SplitStudy:
    """One row per random split; ``difference`` is equal-weight minus reweighted RMSE."""

    frame: pd.DataFrame

    @property
    def n_reps(self) -> int:
        return len(self.frame)

    @property
    def wins(self) -> int:
        return int((self.frame["difference"] > 0).sum())

    @property
    def mean_difference(self) -> float:
        return float(self.frame["difference"].mean())

    def mean(self, column: str) -> float:
        """Average of ``column``, skipping splits where it is undefined."""
        return float(self.frame[column].mean(skipna=True))

    def write_csv(self, path: Path | str) -> Path:
        return helpers.write_frame(self.frame, path)


def _split_job(data: EnsembleData, rep: int, n_train: int, config: SamplerConfig,
               base_seed: int, threshold: float) -> dict:
    order = np.random.default_rng(derive_seed(base_seed, rep)).permutation(data.n)
    train = data.rows(np.sort(order[:n_train]))
    holdout = data.rows(np.sort(order[n_train:]))
    result = reweight_ensemble(train, holdout, replace(config, seed=derive_seed(base_seed, rep, 0)),
                               threshold)
    return {
        "rep": rep + 1,
        "n_train": n_train,
        "holdout_rmse": result.holdout_rmse,
        "equal_weight_rmse": result.equal_weight_rmse,
        "difference": result.equal_weight_rmse - result.holdout_rmse,
        "best_group_rmse": result.best_group_rmse,
        "n_selected": len(result.selected),
    }


def reweight_splits(data: EnsembleData, config: SamplerConfig, n_reps: int,
                    train_fraction: float = 0.5, base_seed: int = 0,
                    threshold: float = DEFAULT_SELECTION_THRESHOLD, n_jobs: int = 1) -> SplitStudy:
    """Repeat :func:`reweight_ensemble` over ``n_reps`` random train/holdout splits of ``data``.

    Split ``r`` permutes the rows with ``derive_seed(base_seed, r)`` and runs
    its chain with ``derive_seed(base_seed, r, 0)``; ``config.seed`` is not used.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    if not (0 < train_fraction < 1):
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(round(train_fraction * data.n))
    if not (1 <= n_train < data.n):
        raise DimensionError(f"{data.n} rows cannot be split with train_fraction={train_fraction}")
    logger.info("reweight splits: %d replications, %d of %d rows for training (n_jobs=%d)",
                n_reps, n_train, data.n, n_jobs)
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_split_job)(data, rep, n_train, config, base_seed, threshold)
        for rep in range(n_reps)
    )
    study = SplitStudy(pd.DataFrame(rows, columns=SPLIT_COLUMNS))
    logger.info("reweight splits: reweighting wins %d of %d, mean difference %.4f",
                study.wins, study.n_reps, study.mean_difference)
    return study
