"""Simulation scenarios, the replication study comparing the four methods and
the credible ball coverage study.

A study is a list of :class:`StudyCell` (method plus hyperparameters)
evaluated on ``n_reps`` freshly generated data sets.  Every
(replication, cell) pair is an independent job with its own derived seed,
so results do not depend on how the jobs are scheduled.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import helpers
from .baselines import simple_average, two_step_lasso
from .core import (
    LAMBDA_LOG_RANGE,
    SCENARIO_ALPHA1,
    SCENARIO_ALPHA2,
    DimensionError,
    DoubleSpikePrior,
    EnsembleData,
    HyperGridSpec,
    StructuredTruth,
    WeightVector,
    lambda_grid,
    validate_simplex,
)
from .sampler import (
    BalanceMode,
    InitMode,
    SamplerConfig,
    Trace,
    UnknownSigma,
    run_chain,
    run_symmetric_dirichlet_chain,
)
from .summaries import credible_ball
from .utils import derive_seed, format_params, l1_distance, mean_and_se

logger = logging.getLogger(__name__)

# leading weights of the perturbed truth; the remaining mass is spread evenly
SCENARIO2_LEADING = (0.3089, 0.3672, 0.2739)
SCENARIO2_TAIL_MASS = 0.05


class Method(str, enum.Enum):
    DOUBLE_SPIKE = "ds"
    SYMMETRIC_DIRICHLET = "symdir"
    TWO_STEP_LASSO = "lasso2"
    SIMPLE_AVERAGE = "avg"


ALL_METHODS = tuple(m.value for m in Method)


@dataclass(frozen=True)
class ScenarioSpec:
    """Scenario 1 has an exactly structured truth; scenario 2 perturbs it."""

    id: int = 1
    n: int = 80
    K: int = 40
    s: int = 3
    noise_sd: float = 1.5
    design_sd: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.id not in (1, 2):
            raise ValueError(f"scenario id must be 1 or 2, got {self.id}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not (2 <= self.s < self.K):
            raise ValueError(f"need 2 <= s < K, got s={self.s}, K={self.K}")
        if self.id == 2 and self.s != len(SCENARIO2_LEADING):
            raise ValueError(f"scenario 2 is defined for s={len(SCENARIO2_LEADING)}")
        if self.noise_sd <= 0 or self.design_sd <= 0:
            raise ValueError("noise_sd and design_sd must be positive")


def scenario_truth(spec: ScenarioSpec) -> WeightVector:
    if spec.id == 1:
        return StructuredTruth(frozenset(range(spec.s)), spec.K).weights()
    values = np.full(spec.K, SCENARIO2_TAIL_MASS / (spec.K - spec.s))
    values[: spec.s] = SCENARIO2_LEADING
    return validate_simplex(values)


def generate_scenario(spec: ScenarioSpec,
                      rng: Optional[np.random.Generator] = None) -> tuple[EnsembleData, WeightVector]:
    """Draw ``X`` with iid ``N(0, design_sd**2)`` entries and ``y = X beta* + noise``."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    truth = scenario_truth(spec)
    X = rng.normal(0.0, spec.design_sd, size=(spec.n, spec.K))
    y = X @ truth.values + rng.normal(0.0, spec.noise_sd, size=spec.n)
    return EnsembleData(X, y), truth


def generate_ensemble_panel(n: int, n_good: int = 15, n_bad: int = 185, good_sd: float = 0.2,
                            bad_sd: float = 1.0, rng: Optional[np.random.Generator] = None,
                            shared_fraction: float = 0.8) -> EnsembleData:
    """Columns that are noisy copies of ``y``, standing in for tree predictions.

    The first ``n_good`` columns carry independent errors with SD
    ``good_sd``.  The other ``n_bad`` columns have error SD ``bad_sd``, of
    which ``shared_fraction`` of the variance comes from a component common
    to all of them, so averaging them does not wash the error out.
    """
    if n < 1 or n_good < 0 or n_bad < 0 or n_good + n_bad < 2:
        raise ValueError("need n >= 1 and at least two columns")
    if not (0 <= shared_fraction <= 1):
        raise ValueError("shared_fraction must lie in [0, 1]")
    rng = np.random.default_rng() if rng is None else rng
    y = rng.normal(size=n)
    good = y[:, None] + rng.normal(0.0, good_sd, size=(n, n_good))
    common = rng.normal(size=n)
    own = rng.normal(size=(n, n_bad))
    bad = y[:, None] + bad_sd * (math.sqrt(shared_fraction) * common[:, None]
                                 + math.sqrt(1.0 - shared_fraction) * own)
    columns = tuple(f"good_{j + 1}" for j in range(n_good)) + \
        tuple(f"bad_{j + 1}" for j in range(n_bad))
    return EnsembleData(np.hstack([good, bad]), y, columns)


def l1_error(estimate, truth) -> float:
    est = estimate.values if isinstance(estimate, WeightVector) else np.asarray(estimate, dtype=float)
    tru = truth.values if isinstance(truth, WeightVector) else np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise DimensionError(f"estimate has length {est.shape[-1]} but truth has {tru.shape[-1]}")
    return l1_distance(est, tru)


def trace_l1_error(trace: Trace, truth: WeightVector, burn_in: int) -> float:
    """l1 error of every post burn-in draw, averaged over the draws."""
    window = trace.beta_samples[burn_in:]
    if window.shape[0] == 0:
        raise ValueError(f"burn_in={burn_in} leaves no draws")
    if window.shape[1] != truth.K:
        raise DimensionError(f"trace has K={window.shape[1]} but truth has K={truth.K}")
    return float(np.abs(window - truth.values).sum(axis=1).mean())


# ---------------------------------------------------------------------------
# grids and cells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyGrid:
    """Hyperparameter grids for a study; ``theta=None`` means ``1/K``.

    The lasso keeps positive coefficients only and the double spike chains
    start from the full inclusion vector unless told otherwise.
    """

    hyper: HyperGridSpec = field(default_factory=HyperGridSpec.scenario_default)
    lambdas: tuple[float, ...] = field(default_factory=lambda_grid)
    theta: Optional[float] = None
    a1: float = 0.01
    a2: float = 0.01
    lasso_positive_only: bool = True
    init_mode: InitMode = InitMode.FULL


GRID_FILE_DEFAULTS: dict[str, Any] = {
    "alpha1_min": SCENARIO_ALPHA1[0],
    "alpha1_max": SCENARIO_ALPHA1[1],
    "alpha1_points": SCENARIO_ALPHA1[2],
    "alpha2_min": SCENARIO_ALPHA2[0],
    "alpha2_max": SCENARIO_ALPHA2[1],
    "alpha2_points": SCENARIO_ALPHA2[2],
    "log_lambda_min": LAMBDA_LOG_RANGE[0],
    "log_lambda_max": LAMBDA_LOG_RANGE[1],
    "lambda_points": LAMBDA_LOG_RANGE[2],
    "theta": 0.0,
    "a1": 0.01,
    "a2": 0.01,
    "lasso_positive_only": True,
    "init": InitMode.FULL.value,
}


def grid_from_mapping(values: Mapping[str, str]) -> StudyGrid:
    """Build a :class:`StudyGrid` from grid-file keys; missing keys keep their defaults.

    ``theta = 0`` (the default) stands for ``1/K``.
    """
    unknown = set(values) - set(GRID_FILE_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown grid keys: {', '.join(sorted(unknown))}")
    cfg = {k: helpers.coerce_like(values[k], d) if k in values else d
           for k, d in GRID_FILE_DEFAULTS.items()}
    hyper = HyperGridSpec(
        tuple(np.linspace(cfg["alpha1_min"], cfg["alpha1_max"], cfg["alpha1_points"])),
        tuple(np.linspace(cfg["alpha2_min"], cfg["alpha2_max"], cfg["alpha2_points"])),
    )
    lambdas = lambda_grid(cfg["log_lambda_min"], cfg["log_lambda_max"], cfg["lambda_points"])
    theta = cfg["theta"] or None
    return StudyGrid(hyper, lambdas, theta, cfg["a1"], cfg["a2"], cfg["lasso_positive_only"],
                     InitMode(cfg["init"]))


def load_grid_file(path: Path | str) -> StudyGrid:
    return grid_from_mapping(helpers.read_key_value_file(path, GRID_FILE_DEFAULTS))


@dataclass(frozen=True)
class StudyCell:
    method: Method
    params: tuple[tuple[str, float], ...] = ()

    @property
    def label(self) -> str:
        return format_params(dict(self.params))

    def __getitem__(self, key: str) -> float:
        return dict(self.params)[key]


def build_cells(methods: Iterable[str], K: int, grid: Optional[StudyGrid] = None) -> list[StudyCell]:
    """Expand each method over its grid.

    Double spike cells take every ``(rho1, rho2)`` pair; the symmetric
    Dirichlet concentration runs over the ``rho2`` values; the lasso runs
    over the penalty grid.
    """
    grid = StudyGrid() if grid is None else grid
    theta = grid.theta if grid.theta is not None else 1.0 / K
    cells: list[StudyCell] = []
    for name in methods:
        method = Method(name)
        if method is Method.DOUBLE_SPIKE:
            for prior in grid.hyper.priors(K, theta, grid.a1, grid.a2):
                cells.append(StudyCell(method, (("rho1", prior.rho1), ("rho2", prior.rho2),
                                                ("theta", prior.theta))))
        elif method is Method.SYMMETRIC_DIRICHLET:
            for a2_ in grid.hyper.alpha2_grid:
                cells.append(StudyCell(method, (("rho", float(K) ** -a2_),)))
        elif method is Method.TWO_STEP_LASSO:
            cells.extend(StudyCell(method, (("lambda", lam),)) for lam in grid.lambdas)
        else:
            cells.append(StudyCell(method))
    return cells


def evaluate_cell(cell: StudyCell, data: EnsembleData, truth: WeightVector, niter: int,
                  burn_in: int, seed: int, a1: float = 0.01, a2: float = 0.01,
                  positive_only: bool = True, init_mode: InitMode = InitMode.FULL) -> float:
    """l1 error of one method on one data set.

    Sampling methods report the per-draw error averaged over post burn-in
    draws; point estimators report the error of the estimate.
    ``positive_only`` is passed to :func:`two_step_lasso` and ``init_mode``
    to the double spike chain.
    """
    if cell.method is Method.DOUBLE_SPIKE:
        prior = DoubleSpikePrior(cell["rho1"], cell["rho2"], cell["theta"], a1, a2)
        trace = run_chain(SamplerConfig(prior, niter, burn_in, seed=seed, init_mode=init_mode), data)
        return trace_l1_error(trace, truth, burn_in)
    if cell.method is Method.SYMMETRIC_DIRICHLET:
        trace = run_symmetric_dirichlet_chain(cell["rho"], niter, burn_in, UnknownSigma(a1, a2),
                                              seed, data)
        return trace_l1_error(trace, truth, burn_in)
    if cell.method is Method.TWO_STEP_LASSO:
        return l1_error(two_step_lasso(data, cell["lambda"], positive_only=positive_only), truth)
    return l1_error(simple_average(data.K), truth)


def _run_job(scenario: ScenarioSpec, rep: int, index: int, cell: StudyCell, niter: int,
             burn_in: int, base_seed: int, a1: float, a2: float, positive_only: bool,
             init_mode: InitMode) -> dict[str, Any]:
    data, truth = generate_scenario(scenario, np.random.default_rng(derive_seed(base_seed, rep)))
    record: dict[str, Any] = {
        "rep": rep + 1,
        "cell": index + 1,
        "method": cell.method.value,
        "params": cell.label,
        "error": float("nan"),
        "message": "",
    }
    try:
        record["error"] = evaluate_cell(cell, data, truth, niter, burn_in,
                                        derive_seed(base_seed, rep, index), a1, a2,
                                        positive_only, init_mode)
    except Exception as exc:  # a failed cell is recorded, never fatal
        logger.warning("replication %d, %s [%s] failed: %s", rep + 1, cell.method.value,
                       cell.label, exc)
        record["message"] = f"{type(exc).__name__}: {exc}"
    return record


RECORD_COLUMNS = ["rep", "cell", "method", "params", "error", "message"]
REPORT_COLUMNS = ["cell", "method", "params", "mean_error", "n_reps", "mc_se", "n_failed"]


@dataclass(eq=False)
class StudyReport:
    """Per-cell averages (``rows``) and the per-replication ``records`` they came from."""

    rows: pd.DataFrame
    records: pd.DataFrame

    @classmethod
    def from_records(cls, records: pd.DataFrame | Sequence[Mapping[str, Any]]) -> "StudyReport":
        frame = pd.DataFrame(list(records) if not isinstance(records, pd.DataFrame) else records,
                             columns=RECORD_COLUMNS)
        # empty strings come back from CSV as NaN
        frame["message"] = frame["message"].fillna("")
        frame["params"] = frame["params"].fillna("")
        rows = []
        for (cell, method, params), group in frame.groupby(["cell", "method", "params"], sort=True):
            errors = group["error"].to_numpy(dtype=float)
            ok = errors[~np.isnan(errors)]
            mean, se = mean_and_se(ok)
            rows.append({
                "cell": int(cell),
                "method": method,
                "params": params,
                "mean_error": mean,
                "n_reps": int(ok.size),
                "mc_se": se,
                "n_failed": int(errors.size - ok.size),
            })
        return cls(pd.DataFrame(rows, columns=REPORT_COLUMNS), frame)

    def to_frame(self) -> pd.DataFrame:
        return self.rows.copy()

    def best(self, method: str) -> dict[str, Any]:
        """Row of ``method`` with the smallest mean error."""
        subset = self.rows[(self.rows["method"] == Method(method).value)
                           & self.rows["mean_error"].notna()]
        if subset.empty:
            raise KeyError(f"no successful cells for method {method!r}")
        return subset.loc[subset["mean_error"].idxmin()].to_dict()

    def write(self, path: Path | str) -> tuple[Path, Path]:
        """Write the report to ``path`` and the records next to it as ``<stem>.records.csv``."""
        path = Path(path)
        records_path = path.with_name(f"{path.stem}.records.csv")
        helpers.write_frame(self.rows, path)
        helpers.write_frame(self.records, records_path)
        return path, records_path


def run_replication_study(scenario: ScenarioSpec, cells: Sequence[StudyCell], n_reps: int,
                          niter: int, burn_in: int, base_seed: int, a1: float = 0.01,
                          a2: float = 0.01, n_jobs: int = 1, positive_only: bool = True,
                          init_mode: InitMode = InitMode.FULL) -> StudyReport:
    """Evaluate every cell on ``n_reps`` data sets and average the l1 errors.

    The data of replication ``r`` come from ``derive_seed(base_seed, r)`` and
    each cell's chain from ``derive_seed(base_seed, r, cell)``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    if not cells:
        raise ValueError("no study cells given")
    if not (0 <= burn_in < niter):
        raise ValueError(f"need 0 <= burn_in < niter, got burn_in={burn_in}, niter={niter}")
    logger.info("replication study: scenario %d, %d cells x %d replications (n_jobs=%d)",
                scenario.id, len(cells), n_reps, n_jobs)
    records = Parallel(n_jobs=n_jobs)(
        delayed(_run_job)(scenario, rep, index, cell, niter, burn_in, base_seed, a1, a2,
                          positive_only, init_mode)
        for rep in range(n_reps)
        for index, cell in enumerate(cells)
    )
    return StudyReport.from_records(records)


# ---------------------------------------------------------------------------
# credible ball coverage
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class CoverageResult:
    """Credible radius and centre-to-truth distance of every replication."""

    level: float
    radii: np.ndarray
    distances: np.ndarray

    @property
    def covered(self) -> np.ndarray:
        return self.distances <= self.radii

    @property
    def hits(self) -> int:
        return int(self.covered.sum())

    @property
    def n_reps(self) -> int:
        return int(self.radii.size)

    @property
    def rate(self) -> float:
        return self.hits / self.n_reps

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "rep": np.arange(1, self.n_reps + 1),
            "radius": self.radii,
            "distance": self.distances,
            "covered": self.covered.astype(int),
        })


def _coverage_job(scenario: ScenarioSpec, prior: DoubleSpikePrior, rep: int, niter: int,
                  burn_in: int, base_seed: int, level: float, init_mode: InitMode,
                  balance_mode: BalanceMode) -> tuple[float, float]:
    data, truth = generate_scenario(scenario, np.random.default_rng(derive_seed(base_seed, rep)))
    config = SamplerConfig(prior, niter, burn_in, balance_mode, seed=derive_seed(base_seed, rep, 0),
                           init_mode=init_mode)
    center, radius = credible_ball(run_chain(config, data), burn_in, level)
    return radius, l1_error(center, truth)


def credible_ball_coverage(scenario: ScenarioSpec, prior: DoubleSpikePrior, n_reps: int,
                           niter: int, burn_in: int, base_seed: int, level: float = 0.95,
                           n_jobs: int = 1, init_mode: InitMode = InitMode.FULL,
                           balance_mode: BalanceMode = BalanceMode.PAPER_EXACT) -> CoverageResult:
    """Count the replications whose ``level`` credible ball contains the true weights.

    Replication ``r`` uses the same data seed as :func:`run_replication_study`.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    if not (0 < level < 1):
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if not (0 <= burn_in < niter):
        raise ValueError(f"need 0 <= burn_in < niter, got burn_in={burn_in}, niter={niter}")
    pairs = Parallel(n_jobs=n_jobs)(
        delayed(_coverage_job)(scenario, prior, rep, niter, burn_in, base_seed, level,
                               init_mode, balance_mode)
        for rep in range(n_reps)
    )
    result = CoverageResult(level, np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))
    logger.info("coverage at level %g: %d of %d replications", level, result.hits, result.n_reps)
    return result
