"""Small numeric helpers shared by the harness modules."""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np


def l1_distance(a, b) -> float:
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    return float(np.abs(a - b).sum())


def rmse(forecast, actual) -> float:
    """Root-mean-squared error; ``nan`` for empty input."""
    f = np.asarray(forecast, dtype=float)
    a = np.asarray(actual, dtype=float)
    if f.shape != a.shape:
        raise ValueError(f"forecast shape {f.shape} != actual shape {a.shape}")
    if f.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean((f - a) ** 2)))


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed for a job identified by ``keys``.

    The same keys always give the same seed regardless of the order in which
    jobs are scheduled.
    """
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def format_params(params: Mapping[str, float]) -> str:
    """``rho1=6.32;rho2=0.025`` style label used in reports."""
    return ";".join(f"{k}={v:.6g}" for k, v in params.items())


def mean_and_se(values: Iterable[float]) -> tuple[float, float]:
    """Sample mean and its Monte Carlo standard error (0 for a single value)."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se
