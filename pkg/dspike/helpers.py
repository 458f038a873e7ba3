"""File helpers: panel ingestion, report emission and key=value config files.

Every table the package writes goes through :func:`write_frame` so that
floats are emitted with 17 significant digits and re-read exactly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd

from .core import DataFileError, DimensionError, EnsembleData

FLOAT_FORMAT = "%.17g"


def write_frame(frame: pd.DataFrame, path: Path | str) -> Path:
    """Write ``frame`` as CSV with a header row and round-trip float formatting."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def ingest_csv(path: Path | str, target_column: str) -> EnsembleData:
    """Load a panel whose ``target_column`` is the response and the rest are forecasts.

    Row order and the header order of the forecast columns are preserved.
    Empty and non-numeric cells are rejected with the (1-based) data row and
    the column name.
    """
    path = Path(path)
    if not path.exists():
        raise DataFileError(f"{path}: no such file")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise DataFileError(f"Error parsing {path}: {exc}")

    if target_column not in raw.columns:
        raise DataFileError(f"{path}: target column {target_column!r} not in header", column=target_column)
    if raw.shape[0] == 0:
        raise DataFileError(f"{path}: no data rows")

    numeric = {}
    for col in raw.columns:
        cells = raw[col].str.strip()
        empty = cells == ""
        if empty.any():
            row = int(np.flatnonzero(empty.to_numpy())[0]) + 1
            raise DataFileError(f"{path}: missing value at row {row}, column {col!r}",
                                row=row, column=col)
        values = pd.to_numeric(cells, errors="coerce")
        bad = values.isna().to_numpy()
        if bad.any():
            row = int(np.flatnonzero(bad)[0]) + 1
            raise DataFileError(f"{path}: non-numeric value {cells.iloc[row - 1]!r} at row {row}, "
                                f"column {col!r}", row=row, column=col)
        numeric[col] = values.to_numpy(dtype=float)

    forecasters = [c for c in raw.columns if c != target_column]
    X = np.column_stack([numeric[c] for c in forecasters]) if forecasters else np.empty((len(raw), 0))
    try:
        return EnsembleData(X, numeric[target_column], tuple(forecasters))
    except DimensionError as exc:
        raise DataFileError(f"{path}: {exc}")


def panel_frame(data: EnsembleData, target_column: str = "y") -> pd.DataFrame:
    frame = pd.DataFrame(data.X, columns=list(data.columns))
    frame.insert(0, target_column, data.y)
    return frame


def write_panel_csv(data: EnsembleData, path: Path | str, target_column: str = "y") -> Path:
    return write_frame(panel_frame(data, target_column), path)


def read_key_value_file(path: Path | str, allowed: Mapping[str, Any] | None = None) -> dict[str, str]:
    """Parse flat ``key=value`` text; ``#`` starts a comment.

    When ``allowed`` is given, unknown keys raise ``ValueError``.  Values are
    returned as strings; callers coerce them with the type of the matching
    default.
    """
    path = Path(path)
    result: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        key = key.replace("-", "_")
        if allowed is not None and key not in allowed:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        result[key] = value
    return result


def coerce_like(value: str, default: Any) -> Any:
    """Convert a config string to the type of ``default``."""
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, (list, tuple)):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value
