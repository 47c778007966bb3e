"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from ._errors import StructuralError, UsageError
from .data import Dataset, ObservationRecord


def check_dataset(X, d: int = None, min_sources: int = 0) -> Dataset:
    """Coerce ``X`` to a :class:`Dataset` and check its layout.

    ``X`` may be a :class:`Dataset` or a sequence of
    :class:`ObservationRecord`.
    """
    if isinstance(X, Dataset):
        data = X
    elif isinstance(X, (list, tuple)) and all(isinstance(r, ObservationRecord) for r in X):
        data = Dataset.from_records(X)
    else:
        raise UsageError(
            f"expected a Dataset or a list of ObservationRecord, got {type(X).__name__}"
        )
    if d is not None and data.d != d:
        raise StructuralError(f"dataset has d={data.d}, expected d={d}")
    if data.M < min_sources:
        raise StructuralError(f"M={min_sources} required, dataset has M={data.M}")
    return data


def check_level(level) -> float:
    level = float(level)
    if not 0.0 < level < 1.0:
        raise UsageError(f"level must lie in (0, 1), got {level}")
    return level


def check_design(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise StructuralError(f"design must have {d} columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise UsageError("design contains non-finite values")
    return X
