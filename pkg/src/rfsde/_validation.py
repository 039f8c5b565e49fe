"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import PreconditionError


def check_paths(X, *, min_points: int = 2) -> np.ndarray:
    """Return ``X`` as a finite float array of shape ``(n_paths, n_points)``.

    A single 1-D path is promoted to one row.
    """
    X = check_array(X, ensure_2d=False, dtype=np.float64, ensure_all_finite=True)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2:
        raise ValueError(f"expected paths of shape (n_paths, n_points), got {X.shape}")
    if X.shape[1] < min_points:
        raise ValueError(f"paths need at least {min_points} grid points, got {X.shape[1]}")
    return X


def check_positive(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_eval_times(eval_times, T: float) -> np.ndarray:
    t = np.atleast_1d(np.asarray(eval_times, dtype=float))
    if t.ndim != 1 or t.size == 0:
        raise ValueError("eval_times must be a non-empty 1-D array")
    if not np.all(np.isfinite(t)) or t.min() < 0.0 or t.max() > T * (1 + 1e-12):
        raise PreconditionError(f"eval_times must lie in [0, {T}]")
    return np.minimum(t, T)


def check_hurst(H: float) -> float:
    if not 0.5 < H < 1.0:
        raise PreconditionError(f"Hurst index must satisfy 1/2 < H < 1, got {H}")
    return float(H)
