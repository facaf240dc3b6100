"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .errors import ContractError


def check_features(x, name: str = "X") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ContractError(f"{name} must be a non-empty 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractError(f"{name} contains non-finite values")
    return x


def check_partial_labels(y, n_samples: int, n_classes: int) -> np.ndarray:
    """Integer labels in [0, n_classes), with -1 marking unlabeled samples."""
    y = np.asarray(y)
    if y.shape != (n_samples,):
        raise ContractError(f"y must have shape ({n_samples},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == y.astype(np.int64)):
            raise ContractError("y must contain integers (-1 for unlabeled)")
    y = y.astype(np.int64)
    if y.min() < -1 or y.max() >= n_classes:
        raise ContractError(f"labels must lie in [-1, {n_classes}), got range "
                            f"[{y.min()}, {y.max()}]")
    return y


def check_session_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_samples,):
        raise ContractError(f"y must have shape ({n_samples},), got {y.shape}")
    y = y.astype(np.int64)
    if y.min() < 0:
        raise ContractError("session labels must be non-negative class ids")
    return y
