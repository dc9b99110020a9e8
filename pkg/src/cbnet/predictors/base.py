"""Shared errors and helpers for the regressors."""
from __future__ import annotations

import numpy as np


class NotFittedError(RuntimeError):
    pass


class TrainingError(RuntimeError):
    pass


def as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X
