"""k-nearest-neighbour regression in standardized feature space."""
from __future__ import annotations

import numpy as np

from cbnet import _backend
from cbnet.features import Preprocessor
from cbnet.predictors.base import NotFittedError, as_2d


class KNNRegressor:
    variant = "KNN"

    def __init__(self, k: int = 10):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.scaler = Preprocessor()
        self.train: np.ndarray | None = None
        self.labels: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.train is not None

    def fit(self, X, y) -> "KNNRegressor":
        X = as_2d(X)
        y = np.asarray(y, dtype=float)
        if self.k > len(y):
            raise ValueError(f"k={self.k} exceeds the {len(y)} training rows")
        self.train = self.scaler.fit_transform(X)
        self.labels = y.copy()
        return self

    def predict(self, X) -> np.ndarray:
        if not self.scaler.fitted or self.train is None:
            raise NotFittedError("KNN used before its scaler was fitted")
        Q = self.scaler.transform(as_2d(X))
        return _backend.knn_mean(self.train, self.labels, Q, self.k)

    def to_dict(self) -> dict:
        if self.train is None:
            raise NotFittedError("cannot serialize an unfitted KNN")
        return {"k": self.k, "scaler": self.scaler.to_dict(), "train": self.train.tolist(),
                "labels": self.labels.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KNNRegressor":
        m = cls(d["k"])
        m.scaler = Preprocessor.from_dict(d["scaler"])
        m.train = np.array(d["train"], dtype=float).reshape(len(d["labels"]), -1)
        m.labels = np.array(d["labels"], dtype=float)
        return m
