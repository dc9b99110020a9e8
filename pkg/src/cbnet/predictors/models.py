"""Uniform fit/predict wrappers: column selection, preprocessing, estimator."""
from __future__ import annotations

import json
import os

import numpy as np

from cbnet.features import FeatureTable, Preprocessor
from cbnet.predictors.base import NotFittedError
from cbnet.predictors.graphnet import GraphNetRegressor, GraphSample
from cbnet.predictors.knn import KNNRegressor
from cbnet.predictors.mlp import MLP
from cbnet.predictors.trees import GradientBoosting, RandomForest

MODEL_MAGIC = "# cbnet-model v1"
ESTIMATORS = {cls.variant: cls for cls in (MLP, KNNRegressor, RandomForest, GradientBoosting)}


class TableModel:
    """Regressor over a :class:`FeatureTable` of a fixed granularity."""

    def __init__(self, name: str, granularity: str, estimator, columns=None,
                 preprocessing: str = "standard"):
        if preprocessing not in ("none", "standard", "yeo-johnson"):
            raise ValueError(f"unknown preprocessing {preprocessing!r}")
        self.name = name
        self.granularity = granularity
        self.estimator = estimator
        self.columns = list(columns) if columns is not None else None
        self.preprocessing = preprocessing
        self.pre = Preprocessor(yeo_johnson=preprocessing == "yeo-johnson")
        self.train_mean: float | None = None

    @property
    def variant(self) -> str:
        return self.estimator.variant

    def _matrix(self, t: FeatureTable) -> np.ndarray:
        if t.schema.granularity != self.granularity:
            raise ValueError(f"{self.name} expects {self.granularity} rows, got {t.schema.granularity}")
        cols = self.columns or list(t.schema.columns)
        return t.columns(cols)

    def fit(self, t: FeatureTable) -> "TableModel":
        if t.y is None:
            raise ValueError("training table has no labels")
        if self.columns is None:
            self.columns = list(t.schema.columns)
        X = self._matrix(t)
        if self.preprocessing != "none":
            X = self.pre.fit_transform(X)
        if isinstance(self.estimator, MLP):
            if self.estimator.columns is None:
                self.estimator.columns = list(self.columns)
            groups = [f"{d}/{b}" for d, b in zip(t.deployments, t.bss)]
            self.estimator.fit(X, t.y, groups if self.estimator.spec.loss == "masked_rmse" else None)
        else:
            self.estimator.fit(X, t.y)
        self.train_mean = float(np.mean(t.y))
        return self

    def predict(self, t: FeatureTable) -> np.ndarray:
        if self.train_mean is None:
            raise NotFittedError(f"{self.name} used before fit")
        X = self._matrix(t)
        if self.preprocessing != "none":
            X = self.pre.transform(X)
        return self.estimator.predict(X)

    def to_dict(self) -> dict:
        return {"kind": "table", "name": self.name, "granularity": self.granularity,
                "columns": self.columns, "preprocessing": self.preprocessing,
                "pre": self.pre.to_dict(), "train_mean": self.train_mean,
                "variant": self.variant, "estimator": self.estimator.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TableModel":
        est = ESTIMATORS[d["variant"]].from_dict(d["estimator"])
        m = cls(d["name"], d["granularity"], est, d["columns"], d["preprocessing"])
        m.pre = Preprocessor.from_dict(d["pre"])
        m.train_mean = d["train_mean"]
        return m


class GraphModel:
    """Graph-network regressor over deployment graphs; predicts every node."""

    granularity = "graph"

    def __init__(self, name: str, estimator: GraphNetRegressor):
        self.name = name
        self.estimator = estimator
        self.train_mean: float | None = None

    @property
    def variant(self) -> str:
        return self.estimator.variant

    def fit(self, graphs: list[GraphSample]) -> "GraphModel":
        self.estimator.fit(graphs)
        ys = np.concatenate([g.y[g.sta_mask] for g in graphs])
        self.train_mean = float(np.mean(ys))
        return self

    def predict(self, graphs: list[GraphSample]) -> list[np.ndarray]:
        if self.train_mean is None:
            raise NotFittedError(f"{self.name} used before fit")
        return [self.estimator.predict_graph(g) for g in graphs]

    def to_dict(self) -> dict:
        return {"kind": "graph", "name": self.name, "train_mean": self.train_mean,
                "variant": self.variant, "estimator": self.estimator.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphModel":
        m = cls(d["name"], GraphNetRegressor.from_dict(d["estimator"]))
        m.train_mean = d["train_mean"]
        return m


def dumps_model(model) -> str:
    body = json.dumps(model.to_dict(), sort_keys=True, allow_nan=True)
    return f"{MODEL_MAGIC} variant={model.variant} name={model.name}\n{body}\n"


def loads_model(text: str):
    head, _, body = text.partition("\n")
    if not head.startswith(MODEL_MAGIC):
        raise ValueError(f"expected header {MODEL_MAGIC!r}")
    d = json.loads(body)
    return GraphModel.from_dict(d) if d["kind"] == "graph" else TableModel.from_dict(d)


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_model(model))


def load_model(path):
    with open(path, encoding="utf-8") as f:
        try:
            return loads_model(f.read())
        except ValueError as exc:
            raise ValueError(f"{os.fspath(path)}: {exc}") from None
