"""Regression trees, random forests and squared-error gradient boosting."""
from __future__ import annotations

import math

import numpy as np

from cbnet import _backend
from cbnet.predictors.base import NotFittedError, as_2d

SPLIT_TIE_RTOL = 1e-9


def _leaf_value(y: np.ndarray) -> float:
    # exact for constant targets, where a mean could pick up rounding error
    return float(y[0]) if y.min() == y.max() else float(np.mean(y))


class RegressionTree:
    """Greedy CART tree minimising the weighted child MSE.

    ``max_features`` limits the columns drawn (without replacement) at each
    split; samples with ``x < threshold`` go left.
    """

    variant = "Tree"

    def __init__(self, max_depth: int | None = None, max_features: int | None = None,
                 min_samples_split: int = 2, rng: np.random.Generator | None = None):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    @property
    def fitted(self) -> bool:
        return bool(self.value)

    def _new_node(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def _candidates(self, p: int) -> np.ndarray:
        if self.max_features is None or self.max_features >= p:
            return np.arange(p)
        return np.sort(self.rng.permutation(p)[: self.max_features])

    def fit(self, X, y) -> "RegressionTree":
        X = as_2d(X)
        y = np.asarray(y, dtype=float)
        if len(y) < 1:
            raise ValueError("cannot fit a tree on zero rows")
        if self.max_features is not None and self.rng is None:
            self.rng = np.random.default_rng(0)
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        p = X.shape[1]
        stack = [(np.arange(len(y)), 0, self._new_node(_leaf_value(y)))]
        while stack:
            idx, depth, node = stack.pop()
            ys = y[idx]
            if (self.max_depth is not None and depth >= self.max_depth) \
                    or len(idx) < self.min_samples_split or ys.min() == ys.max():
                continue
            cand = self._candidates(p)
            Xn = X[idx]
            # centred targets make the score shift-invariant; tol absorbs rounding ties
            yc = ys - ys.mean()
            tol = SPLIT_TIE_RTOL * float(np.sum(yc * yc))
            col, thr, _ = _backend.best_split(Xn[:, cand], yc, tol)
            if col < 0 and len(cand) < p:
                cand = np.arange(p)
                col, thr, _ = _backend.best_split(Xn, yc, tol)
            if col < 0:
                continue
            f = int(cand[col])
            go_left = Xn[:, f] < thr
            li, ri = idx[go_left], idx[~go_left]
            self.feature[node] = f
            self.threshold[node] = float(thr)
            ln = self._new_node(_leaf_value(y[li]))
            rn = self._new_node(_leaf_value(y[ri]))
            self.left[node], self.right[node] = ln, rn
            # right pushed first so the left subtree is numbered first
            stack.append((ri, depth + 1, rn))
            stack.append((li, depth + 1, ln))
        self._arrays()
        return self

    def _arrays(self):
        self._f = np.array(self.feature, dtype=int)
        self._t = np.array(self.threshold, dtype=float)
        self._l = np.array(self.left, dtype=int)
        self._r = np.array(self.right, dtype=int)
        self._v = np.array(self.value, dtype=float)

    def predict(self, X) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("tree used before fit")
        X = as_2d(X)
        node = np.zeros(len(X), dtype=int)
        active = self._f[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            left = X[rows, self._f[nd]] < self._t[nd]
            node[rows] = np.where(left, self._l[nd], self._r[nd])
            active = self._f[node] >= 0
        return self._v[node]

    @property
    def depth(self) -> int:
        def rec(n):
            return 0 if self.feature[n] < 0 else 1 + max(rec(self.left[n]), rec(self.right[n]))
        return rec(0)

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth, "max_features": self.max_features,
                "min_samples_split": self.min_samples_split, "feature": self.feature,
                "threshold": self.threshold, "left": self.left, "right": self.right,
                "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        t = cls(d["max_depth"], d["max_features"], d["min_samples_split"])
        t.feature, t.threshold = list(d["feature"]), [float(v) for v in d["threshold"]]
        t.left, t.right = list(d["left"]), list(d["right"])
        t.value = [float(v) for v in d["value"]]
        t._arrays()
        return t


class RandomForest:
    """Bagged regression trees with sqrt(p) candidate features per split."""

    variant = "RandomForest"

    def __init__(self, n_trees: int = 100, max_depth: int | None = 10, seed: int = 0,
                 bootstrap: bool = True, max_features: int | str | None = "sqrt"):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed
        self.bootstrap = bootstrap
        self.max_features = max_features
        self.trees: list[RegressionTree] = []

    @property
    def fitted(self) -> bool:
        return bool(self.trees)

    def _n_features(self, p: int) -> int | None:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(p)))
        return self.max_features

    def fit(self, X, y) -> "RandomForest":
        X = as_2d(X)
        y = np.asarray(y, dtype=float)
        if len(y) < 2:
            raise ValueError("random forest needs at least two rows")
        m = self._n_features(X.shape[1])
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            rows = rng.integers(0, len(y), len(y)) if self.bootstrap else np.arange(len(y))
            tree = RegressionTree(self.max_depth, m, rng=rng)
            self.trees.append(tree.fit(X[rows], y[rows]))
        return self

    def predict(self, X) -> np.ndarray:
        if not self.trees:
            raise NotFittedError("forest used before fit")
        acc = np.zeros(len(as_2d(X)))
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "seed": self.seed,
                "bootstrap": self.bootstrap, "max_features": self.max_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        f = cls(d["n_trees"], d["max_depth"], d["seed"], d["bootstrap"], d["max_features"])
        f.trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return f


class GradientBoosting:
    """Least-squares boosting of depth-limited trees.

    Predictions are clipped to the training label range; the clip is applied
    at predict time only, so training loss is unaffected.
    """

    variant = "GBM"

    def __init__(self, n_rounds: int = 100, depth: int = 3, shrinkage: float = 0.1):
        if n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if not 0 < shrinkage <= 1:
            raise ValueError("shrinkage must lie in (0, 1]")
        self.n_rounds = n_rounds
        self.depth = depth
        self.shrinkage = shrinkage
        self.base = 0.0
        self.lo = -math.inf
        self.hi = math.inf
        self.trees: list[RegressionTree] = []
        self.train_mse: list[float] = []

    @property
    def fitted(self) -> bool:
        return bool(self.trees)

    def fit(self, X, y) -> "GradientBoosting":
        X = as_2d(X)
        y = np.asarray(y, dtype=float)
        self.base = _leaf_value(y)
        self.lo, self.hi = float(y.min()), float(y.max())
        F = np.full(len(y), self.base)
        self.trees = []
        self.train_mse = [float(np.mean((y - F) ** 2))]
        for _ in range(self.n_rounds):
            tree = RegressionTree(self.depth).fit(X, y - F)
            F = F + self.shrinkage * tree.predict(X)
            self.trees.append(tree)
            self.train_mse.append(float(np.mean((y - F) ** 2)))
        return self

    def raw_predict(self, X) -> np.ndarray:
        if not self.trees:
            raise NotFittedError("boosting model used before fit")
        F = np.full(len(as_2d(X)), self.base)
        for tree in self.trees:
            F = F + self.shrinkage * tree.predict(X)
        return F

    def predict(self, X) -> np.ndarray:
        return np.clip(self.raw_predict(X), self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"n_rounds": self.n_rounds, "depth": self.depth, "shrinkage": self.shrinkage,
                "base": self.base, "lo": self.lo, "hi": self.hi,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoosting":
        g = cls(d["n_rounds"], d["depth"], d["shrinkage"])
        g.base, g.lo, g.hi = float(d["base"]), float(d["lo"]), float(d["hi"])
        g.trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return g
