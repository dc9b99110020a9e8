"""Feed-forward regressors trained by mini-batch gradient descent."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from cbnet.predictors import nn
from cbnet.predictors.base import NotFittedError, TrainingError, as_2d

ACTIVATIONS = ("relu", "prelu", "linear")
LOSSES = {"mse": nn.mse, "rmse": nn.rmse, "masked_rmse": None}


@dataclass(frozen=True)
class BranchSpec:
    columns: tuple[str, ...]
    hidden: tuple[int, ...]
    activation: str = "prelu"
    batchnorm: bool = False


@dataclass(frozen=True)
class MlpSpec:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    batchnorm: bool = False
    output: str = "linear"
    branches: tuple[BranchSpec, ...] = ()
    loss: str = "mse"
    optimizer: str = "adam"
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not (self.hidden or any(b.hidden for b in self.branches)):
            raise ValueError("an MLP needs at least one hidden layer")
        for act in (self.activation, self.output, *(b.activation for b in self.branches)):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.optimizer not in nn.OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        d["branches"] = tuple(
            BranchSpec(tuple(b["columns"]), tuple(b["hidden"]), b["activation"], b["batchnorm"])
            for b in d["branches"])
        return cls(**d)


def _activation(name: str) -> nn.Layer:
    return {"relu": nn.ReLU, "prelu": nn.PReLU, "linear": nn.Identity}[name]()


def _stack(n_in: int, hidden, activation: str, batchnorm: bool, rng) -> tuple[list[nn.Layer], int]:
    layers: list[nn.Layer] = []
    for h in hidden:
        layers.append(nn.Dense(n_in, h, rng))
        if batchnorm:
            layers.append(nn.BatchNorm1d(h))
        layers.append(_activation(activation))
        n_in = h
    return layers, n_in


def build_network(spec: MlpSpec, columns: list[str]) -> nn.Sequential:
    rng = np.random.default_rng(spec.seed)
    n_in = len(columns)
    layers: list[nn.Layer] = []
    if spec.branches:
        pos = {c: i for i, c in enumerate(columns)}
        routes = []
        width = 0
        for b in spec.branches:
            try:
                cols = [pos[c] for c in b.columns]
            except KeyError as exc:
                raise ValueError(f"branch column {exc.args[0]!r} not among the inputs") from None
            sub, w = _stack(len(cols), b.hidden, b.activation, b.batchnorm, rng)
            routes.append((cols, nn.Sequential(sub)))
            width += w
        layers.append(nn.Branches(routes, n_in))
        n_in = width
    hidden, n_in = _stack(n_in, spec.hidden, spec.activation, spec.batchnorm, rng)
    layers += hidden
    layers.append(nn.Dense(n_in, 1, rng))
    layers.append(_activation(spec.output))
    return nn.Sequential(layers)


def _last_dense(net: nn.Sequential) -> nn.Dense:
    return next(l for l in reversed(net.layers) if isinstance(l, nn.Dense))


class MLP:
    """Regressor; targets are divided by their std during training."""

    variant = "MLP"

    def __init__(self, spec: MlpSpec, columns: list[str] | None = None):
        self.spec = spec
        self.columns = list(columns) if columns is not None else None
        self.net: nn.Sequential | None = None
        self.y_scale = 1.0
        self.history: list[float] = []

    @property
    def fitted(self) -> bool:
        return self.net is not None

    def _batches(self, n: int, groups, rng):
        bs = self.spec.batch_size
        if groups is None:
            perm = rng.permutation(n)
            return [perm[i:i + bs] for i in range(0, n, bs)]
        members: dict = {}
        for i, g in enumerate(groups):
            members.setdefault(g, []).append(i)
        keys = list(members)
        out, cur = [], []
        for gi in rng.permutation(len(keys)):
            cur += members[keys[gi]]
            if len(cur) >= bs:
                out.append(np.array(cur))
                cur = []
        if cur:
            out.append(np.array(cur))
        return out

    def _loss(self, pred, truth, groups_batch):
        if self.spec.loss != "masked_rmse":
            return LOSSES[self.spec.loss](pred, truth)
        _, membership = np.unique(groups_batch, return_inverse=True)
        ap_truth = np.zeros(membership.max() + 1)
        np.add.at(ap_truth, membership, truth)
        return nn.masked_rmse(pred, truth, membership, ap_truth)

    def fit(self, X, y, groups=None) -> "MLP":
        X = as_2d(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        if self.columns is None:
            self.columns = [f"f{i}" for i in range(X.shape[1])]
        if X.shape[1] != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} input columns, got {X.shape[1]}")
        if self.spec.loss == "masked_rmse" and groups is None:
            raise ValueError("masked_rmse needs BSS groups")
        groups = None if groups is None else np.asarray(groups)
        std = float(np.std(y))
        self.y_scale = std if std > 0 else 1.0
        ys = y / self.y_scale
        net = build_network(self.spec, self.columns)
        _last_dense(net).b[:] = float(np.mean(ys))
        opt = nn.OPTIMIZERS[self.spec.optimizer](lr=self.spec.lr)
        rng = np.random.default_rng([self.spec.seed, 1])
        params, grads = net.params(), net.grads()
        self.history = []
        for epoch in range(self.spec.epochs):
            total, count = 0.0, 0
            for idx in self._batches(len(y), groups, rng):
                pred = net.forward(X[idx], train=True)[:, 0]
                loss, g = self._loss(pred, ys[idx], None if groups is None else groups[idx])
                if not math.isfinite(loss):
                    raise TrainingError(f"loss diverged at epoch {epoch}")
                net.backward(g[:, None])
                opt.step(params, grads)
                total += loss * len(idx)
                count += len(idx)
            self.history.append(total / count)
        self.net = net
        return self

    def predict(self, X) -> np.ndarray:
        if self.net is None:
            raise NotFittedError("MLP.predict before fit")
        return self.net.forward(as_2d(X), train=False)[:, 0] * self.y_scale

    def to_dict(self) -> dict:
        if self.net is None:
            raise NotFittedError("cannot serialize an unfitted MLP")
        return {"spec": self.spec.to_dict(), "columns": self.columns, "y_scale": self.y_scale,
                "state": self.net.state()}

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        m = cls(MlpSpec.from_dict(d["spec"]), d["columns"])
        m.y_scale = float(d["y_scale"])
        m.net = build_network(m.spec, m.columns)
        m.net.load_state(d["state"])
        return m
