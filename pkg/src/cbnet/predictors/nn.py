"""Minimal numpy neural-network layers with explicit backward passes."""
from __future__ import annotations

import math

import numpy as np


class Layer:
    """Base layer. ``forward`` caches what ``backward`` needs."""

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state(self) -> dict:
        return {}

    def load_state(self, s: dict) -> None:
        pass


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def forward(self, x, train=False):
        self._x = x
        return x @ self.W + self.b

    def backward(self, g):
        self.dW[...] = self._x.T @ g
        self.db[...] = g.sum(axis=0)
        return g @ self.W.T

    def state(self):
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    def load_state(self, s):
        self.W = np.array(s["W"], dtype=float).reshape(self.W.shape)
        self.b = np.array(s["b"], dtype=float)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, g):
        return np.where(self._mask, g, 0.0)


class Identity(Layer):
    def forward(self, x, train=False):
        return x

    def backward(self, g):
        return g


class PReLU(Layer):
    """ReLU with one learned slope for negative inputs."""

    def __init__(self, slope: float = 0.25):
        self.a = np.array([slope], dtype=float)
        self.da = np.zeros(1)

    def params(self):
        return [self.a]

    def grads(self):
        return [self.da]

    def forward(self, x, train=False):
        self._x = x
        return np.where(x > 0, x, self.a[0] * x)

    def backward(self, g):
        neg = self._x <= 0
        self.da[0] = float(np.sum(g * self._x * neg))
        return np.where(neg, self.a[0] * g, g)

    def state(self):
        return {"a": self.a.tolist()}

    def load_state(self, s):
        self.a = np.array(s["a"], dtype=float)
        self.da = np.zeros(1)


class BatchNorm1d(Layer):
    """Batch statistics while training, running statistics at predict time."""

    def __init__(self, n: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = np.ones(n)
        self.beta = np.zeros(n)
        self.dgamma = np.zeros(n)
        self.dbeta = np.zeros(n)
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.momentum = momentum
        self.eps = eps

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.dgamma, self.dbeta]

    def forward(self, x, train=False):
        if not train:
            return (x - self.running_mean) / np.sqrt(self.running_var + self.eps) * self.gamma + self.beta
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        n = x.shape[0]
        m = self.momentum
        self.running_mean = m * self.running_mean + (1 - m) * mu
        unbiased = var * n / (n - 1) if n > 1 else var
        self.running_var = m * self.running_var + (1 - m) * unbiased
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mu) * self._inv
        return self._xhat * self.gamma + self.beta

    def backward(self, g):
        n = g.shape[0]
        self.dgamma[...] = (g * self._xhat).sum(axis=0)
        self.dbeta[...] = g.sum(axis=0)
        gx = g * self.gamma
        return self._inv / n * (n * gx - gx.sum(axis=0) - self._xhat * (gx * self._xhat).sum(axis=0))

    def state(self):
        return {k: getattr(self, k).tolist() for k in ("gamma", "beta", "running_mean", "running_var")}

    def load_state(self, s):
        for k in ("gamma", "beta", "running_mean", "running_var"):
            setattr(self, k, np.array(s[k], dtype=float))
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        return [p for l in self.layers for p in l.params()]

    def grads(self):
        return [g for l in self.layers for g in l.grads()]

    def forward(self, x, train=False):
        for l in self.layers:
            x = l.forward(x, train)
        return x

    def backward(self, g):
        for l in reversed(self.layers):
            g = l.backward(g)
        return g

    def state(self):
        return {"layers": [l.state() for l in self.layers]}

    def load_state(self, s):
        for l, ls in zip(self.layers, s["layers"]):
            l.load_state(ls)


class Branches(Layer):
    """Run sub-networks on column subsets of the input and concatenate outputs."""

    def __init__(self, routes: list[tuple[list[int], Layer]], n_in: int):
        self.routes = [(np.asarray(cols, dtype=int), net) for cols, net in routes]
        self.n_in = n_in

    def params(self):
        return [p for _, net in self.routes for p in net.params()]

    def grads(self):
        return [g for _, net in self.routes for g in net.grads()]

    def forward(self, x, train=False):
        outs = [net.forward(x[:, cols], train) for cols, net in self.routes]
        self._widths = [o.shape[1] for o in outs]
        return np.concatenate(outs, axis=1)

    def backward(self, g):
        dx = np.zeros((g.shape[0], self.n_in))
        start = 0
        for (cols, net), w in zip(self.routes, self._widths):
            dx[:, cols] += net.backward(g[:, start:start + w])
            start += w
        return dx

    def state(self):
        return {"routes": [net.state() for _, net in self.routes]}

    def load_state(self, s):
        for (_, net), ns in zip(self.routes, s["routes"]):
            net.load_state(ns)


# --- losses: return (value, d value / d prediction) ------------------------

def mse(pred: np.ndarray, truth: np.ndarray):
    e = pred - truth
    return float(np.mean(e * e)), 2.0 * e / e.size


def rmse(pred: np.ndarray, truth: np.ndarray):
    e = pred - truth
    val = math.sqrt(float(np.mean(e * e)))
    grad = e / (e.size * val) if val > 0 else np.zeros_like(e)
    return val, grad


def masked_rmse(pred: np.ndarray, truth: np.ndarray, membership: np.ndarray, ap_truth: np.ndarray):
    """RMSE over STA errors plus AP errors, each AP predicted as the sum of its STAs.

    ``membership[i]`` is the AP index of STA ``i``; ``ap_truth`` holds one value
    per AP.
    """
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    membership = np.asarray(membership, dtype=int)
    ap_truth = np.asarray(ap_truth, dtype=float).reshape(-1)
    if pred.size == 0 or ap_truth.size == 0:
        raise ValueError("masked loss on empty input")
    if membership.shape != pred.shape or membership.min() < 0 or membership.max() >= ap_truth.size:
        raise ValueError("membership must map every STA to an AP")
    ap_pred = np.zeros(ap_truth.size)
    np.add.at(ap_pred, membership, pred)
    e_sta = pred - truth
    e_ap = ap_pred - ap_truth
    total = e_sta.size + e_ap.size
    val = math.sqrt((float(np.sum(e_sta * e_sta)) + float(np.sum(e_ap * e_ap))) / total)
    if val == 0:
        return 0.0, np.zeros_like(pred)
    grad = (e_sta + e_ap[membership]) / (total * val)
    return val, grad


# --- optimizers ------------------------------------------------------------

class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] = []
        self.v: list[np.ndarray] = []

    def step(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class RMSProp:
    def __init__(self, lr: float = 1e-3, rho: float = 0.9, eps: float = 1e-7):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.v: list[np.ndarray] = []

    def step(self, params, grads):
        if not self.v:
            self.v = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.v):
            v *= self.rho
            v += (1 - self.rho) * g * g
            p -= self.lr * g / (np.sqrt(v) + self.eps)


OPTIMIZERS = {"adam": Adam, "rmsprop": RMSProp}
