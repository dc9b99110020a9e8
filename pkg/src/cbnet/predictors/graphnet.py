"""Graph-network regressor over deployment graphs (APs and STAs as nodes).

Each block updates edges from (edge, source, destination), averages the
updated incoming edges at every node, then updates nodes from (node,
aggregate). No global attribute is kept. A final linear readout gives one
throughput value per node; only STA outputs are used, AP values being the
sum over their STAs.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from cbnet import channelization as chz
from cbnet import rf
from cbnet.deployment import Deployment
from cbnet.predictors import nn
from cbnet.predictors.base import NotFittedError, TrainingError

GRAPHS_MAGIC = "# cbnet-graphs v1"
NODE_FEATURES = ("type", "x", "y", *(f"{g}{c}" for g in ("primary_ch", "min_ch", "max_ch")
                                     for c in range(chz.N_CHANNELS)), "sinr", "airtime")
EDGE_FEATURES = ("type", "distance", "rssi", "interference")


@dataclass
class GraphSample:
    """One deployment as a directed graph.

    ``ap_of[i]`` is the AP node index owning STA node ``i`` (-1 for APs).
    ``y`` holds per-node throughput (APs: sum of their STAs) when labelled.
    """

    key: str
    node_ids: list[str]
    bss: list[str]
    node_type: np.ndarray
    V: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    E: np.ndarray
    ap_of: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.node_ids)
        self.V = np.asarray(self.V, dtype=float).reshape(n, -1)
        E = np.asarray(self.E, dtype=float)
        if E.ndim != 2:
            # an empty edge list carries no width of its own
            E = E.reshape(len(self.src), -1) if E.size else np.zeros((0, len(EDGE_FEATURES)))
        self.E = E
        self.src = np.asarray(self.src, dtype=int)
        self.dst = np.asarray(self.dst, dtype=int)
        self.node_type = np.asarray(self.node_type, dtype=int)
        self.ap_of = np.asarray(self.ap_of, dtype=int)
        if len(self.src) and (self.src.min() < 0 or self.dst.min() < 0
                              or max(self.src.max(), self.dst.max()) >= n):
            raise ValueError(f"{self.key}: edge endpoint out of range")

    @property
    def sta_mask(self) -> np.ndarray:
        return self.node_type == 1

    def to_dict(self) -> dict:
        return {"key": self.key, "node_ids": self.node_ids, "bss": self.bss,
                "node_type": self.node_type.tolist(), "V": self.V.tolist(),
                "src": self.src.tolist(), "dst": self.dst.tolist(), "E": self.E.tolist(),
                "ap_of": self.ap_of.tolist(), "y": None if self.y is None else self.y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSample":
        return cls(d["key"], d["node_ids"], d["bss"], np.array(d["node_type"]), np.array(d["V"]),
                   np.array(d["src"]), np.array(d["dst"]), np.array(d["E"]), np.array(d["ap_of"]),
                   None if d["y"] is None else np.array(d["y"], dtype=float))


def _onehots(node) -> list[float]:
    out = []
    for ch in (node.primary, node.min_channel, node.max_channel):
        v = [0.0] * chz.N_CHANNELS
        v[ch] = 1.0
        out += v
    return out


def build_graph(d: Deployment, result, key: str | None = None, rf_cfg: rf.RfConfig = rf.DEFAULT_RF,
                with_labels: bool = True) -> GraphSample:
    """Node and edge features from a deployment and its simulation output."""
    key = key or d.scenario_id
    ids, bss, types, V, ap_of, y = [], [], [], [], [], []
    ap_index = {}
    for b in d.bsss:
        ap = b.ap
        ap_index[ap.bss_id] = len(ids)
        air = result.ap_airtime[ap.code][ap.min_channel:ap.max_channel + 1]
        ids.append(ap.code)
        bss.append(ap.bss_id)
        types.append(0)
        V.append([0.0, ap.position[0], ap.position[1], *_onehots(ap), 0.0, float(np.mean(air))])
        ap_of.append(-1)
        y.append(result.ap_throughput[ap.code] if with_labels else 0.0)
        for s in b.stas:
            ids.append(s.code)
            bss.append(s.bss_id)
            types.append(1)
            V.append([1.0, s.position[0], s.position[1], *_onehots(s), result.sta_sinr[s.code], 0.0])
            ap_of.append(ap_index[ap.bss_id])
            y.append(result.sta_throughput[s.code] if with_labels else 0.0)
    imap = rf.interference_map(d, rf_cfg)
    src, dst, E = [], [], []
    aps = d.aps
    for i, a in enumerate(aps):
        for j, b_ in enumerate(aps):
            if i != j:
                # power from AP j received at AP i
                src.append(ap_index[b_.bss_id])
                dst.append(ap_index[a.bss_id])
                E.append([0.0, math.dist(a.position[:2], b_.position[:2]), 0.0, float(imap[i, j])])
    for b in d.bsss:
        a = ap_index[b.bss_id]
        for s in b.stas:
            src.append(a)
            dst.append(ids.index(s.code))
            E.append([1.0, math.dist(s.position[:2], b.ap.position[:2]), result.sta_rssi[s.code],
                      result.ap_interference[b.ap.code]])
    return GraphSample(key, ids, bss, np.array(types), np.array(V), np.array(src, dtype=int),
                       np.array(dst, dtype=int), np.array(E).reshape(-1, len(EDGE_FEATURES)),
                       np.array(ap_of), np.array(y) if with_labels else None)


def write_graphs(graphs, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(GRAPHS_MAGIC + "\n")
        for g in graphs:
            f.write(json.dumps(g.to_dict()) + "\n")


def read_graphs(path) -> list[GraphSample]:
    with open(path, encoding="utf-8") as f:
        head = f.readline().strip()
        if head != GRAPHS_MAGIC:
            raise ValueError(f"{path}: expected header {GRAPHS_MAGIC!r}")
        return [GraphSample.from_dict(json.loads(line)) for line in f if line.strip()]


def batch_graphs(graphs: list[GraphSample]) -> GraphSample:
    """Disjoint union of several graphs."""
    off = 0
    parts = {k: [] for k in ("ids", "bss", "type", "V", "src", "dst", "E", "ap_of", "y")}
    for g in graphs:
        parts["ids"] += g.node_ids
        parts["bss"] += g.bss
        parts["type"].append(g.node_type)
        parts["V"].append(g.V)
        parts["src"].append(g.src + off)
        parts["dst"].append(g.dst + off)
        parts["E"].append(g.E)
        parts["ap_of"].append(np.where(g.ap_of >= 0, g.ap_of + off, -1))
        parts["y"].append(g.y if g.y is not None else np.zeros(len(g.node_ids)))
        off += len(g.node_ids)
    return GraphSample("batch", parts["ids"], parts["bss"], np.concatenate(parts["type"]),
                       np.vstack(parts["V"]), np.concatenate(parts["src"]),
                       np.concatenate(parts["dst"]), np.vstack(parts["E"]),
                       np.concatenate(parts["ap_of"]), np.concatenate(parts["y"]))


class GraphNetBlock:
    """Edge update, mean aggregation of incoming edges, node update."""

    def __init__(self, edge_mlp: nn.Layer, node_mlp: nn.Layer):
        self.edge_mlp = edge_mlp
        self.node_mlp = node_mlp

    def params(self):
        return self.edge_mlp.params() + self.node_mlp.params()

    def grads(self):
        return self.edge_mlp.grads() + self.node_mlp.grads()

    def forward(self, V, E, src, dst, train=False):
        n, fv = V.shape
        fe = E.shape[1]
        Ein = np.concatenate([E, V[src], V[dst]], axis=1)
        E2 = self.edge_mlp.forward(Ein, train)
        he = E2.shape[1]
        deg = np.bincount(dst, minlength=n).astype(float)
        agg = np.zeros((n, he))
        np.add.at(agg, dst, E2)
        # nodes without incoming edges aggregate a zero vector
        agg /= np.where(deg > 0, deg, 1.0)[:, None]
        Vout = self.node_mlp.forward(np.concatenate([V, agg], axis=1), train)
        self._cache = (n, fv, fe, he, src, dst, deg)
        return Vout, E2

    def backward(self, dV2, dE2):
        n, fv, fe, he, src, dst, deg = self._cache
        dVin = self.node_mlp.backward(dV2)
        dV = dVin[:, :fv].copy()
        dagg = dVin[:, fv:] / np.where(deg > 0, deg, 1.0)[:, None]
        dE2 = dE2 + dagg[dst]
        dEin = self.edge_mlp.backward(dE2)
        np.add.at(dV, src, dEin[:, fe:fe + fv])
        np.add.at(dV, dst, dEin[:, fe + fv:])
        return dV, dEin[:, :fe]

    def state(self):
        return {"edge": self.edge_mlp.state(), "node": self.node_mlp.state()}

    def load_state(self, s):
        self.edge_mlp.load_state(s["edge"])
        self.node_mlp.load_state(s["node"])


def graphnet_forward(blocks, g: GraphSample, train: bool = False) -> np.ndarray:
    """Node outputs after passing ``g`` through ``blocks``."""
    V, E = g.V, g.E
    for b in blocks:
        V, E = b.forward(V, E, g.src, g.dst, train)
    return V


def _mlp(n_in, widths, rng, final_act=True):
    layers = []
    for i, h in enumerate(widths):
        layers.append(nn.Dense(n_in, h, rng))
        if final_act or i < len(widths) - 1:
            layers.append(nn.ReLU())
        n_in = h
    return nn.Sequential(layers)


@dataclass(frozen=True)
class GraphNetSpec:
    n_blocks: int = 3
    hidden: int = 32
    lr: float = 1e-3
    epochs: int = 100
    batch_graphs: int = 8
    seed: int = 0


class GraphNetRegressor:
    variant = "GraphNet"

    def __init__(self, spec: GraphNetSpec = GraphNetSpec()):
        self.spec = spec
        self.blocks: list[GraphNetBlock] = []
        self.readout: nn.Dense | None = None
        self.v_mean = self.v_std = self.e_mean = self.e_std = None
        self.y_scale = 1.0
        self.history: list[float] = []

    @property
    def fitted(self) -> bool:
        return self.readout is not None

    def _build(self, fv: int, fe: int):
        rng = np.random.default_rng(self.spec.seed)
        h = self.spec.hidden
        self.blocks = []
        for _ in range(self.spec.n_blocks):
            self.blocks.append(GraphNetBlock(_mlp(fe + 2 * fv, (h, h), rng), _mlp(fv + h, (h, h), rng)))
            fv, fe = h, h
        self.readout = nn.Dense(fv, 1, rng)

    def _norm(self, g: GraphSample) -> GraphSample:
        return GraphSample(g.key, g.node_ids, g.bss, g.node_type, (g.V - self.v_mean) / self.v_std,
                           g.src, g.dst, (g.E - self.e_mean) / self.e_std, g.ap_of, g.y)

    def _params(self):
        return [p for b in self.blocks for p in b.params()] + self.readout.params()

    def _grads(self):
        return [p for b in self.blocks for p in b.grads()] + self.readout.grads()

    def _forward(self, g: GraphSample, train: bool) -> np.ndarray:
        V = graphnet_forward(self.blocks, g, train)
        return self.readout.forward(V, train)[:, 0]

    def _backward(self, dout: np.ndarray, n_edges: int):
        dV = self.readout.backward(dout[:, None])
        dE = np.zeros((n_edges, self.spec.hidden))
        for b in reversed(self.blocks):
            dV, dE = b.backward(dV, dE)

    @staticmethod
    def _loss(out, g: GraphSample, y_scale: float):
        sta = np.flatnonzero(g.sta_mask)
        aps = np.flatnonzero(~g.sta_mask)
        pos = {a: k for k, a in enumerate(aps)}
        membership = np.array([pos[a] for a in g.ap_of[sta]])
        loss, gs = nn.masked_rmse(out[sta], g.y[sta] / y_scale, membership, g.y[aps] / y_scale)
        dout = np.zeros_like(out)
        dout[sta] = gs
        return loss, dout

    def fit(self, graphs: list[GraphSample]) -> "GraphNetRegressor":
        if not graphs:
            raise ValueError("no training graphs")
        V = np.vstack([g.V for g in graphs])
        E = np.vstack([g.E for g in graphs])
        self.v_mean, self.e_mean = V.mean(axis=0), E.mean(axis=0)
        self.v_std = np.where(V.std(axis=0) > 0, V.std(axis=0), 1.0)
        self.e_std = np.where(E.std(axis=0) > 0, E.std(axis=0), 1.0)
        ys = np.concatenate([g.y[g.sta_mask] for g in graphs])
        self.y_scale = float(ys.std()) or 1.0
        self._build(V.shape[1], E.shape[1])
        self.readout.b[:] = float(ys.mean()) / self.y_scale
        normed = [self._norm(g) for g in graphs]
        opt = nn.Adam(lr=self.spec.lr)
        rng = np.random.default_rng([self.spec.seed, 1])
        params, grads = self._params(), self._grads()
        bs = self.spec.batch_graphs
        self.history = []
        for epoch in range(self.spec.epochs):
            total = 0.0
            perm = rng.permutation(len(normed))
            for start in range(0, len(perm), bs):
                g = batch_graphs([normed[i] for i in perm[start:start + bs]])
                out = self._forward(g, True)
                loss, dout = self._loss(out, g, self.y_scale)
                if not math.isfinite(loss):
                    raise TrainingError(f"loss diverged at epoch {epoch}")
                self._backward(dout, len(g.src))
                opt.step(params, grads)
                total += loss
            self.history.append(total)
        return self

    def predict_graph(self, g: GraphSample) -> np.ndarray:
        """Per-node predictions; AP entries are the sums over their STAs."""
        if not self.fitted:
            raise NotFittedError("graph network used before fit")
        out = self._forward(self._norm(g), False) * self.y_scale
        pred = np.where(g.sta_mask, out, 0.0)
        for i in np.flatnonzero(g.sta_mask):
            pred[g.ap_of[i]] += out[i]
        return pred

    def to_dict(self) -> dict:
        if not self.fitted:
            raise NotFittedError("cannot serialize an unfitted graph network")
        return {"spec": asdict(self.spec), "fv": len(self.v_mean), "fe": len(self.e_mean),
                "v_mean": self.v_mean.tolist(), "v_std": self.v_std.tolist(),
                "e_mean": self.e_mean.tolist(), "e_std": self.e_std.tolist(),
                "y_scale": self.y_scale, "blocks": [b.state() for b in self.blocks],
                "readout": self.readout.state()}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphNetRegressor":
        m = cls(GraphNetSpec(**d["spec"]))
        m._build(d["fv"], d["fe"])
        for b, s in zip(m.blocks, d["blocks"]):
            b.load_state(s)
        m.readout.load_state(d["readout"])
        for k in ("v_mean", "v_std", "e_mean", "e_std"):
            setattr(m, k, np.array(d[k], dtype=float))
        m.y_scale = float(d["y_scale"])
        return m
