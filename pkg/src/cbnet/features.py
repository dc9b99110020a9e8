"""Feature tables for per-STA and per-BSS throughput regression."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from cbnet.channelization import N_CHANNELS
from cbnet.deployment import Deployment

FEATURES_MAGIC = "# cbnet-features v1"
PREPROCESSOR_MAGIC = "# cbnet-preprocessor v1"
ONEHOT_GROUPS = ("primary_ch", "min_ch", "max_ch")
STA_NUMERIC = ("x", "y", "distance", "rssi", "sinr", "ap_airtime", "ap_interference")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[str, ...]
    onehot: tuple[tuple[str, int, int], ...]  # (group, start, stop) column slices
    granularity: str  # "STA" or "BSS"

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise FeatureError("feature names must be unique")
        if self.granularity not in ("STA", "BSS"):
            raise FeatureError(f"granularity must be STA or BSS, got {self.granularity!r}")

    @property
    def width(self) -> int:
        return len(self.columns)

    def index(self, names: Iterable[str]) -> list[int]:
        pos = {c: i for i, c in enumerate(self.columns)}
        try:
            return [pos[n] for n in names]
        except KeyError as exc:
            raise FeatureError(f"unknown feature {exc.args[0]!r}") from None

    def numeric_columns(self) -> list[str]:
        in_group = {i for _, a, b in self.onehot for i in range(a, b)}
        return [c for i, c in enumerate(self.columns) if i not in in_group]


@dataclass
class FeatureTable:
    schema: FeatureSchema
    ids: list[str]
    deployments: list[str]
    bss: list[str]
    X: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.ids), self.schema.width)
        if not (len(self.ids) == len(self.deployments) == len(self.bss)):
            raise FeatureError("row metadata lengths differ")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.shape != (len(self.ids),):
                raise FeatureError("label vector does not match row count")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def scenarios(self) -> list[str]:
        return [d.split("/")[0] for d in self.deployments]

    def take(self, rows) -> "FeatureTable":
        rows = np.asarray(rows, dtype=int)
        return FeatureTable(
            self.schema, [self.ids[i] for i in rows], [self.deployments[i] for i in rows],
            [self.bss[i] for i in rows], self.X[rows],
            None if self.y is None else self.y[rows])

    def columns(self, names: Sequence[str]) -> np.ndarray:
        return self.X[:, self.schema.index(names)]


def _onehot(value: int) -> list[float]:
    v = [0.0] * N_CHANNELS
    v[value] = 1.0
    return v


def sta_schema() -> FeatureSchema:
    cols = ["x", "y", "distance"]
    groups = []
    for g in ONEHOT_GROUPS:
        groups.append((g, len(cols), len(cols) + N_CHANNELS))
        cols += [f"{g}{c}" for c in range(N_CHANNELS)]
    cols += ["rssi", "sinr", "ap_airtime", "ap_interference"]
    return FeatureSchema(tuple(cols), tuple(groups), "STA")


def extract_sta(d: Deployment, result, deployment_key: str | None = None,
                with_labels: bool = True) -> FeatureTable:
    """One row per STA of ``d`` using the simulated observables in ``result``."""
    key = deployment_key or d.scenario_id
    schema = sta_schema()
    ids, deps, bsss, rows, labels = [], [], [], [], []
    for b in d.bsss:
        ap = b.ap
        try:
            air = result.ap_airtime[ap.code]
            interf = result.ap_interference[ap.code]
        except KeyError:
            raise FeatureError(f"{key}: no simulation output for {ap.code}") from None
        air_mean = float(np.mean(air[ap.min_channel:ap.max_channel + 1]))
        for s in b.stas:
            try:
                rssi, sinr = result.sta_rssi[s.code], result.sta_sinr[s.code]
                thr = result.sta_throughput[s.code] if with_labels else None
            except KeyError:
                raise FeatureError(f"{key}: missing observable for {s.code}") from None
            if rssi is None or sinr is None:
                raise FeatureError(f"{key}: missing observable for {s.code}")
            dist = math.dist(s.position[:2], ap.position[:2])
            rows.append([s.position[0], s.position[1], dist, *_onehot(s.primary),
                         *_onehot(s.min_channel), *_onehot(s.max_channel),
                         rssi, sinr, air_mean, interf])
            ids.append(f"{key}/{s.code}")
            deps.append(key)
            bsss.append(ap.bss_id)
            labels.append(thr)
    X = np.array(rows, dtype=float).reshape(len(rows), schema.width)
    y = np.array(labels, dtype=float) if with_labels else None
    return FeatureTable(schema, ids, deps, bsss, X, y)


def concat(tables: Sequence[FeatureTable]) -> FeatureTable:
    if not tables:
        raise FeatureError("nothing to concatenate")
    schema = tables[0].schema
    if any(t.schema != schema for t in tables):
        raise FeatureError("schemas differ")
    has_y = [t.y is not None for t in tables]
    if any(has_y) and not all(has_y):
        raise FeatureError("some tables are unlabeled")
    return FeatureTable(
        schema, sum((t.ids for t in tables), []), sum((t.deployments for t in tables), []),
        sum((t.bss for t in tables), []), np.vstack([t.X for t in tables]),
        np.concatenate([t.y for t in tables]) if all(has_y) else None)


def bss_schema() -> FeatureSchema:
    cols = []
    for c in STA_NUMERIC:
        cols += [f"{c}_mean", f"{c}_std"]
    groups = []
    for g in ONEHOT_GROUPS:
        groups.append((g, len(cols), len(cols) + N_CHANNELS))
        cols += [f"{g}{c}" for c in range(N_CHANNELS)]
    cols += [f"airtime_ch{c}" for c in range(N_CHANNELS)]
    return FeatureSchema(tuple(cols), tuple(groups), "BSS")


def aggregate_bss(t: FeatureTable, ap_airtime: Mapping[tuple[str, str], Sequence[float]]) -> FeatureTable:
    """Collapse STA rows into one row per BSS.

    Numeric STA features become (mean, population std); the channel one-hots
    are copied; ``ap_airtime[(deployment, bss_id)]`` supplies the per-channel
    airtime. The label is the sum of the member STA labels.
    """
    if t.schema.granularity != "STA":
        raise FeatureError("aggregate_bss needs an STA table")
    schema = bss_schema()
    num_idx = t.schema.index(STA_NUMERIC)
    oh_idx = [i for _, a, b in t.schema.onehot for i in range(a, b)]
    groups: dict[tuple[str, str], list[int]] = {}
    for i, key in enumerate(zip(t.deployments, t.bss)):
        groups.setdefault(key, []).append(i)
    ids, deps, bsss, rows, labels = [], [], [], [], []
    for (dep, bss), members in groups.items():
        if not members:
            raise FeatureError(f"{dep}/{bss}: BSS without STAs")
        sub = t.X[members]
        feats = []
        for j in num_idx:
            col = sub[:, j]
            feats += [float(col.mean()), float(col.std())]
        feats += list(sub[0, oh_idx])
        try:
            air = ap_airtime[(dep, bss)]
        except KeyError:
            raise FeatureError(f"{dep}/{bss}: no airtime vector") from None
        feats += [float(a) for a in air]
        rows.append(feats)
        ids.append(f"{dep}/{bss}")
        deps.append(dep)
        bsss.append(bss)
        if t.y is not None:
            acc = 0.0
            for i in members:
                acc += float(t.y[i])
            labels.append(acc)
    X = np.array(rows, dtype=float).reshape(len(rows), schema.width)
    return FeatureTable(schema, ids, deps, bsss, X, np.array(labels) if t.y is not None else None)


def airtime_lookup(results: Mapping[str, object], deployments: Mapping[str, Deployment]):
    """``(deployment key, bss_id) -> airtime vector`` for :func:`aggregate_bss`."""
    out = {}
    for key, res in results.items():
        for ap in deployments[key].aps:
            out[(key, ap.bss_id)] = res.ap_airtime[ap.code]
    return out


# --- Yeo-Johnson -----------------------------------------------------------

def yeo_johnson(x, lam: float):
    """Yeo-Johnson power transform, elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    lp = np.log1p(x[pos])
    out[pos] = lp if lam == 0 else np.expm1(lam * lp) / lam
    ln = np.log1p(-x[~pos])
    out[~pos] = -ln if lam == 2 else -np.expm1((2 - lam) * ln) / (2 - lam)
    return out if out.ndim else float(out)


def _yj_loglik(x: np.ndarray, lam: float) -> float:
    t = yeo_johnson(x, lam)
    var = t.var()
    if not var > 0:
        return -math.inf
    return -0.5 * len(x) * math.log(var) + (lam - 1) * float(np.sum(np.sign(x) * np.log1p(np.abs(x))))


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-4) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2


def fit_yeo_johnson_lambda(column, lo: float = -2.0, hi: float = 2.0, tol: float = 1e-4) -> float:
    """Maximum-likelihood lambda under a Gaussian model of the transformed data."""
    x = np.asarray(column, dtype=float)
    if len(np.unique(x)) < 2:
        raise FeatureError("Yeo-Johnson lambda needs at least two distinct values")
    return golden_section_max(lambda lam: _yj_loglik(x, lam), lo, hi, tol)


# --- scaling ---------------------------------------------------------------

@dataclass
class Preprocessor:
    """Optional per-column Yeo-Johnson followed by standard scaling."""

    yeo_johnson: bool = False
    lambdas: list[float | None] = field(default_factory=list)
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.mean is not None

    def fit(self, X) -> "Preprocessor":
        X = np.asarray(X, dtype=float)
        self.lambdas = []
        cols = []
        for j in range(X.shape[1]):
            col = X[:, j]
            lam = None
            if self.yeo_johnson and len(np.unique(col)) > 2:
                lam = fit_yeo_johnson_lambda(col)
                col = yeo_johnson(col, lam)
            self.lambdas.append(lam)
            cols.append(col)
        T = np.column_stack(cols) if cols else X
        self.mean = T.mean(axis=0)
        std = T.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)
        return self

    def _power(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=float, copy=True)
        for j, lam in enumerate(self.lambdas):
            if lam is not None:
                X[:, j] = yeo_johnson(X[:, j], lam)
        return X

    def transform(self, X) -> np.ndarray:
        if not self.fitted:
            raise FeatureError("preprocessor used before fit")
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.mean):
            raise FeatureError(f"expected {len(self.mean)} columns, got {X.shape[1]}")
        out = (self._power(X) - self.mean) / self.std
        if not np.isfinite(out).all():
            raise FeatureError("non-finite value after preprocessing")
        return out

    def fit_transform(self, X) -> np.ndarray:
        return self.fit(X).transform(X)

    def to_dict(self) -> dict:
        return {"yeo_johnson": self.yeo_johnson, "lambdas": self.lambdas,
                "mean": None if self.mean is None else self.mean.tolist(),
                "std": None if self.std is None else self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        p = cls(bool(d["yeo_johnson"]), list(d["lambdas"]))
        if d["mean"] is not None:
            p.mean = np.array(d["mean"], dtype=float)
            p.std = np.array(d["std"], dtype=float)
        return p

    def dumps(self) -> str:
        return PREPROCESSOR_MAGIC + "\n" + json.dumps(self.to_dict()) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Preprocessor":
        head, _, body = text.partition("\n")
        if head.strip() != PREPROCESSOR_MAGIC:
            raise FeatureError(f"expected header {PREPROCESSOR_MAGIC!r}")
        return cls.from_dict(json.loads(body))


# --- analysis --------------------------------------------------------------

def correlation_matrix(X) -> np.ndarray:
    """Pearson correlations; zero-variance columns get 0 off the diagonal."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise FeatureError("correlation needs at least two rows")
    Z = X - X.mean(axis=0)
    norms = np.sqrt((Z * Z).sum(axis=0))
    flat = norms == 0
    if flat.any():
        warnings.warn(f"{int(flat.sum())} zero-variance column(s) in correlation matrix", stacklevel=2)
    safe = np.where(flat, 1.0, norms)
    C = (Z.T @ Z) / np.outer(safe, safe)
    C = np.clip(C, -1.0, 1.0)
    C[flat, :] = 0.0
    C[:, flat] = 0.0
    np.fill_diagonal(C, 1.0)
    return C


def variance_report(t: FeatureTable, threshold: float = 1e-12) -> list[tuple[str, float, bool]]:
    """(column, variance, below threshold) for every column; nothing is dropped."""
    var = t.X.var(axis=0)
    return [(c, float(v), bool(v <= threshold)) for c, v in zip(t.schema.columns, var)]


def split(t: FeatureTable, fraction: float = 0.8, seed: int = 0,
          level: str = "deployment") -> tuple[FeatureTable, FeatureTable]:
    """Seeded train/validation partition, by whole deployments by default."""
    if not 0.0 <= fraction <= 1.0:
        raise FeatureError("fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    if level == "deployment":
        keys = sorted(set(t.deployments))
        perm = rng.permutation(len(keys))
        n_train = int(round(fraction * len(keys)))
        train_keys = {keys[i] for i in perm[:n_train]}
        mask = np.array([d in train_keys for d in t.deployments], dtype=bool)
    elif level == "row":
        perm = rng.permutation(len(t))
        mask = np.zeros(len(t), dtype=bool)
        mask[perm[: int(round(fraction * len(t)))]] = True
    else:
        raise FeatureError(f"unknown split level {level!r}")
    return t.take(np.flatnonzero(mask)), t.take(np.flatnonzero(~mask))


# --- CSV -------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def to_csv_text(t: FeatureTable) -> str:
    buf = io.StringIO()
    buf.write(f"{FEATURES_MAGIC} granularity={t.schema.granularity}\n")
    buf.write("# onehot " + " ".join(f"{g}={a}:{b}" for g, a, b in t.schema.onehot) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["entity_id", "deployment", "bss_id", *t.schema.columns, "label"])
    for i in range(len(t)):
        label = "" if t.y is None else _fmt(t.y[i])
        w.writerow([t.ids[i], t.deployments[i], t.bss[i], *map(_fmt, t.X[i]), label])
    return buf.getvalue()


def write_table(t: FeatureTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(to_csv_text(t))


def from_csv_text(text: str, path="<string>") -> FeatureTable:
    lines = text.splitlines()
    if len(lines) < 3 or not lines[0].startswith(FEATURES_MAGIC):
        raise FeatureError(f"{path}: line 1: expected header {FEATURES_MAGIC!r}")
    meta = dict(tok.split("=", 1) for tok in lines[0][len(FEATURES_MAGIC):].split() if "=" in tok)
    if not lines[1].startswith("# onehot"):
        raise FeatureError(f"{path}: line 2: expected one-hot group declaration")
    groups = []
    for tok in lines[1][len("# onehot"):].split():
        g, span = tok.split("=")
        a, b = span.split(":")
        groups.append((g, int(a), int(b)))
    reader = csv.reader(lines[2:])
    header = next(reader)
    if header[:3] != ["entity_id", "deployment", "bss_id"] or header[-1] != "label":
        raise FeatureError(f"{path}: line 3: malformed column header")
    schema = FeatureSchema(tuple(header[3:-1]), tuple(groups), meta.get("granularity", "STA"))
    ids, deps, bsss, rows, labels = [], [], [], [], []
    for lineno, row in enumerate(reader, start=4):
        if len(row) != len(header):
            raise FeatureError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        deps.append(row[1])
        bsss.append(row[2])
        vals = []
        for col, raw in zip(header[3:-1], row[3:-1]):
            try:
                vals.append(float(raw))
            except ValueError:
                raise FeatureError(f"{path}: line {lineno}, column {col}: not a number: {raw!r}") from None
        rows.append(vals)
        labels.append(row[-1])
    has = [lab != "" for lab in labels]
    if any(has) and not all(has):
        raise FeatureError(f"{path}: some rows are missing labels")
    y = np.array([float(v) for v in labels]) if labels and all(has) else None
    X = np.array(rows, dtype=float).reshape(len(rows), schema.width)
    return FeatureTable(schema, ids, deps, bsss, X, y)


def read_table(path) -> FeatureTable:
    with open(path, encoding="utf-8", newline="") as f:
        return from_csv_text(f.read(), os.fspath(path))
