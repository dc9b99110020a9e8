"""Scoring: MAE/RMSE per scenario, error histograms, share of small errors."""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PREDICTIONS_MAGIC = "# cbnet-predictions v1"
PRED_COLUMNS = ("entity_id", "deployment", "bss_id", "prediction", "truth", "baseline")


class EvalError(ValueError):
    pass


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float).reshape(-1)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if p.size != t.size:
        raise EvalError(f"length mismatch: {p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise EvalError("cannot score an empty set")
    # negative throughput is meaningless
    return np.maximum(p, 0.0), np.maximum(t, 0.0)


def mae(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def rmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    e = p - t
    return math.sqrt(float(np.mean(e * e)))


def share_below(pred, truth, threshold: float = 10.0) -> float:
    """Fraction of absolute errors strictly below ``threshold`` Mbps."""
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t) < threshold))


def error_histogram(pred, truth, bin_width: float = 2.0, top: float = 50.0):
    """Counts of |error| in [k*w, (k+1)*w) up to ``top``, plus one overflow bin."""
    p, t = _pair(pred, truth)
    err = np.abs(p - t)
    edges = np.arange(0.0, top + bin_width / 2, bin_width)
    idx = np.minimum(np.floor(err / bin_width).astype(int), len(edges) - 1)
    counts = np.bincount(idx, minlength=len(edges))
    lows = edges
    highs = np.append(edges[1:], math.inf)
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(lows, highs, counts)]


def label_summary(labels) -> dict:
    y = np.asarray(labels, dtype=float)
    q = np.percentile(y, [0, 25, 50, 75, 100])
    return {"n": int(y.size), "min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]}


@dataclass
class Scores:
    n: int
    mae: float
    rmse: float
    share_below: float


@dataclass
class EvalReport:
    model: str
    granularity: str
    threshold: float
    by_scenario: dict[str, Scores] = field(default_factory=dict)
    baseline_by_scenario: dict[str, Scores] = field(default_factory=dict)
    bss_by_scenario: dict[str, Scores] = field(default_factory=dict)
    bss_baseline_by_scenario: dict[str, Scores] = field(default_factory=dict)
    histogram: list[tuple[float, float, int]] = field(default_factory=list)
    labels: dict[str, dict] = field(default_factory=dict)


def _scores(p, t, thr) -> Scores:
    return Scores(len(np.atleast_1d(p)), mae(p, t), rmse(p, t), share_below(p, t, thr))


@dataclass
class Predictions:
    model: str
    granularity: str
    ids: list[str]
    deployments: list[str]
    bss: list[str]
    pred: np.ndarray
    truth: np.ndarray | None
    baseline: float

    @property
    def scenarios(self) -> list[str]:
        return [d.split("/")[0] for d in self.deployments]


def _group_sum(keys: Sequence, values: np.ndarray) -> tuple[list, np.ndarray]:
    order: dict = {}
    for k in keys:
        order.setdefault(k, len(order))
    out = np.zeros(len(order))
    for k, v in zip(keys, values):
        out[order[k]] += v
    return list(order), out


def report(preds: Predictions, threshold: float = 10.0, bin_width: float = 2.0) -> EvalReport:
    """Everything in :class:`EvalReport`, computed from predictions and labels only."""
    if preds.truth is None:
        raise EvalError("predictions carry no labels")
    rep = EvalReport(preds.model, preds.granularity, threshold)
    # rows without a label (NaN truth) are left out of every score
    known = ~np.isnan(preds.truth)
    scen = np.array(preds.scenarios)
    names = sorted(set(preds.scenarios))
    base = np.full(len(preds.pred), preds.baseline)
    for s in names + ["all"]:
        m = known & (True if s == "all" else scen == s)
        if not m.any():
            warnings.warn(f"scenario {s} has no labelled rows; skipped", stacklevel=2)
            continue
        rep.by_scenario[s] = _scores(preds.pred[m], preds.truth[m], threshold)
        rep.baseline_by_scenario[s] = _scores(base[m], preds.truth[m], threshold)
        rep.labels[s] = label_summary(preds.truth[m])
    if not known.any():
        return rep
    rep.histogram = error_histogram(preds.pred[known], preds.truth[known], bin_width)
    if preds.granularity == "STA":
        # BSS-level view: sum STA predictions per BSS
        keys = [(d, b) for d, b, k in zip(preds.deployments, preds.bss, known) if k]
        gk, gp = _group_sum(keys, np.maximum(preds.pred[known], 0.0))
        _, gt = _group_sum(keys, preds.truth[known])
        _, gb = _group_sum(keys, base[known])
        gs = np.array([k[0].split("/")[0] for k in gk])
        for s in names + ["all"]:
            m = np.ones(len(gs), bool) if s == "all" else gs == s
            if m.any():
                rep.bss_by_scenario[s] = _scores(gp[m], gt[m], threshold)
                rep.bss_baseline_by_scenario[s] = _scores(gb[m], gt[m], threshold)
    return rep


def _fmt(v) -> str:
    return repr(float(v))


def write_report(rep: EvalReport, out_dir) -> list[str]:
    """Emit the four report CSVs; returns their file names."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    rows = [("model", "granularity", "scenario", "n", "mae", "rmse")]
    for gran, table, btable in ((rep.granularity, rep.by_scenario, rep.baseline_by_scenario),
                                ("BSS", rep.bss_by_scenario, rep.bss_baseline_by_scenario)):
        for s, sc in table.items():
            rows.append((rep.model, gran, s, sc.n, _fmt(sc.mae), _fmt(sc.rmse)))
            b = btable[s]
            rows.append(("baseline-mean", gran, s, b.n, _fmt(b.mae), _fmt(b.rmse)))
    files["mae_by_scenario.csv"] = rows
    files["error_histogram.csv"] = [("model", "bin_lo", "bin_hi", "count")] + [
        (rep.model, _fmt(lo), _fmt(hi), c) for lo, hi, c in rep.histogram]
    files["label_boxplot.csv"] = [("scenario", "n", "min", "q1", "median", "q3", "max")] + [
        (s, d["n"], *(_fmt(d[k]) for k in ("min", "q1", "median", "q3", "max")))
        for s, d in rep.labels.items()]
    rows = [("model", "scenario", "threshold", "share")]
    for s, sc in rep.by_scenario.items():
        rows.append((rep.model, s, _fmt(rep.threshold), _fmt(sc.share_below)))
        rows.append(("baseline-mean", s, _fmt(rep.threshold), _fmt(rep.baseline_by_scenario[s].share_below)))
    files["share_below.csv"] = rows
    for name, rows in files.items():
        with open(os.path.join(out_dir, name), "w", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerows(rows)
    return sorted(files)


def summary_table(rep: EvalReport) -> str:
    lines = [f"model={rep.model} granularity={rep.granularity} (negative predictions clamped to 0)",
             f"{'scenario':<12}{'n':>7}{'MAE':>10}{'RMSE':>10}{'<' + format(rep.threshold, 'g') + 'Mbps':>10}"
             f"{'base MAE':>10}"]
    for s, sc in rep.by_scenario.items():
        b = rep.baseline_by_scenario[s]
        lines.append(f"{s:<12}{sc.n:>7}{sc.mae:>10.3f}{sc.rmse:>10.3f}{sc.share_below:>10.3f}{b.mae:>10.3f}")
    return "\n".join(lines)


def write_predictions(p: Predictions, path) -> None:
    buf = io.StringIO()
    buf.write(f"{PREDICTIONS_MAGIC} granularity={p.granularity} model={p.model}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PRED_COLUMNS)
    for i in range(len(p.ids)):
        truth = "" if p.truth is None or math.isnan(p.truth[i]) else _fmt(p.truth[i])
        w.writerow([p.ids[i], p.deployments[i], p.bss[i], _fmt(p.pred[i]), truth, _fmt(p.baseline)])
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(buf.getvalue())


def read_predictions(path) -> Predictions:
    with open(path, encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith(PREDICTIONS_MAGIC):
        raise EvalError(f"{path}: line 1: expected header {PREDICTIONS_MAGIC!r}")
    meta = dict(tok.split("=", 1) for tok in lines[0][len(PREDICTIONS_MAGIC):].split() if "=" in tok)
    reader = csv.reader(lines[1:])
    if tuple(next(reader, ())) != PRED_COLUMNS:
        raise EvalError(f"{path}: line 2: expected columns {','.join(PRED_COLUMNS)}")
    ids, deps, bss, pred, truth, base = [], [], [], [], [], []
    for lineno, row in enumerate(reader, start=3):
        if len(row) != len(PRED_COLUMNS):
            raise EvalError(f"{path}: line {lineno}: expected {len(PRED_COLUMNS)} fields")
        try:
            pred.append(float(row[3]))
            truth.append(math.nan if row[4] == "" else float(row[4]))
            base.append(float(row[5]))
        except ValueError:
            raise EvalError(f"{path}: line {lineno}: non-numeric value") from None
        ids.append(row[0])
        deps.append(row[1])
        bss.append(row[2])
    truth = np.array(truth, dtype=float)
    return Predictions(meta.get("model", "?"), meta.get("granularity", "STA"), ids, deps, bss,
                       np.array(pred), truth if (~np.isnan(truth)).any() else None,
                       base[0] if base else 0.0)
