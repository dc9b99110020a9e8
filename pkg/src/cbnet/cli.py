"""Command-line pipeline: generate -> simulate -> build-dataset -> train -> predict -> evaluate.

Every command writes a ``manifest.json`` next to its outputs recording the
resolved settings, their hash, the seeds, the package version and the sha256
of every input and output file. Paths and timestamps are left out so that two
identical runs produce identical manifests.

Settings come from flags, then from an optional ``--config`` file of flat
``section.key = value`` lines (``#`` starts a comment), then from defaults.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from cbnet import __version__
from cbnet import deployment as dep
from cbnet import evaluation as ev
from cbnet import features as F
from cbnet import macsim, rf
from cbnet.channelization import POLICIES
from cbnet.predictors import graphnet, presets
from cbnet.predictors.models import GraphModel, load_model, save_model

MANIFEST = "manifest.json"


class CliError(Exception):
    pass


# --- configuration ---------------------------------------------------------

def parse_config(text: str, path="<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or "." not in key or not value.strip():
            raise CliError(f"{path}: line {lineno}: expected 'section.key = value'")
        if key in out:
            raise CliError(f"{path}: line {lineno}: duplicate key {key}")
        out[key] = value.strip()
    return out


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# (section, key, type, default, help); every key is also a --flag
RF_OPTS = [
    ("rf", "pl0", float, 40.0, "path loss at 1 m (dB)"),
    ("rf", "gamma", float, 4.0, "path-loss exponent"),
    ("rf", "noise_floor", float, -95.0, "noise floor per 20 MHz (dBm)"),
    ("rf", "mcs_table", str, "desk", "MCS preset name or 'sinr:rate,...' pairs"),
]
OPTIONS = {
    "generate": [
        ("generate", "spec", str, None, "comma-separated scenario names (default: all)"),
        ("generate", "seed", int, 0, "master seed"),
        ("generate", "count", int, None, "deployments per scenario (overrides the table)"),
        ("generate", "scale", str, "full", "'full' or 'desk' (STA bounds halved)"),
        ("generate", "r_sta", float, 15.0, "STA placement radius (m)"),
        ("generate", "tx_power", float, 20.0, "transmit power (dBm)"),
        ("generate", "cca", float, -82.0, "CCA threshold (dBm)"),
    ],
    "simulate": [
        ("simulate", "policy", str, "AM", "channel bonding policy"),
        ("simulate", "seed", int, 0, "simulation seed"),
        ("simulate", "duration_s", float, 1.0, "simulated time per deployment (s)"),
        ("simulate", "slot_us", int, 9, "slot time (us)"),
        ("simulate", "difs_us", int, 34, "DIFS (us)"),
        ("simulate", "cw_slots", int, 16, "contention window (slots)"),
        ("simulate", "txop_ms", float, 5.0, "TXOP duration (ms)"),
    ] + RF_OPTS,
    "build-dataset": [
        ("dataset", "fraction", float, 0.8, "training fraction; 1 disables the split"),
        ("dataset", "seed", int, 0, "split seed"),
        ("dataset", "split_level", str, "deployment", "'deployment' or 'row'"),
        ("dataset", "variance_threshold", float, 1e-12, "variance report threshold"),
    ] + RF_OPTS,
    "train": [
        ("train", "model", str, "preset:ramon", "preset:<name>"),
        ("train", "seed", int, 0, "model seed"),
        ("train", "full", _bool, False, "published (not desk-scale) network sizes"),
        ("train", "epochs", int, None, "override the preset's epoch count"),
    ],
    "predict": [
        ("predict", "split", str, None, "'train', 'validation' or 'all'"),
    ],
    "evaluate": [
        ("evaluate", "threshold", float, 10.0, "error threshold for the share table (Mbps)"),
        ("evaluate", "bin_width", float, 2.0, "histogram bin width (Mbps)"),
        ("evaluate", "assert_mae_ratio", float, None, "fail unless MAE <= ratio x baseline MAE"),
    ],
}


def resolve(command: str, args, config: dict[str, str]) -> dict:
    """Flag, else config entry, else default, for every option of ``command``."""
    out = {}
    for section, key, typ, default, _ in OPTIONS[command]:
        flag = getattr(args, key, None)
        if flag is not None:
            value = flag
        elif f"{section}.{key}" in config:
            try:
                value = typ(config[f"{section}.{key}"])
            except ValueError as exc:
                raise CliError(f"config {section}.{key}: {exc}") from None
        else:
            value = default
        out[key] = value
    return out


def check_config_keys(config: dict[str, str]) -> None:
    known = {f"{s}.{k}" for opts in OPTIONS.values() for s, k, *_ in opts}
    unknown = sorted(set(config) - known)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")


def rf_config(s: dict) -> rf.RfConfig:
    try:
        table = rf.parse_mcs_table(s["mcs_table"])
        return rf.RfConfig(s["pl0"], s["gamma"], s["noise_floor"], table)
    except ValueError as exc:
        raise CliError(f"rf settings: {exc}") from None


# --- manifests -------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def settings_hash(settings: dict) -> str:
    return hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()


def write_manifest(out_dir: Path, command: str, settings: dict, seeds: dict, inputs: dict) -> None:
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            files[p.relative_to(out_dir).as_posix()] = sha256_file(p)
    doc = {"tool": "cbnet", "version": __version__, "command": command, "settings": settings,
           "config_hash": settings_hash(settings), "seeds": seeds, "inputs": inputs,
           "files": files}
    (out_dir / MANIFEST).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def input_digest(path: Path) -> str:
    """Manifest hash of a stage directory, or the file hash of a single file."""
    if path.is_dir():
        m = path / MANIFEST
        return sha256_file(m) if m.exists() else "no-manifest"
    return sha256_file(path)


def expect_stage(in_dir: Path, command: str) -> None:
    m = in_dir / MANIFEST
    if not in_dir.is_dir():
        raise CliError(f"{in_dir}: not a directory")
    if m.exists():
        got = json.loads(m.read_text(encoding="utf-8")).get("command")
        if got != command:
            raise CliError(f"{in_dir}: holds output of '{got}', expected output of '{command}'")


def _out_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {p}: {exc.strerror}") from None
    if not os.access(p, os.W_OK):
        raise CliError(f"{p}: not writable")
    return p


def _stage_files(in_dir: Path) -> list[Path]:
    files = sorted(p for p in in_dir.glob("*/*.csv"))
    if not files:
        raise CliError(f"{in_dir}: no <scenario>/<index>.csv files")
    return files


def _key(path: Path) -> str:
    return f"{path.parent.name}/{path.stem}"


# --- commands --------------------------------------------------------------

def cmd_generate(args, s: dict) -> int:
    names = s["spec"].split(",") if s["spec"] else [x.name for x in dep.builtin_specs()]
    if s["scale"] not in ("full", "desk"):
        raise CliError("scale must be 'full' or 'desk'")
    specs = []
    for n in names:
        try:
            spec = dep.spec_by_name(n.strip())
            if s["scale"] == "desk":
                spec = dep.desk_scale(spec)
            spec = dataclasses.replace(spec, r_sta=s["r_sta"], tx_power=s["tx_power"], cca=s["cca"])
            if s["count"] is not None:
                spec = dataclasses.replace(spec, deployment_count=s["count"])
        except dep.DeploymentError as exc:
            raise CliError(str(exc)) from None
        specs.append(spec)
    out = _out_dir(args.out)
    n = 0
    for spec in specs:
        sub = _out_dir(out / spec.name)
        for i in range(spec.deployment_count):
            dep.write_csv(dep.generate(spec, i, s["seed"]), sub / f"{i:03d}.csv")
            n += 1
    write_manifest(out, "generate", s, {"seed": s["seed"]}, {})
    print(f"wrote {n} deployments to {out}")
    return 0


def _simulate_task(task):
    path, cfg, stream = task
    try:
        d = dep.read_csv(path)
        return macsim.simulate(d, cfg, stream), None
    except Exception as exc:  # noqa: BLE001
        return None, f"{path}: {exc}"


def cmd_simulate(args, s: dict) -> int:
    in_dir = Path(args.input)
    expect_stage(in_dir, "generate")
    if s["policy"] not in POLICIES:
        raise CliError(f"unknown policy {s['policy']!r}; valid: {', '.join(POLICIES)}")
    try:
        cfg = macsim.SimConfig(s["duration_s"], s["slot_us"], s["difs_us"], s["cw_slots"],
                               s["txop_ms"], s["policy"], s["seed"], rf_config(s))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    files = _stage_files(in_dir)
    # stream = deployment index within its scenario, so results ignore file order
    tasks = [(p, cfg, int(p.stem)) for p in files]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_simulate_task, tasks))
    else:
        outcomes = [_simulate_task(t) for t in tasks]
    out = _out_dir(args.out)
    errors = []
    for p, (res, err) in zip(files, outcomes):
        if err:
            errors.append(err)
            continue
        _out_dir(out / p.parent.name)
        macsim.write_results_csv(res, out / p.parent.name / p.name)
    write_manifest(out, "simulate", s, {"seed": s["seed"]}, {"deployments": input_digest(in_dir)})
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    print(f"simulated {len(files) - len(errors)}/{len(files)} deployments into {out}")
    return 1 if errors else 0


def _load_pairs(dep_dir: Path, res_dir: Path):
    deps, results, errors = {}, {}, []
    for p in _stage_files(dep_dir):
        key = _key(p)
        rp = res_dir / p.parent.name / p.name
        try:
            deps[key] = dep.read_csv(p)
            results[key] = macsim.read_results_csv(rp)
        except (OSError, ValueError) as exc:
            errors.append(f"{key}: {exc}")
            deps.pop(key, None)
    return deps, results, errors


def _write_csv_rows(path: Path, rows) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)


def cmd_build_dataset(args, s: dict) -> int:
    dep_dir, res_dir = Path(args.deployments), Path(args.results)
    expect_stage(dep_dir, "generate")
    expect_stage(res_dir, "simulate")
    if s["split_level"] not in ("deployment", "row"):
        raise CliError("split_level must be 'deployment' or 'row'")
    if not 0.0 <= s["fraction"] <= 1.0:
        raise CliError("fraction must lie in [0, 1]")
    rf_cfg = rf_config(s)
    deps, results, errors = _load_pairs(dep_dir, res_dir)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    if not deps:
        raise CliError("no usable deployment/result pairs")
    out = _out_dir(args.out)
    sta = F.concat([F.extract_sta(deps[k], results[k], k) for k in deps])
    bss = F.aggregate_bss(sta, F.airtime_lookup(results, deps))
    graphs = [graphnet.build_graph(deps[k], results[k], k, rf_cfg) for k in deps]
    tables = {"sta": sta, "bss": bss}
    for name, t in tables.items():
        F.write_table(t, out / f"{name}.csv")
    graphnet.write_graphs(graphs, out / "graphs.jsonl")
    if s["fraction"] < 1.0:
        for name, t in tables.items():
            tr, va = F.split(t, s["fraction"], s["seed"], s["split_level"])
            F.write_table(tr, out / f"{name}_train.csv")
            F.write_table(va, out / f"{name}_validation.csv")
        # graphs are whole deployments; reuse the deployment-level partition
        tr, _ = F.split(sta, s["fraction"], s["seed"], "deployment")
        keep = set(tr.deployments)
        graphnet.write_graphs([g for g in graphs if g.key in keep], out / "graphs_train.jsonl")
        graphnet.write_graphs([g for g in graphs if g.key not in keep], out / "graphs_validation.jsonl")
    for name, t in tables.items():
        C = F.correlation_matrix(t.X)
        cols = list(t.schema.columns)
        _write_csv_rows(out / f"correlation_{name}.csv",
                        [["feature", *cols]] + [[c, *(repr(float(v)) for v in row)] for c, row in zip(cols, C)])
        rep = F.variance_report(t, s["variance_threshold"])
        _write_csv_rows(out / f"variance_{name}.csv",
                        [["feature", "variance", "below_threshold"]]
                        + [[c, repr(v), int(b)] for c, v, b in rep])
    write_manifest(out, "build-dataset", s, {"split_seed": s["seed"]},
                   {"deployments": input_digest(dep_dir), "results": input_digest(res_dir)})
    print(f"{len(sta)} STA rows, {len(bss)} BSS rows, {len(graphs)} graphs -> {out}")
    return 1 if errors else 0


def _preset_name(model: str) -> str:
    name = model.split(":", 1)[1] if model.startswith("preset:") else model
    if name not in presets.PRESETS:
        raise CliError(f"unknown model {model!r}; valid: {', '.join('preset:' + p for p in presets.PRESETS)}")
    return name


def _dataset_file(ds: Path, stem: str, split: str | None, suffix: str) -> Path:
    if split in (None, "train", "validation"):
        want = split or "train"
        p = ds / f"{stem}_{want}{suffix}"
        if p.exists():
            return p
        if split is not None:
            raise CliError(f"{p}: missing; build the dataset with a fraction below 1")
    p = ds / f"{stem}{suffix}"
    if not p.exists():
        raise CliError(f"{p}: missing")
    return p


def _with_epochs(model, epochs: int):
    est = model.estimator
    est.spec = dataclasses.replace(est.spec, epochs=epochs)
    return model


def cmd_train(args, s: dict) -> int:
    ds = Path(args.dataset)
    expect_stage(ds, "build-dataset")
    name = _preset_name(s["model"])
    model = presets.make_model(name, s["seed"], s["full"])
    if s["epochs"] is not None:
        if not hasattr(model.estimator, "spec"):
            raise CliError(f"preset {name} has no epoch setting")
        _with_epochs(model, s["epochs"])
    if isinstance(model, GraphModel):
        src = _dataset_file(ds, "graphs", None, ".jsonl")
        model.fit(graphnet.read_graphs(src))
    else:
        src = _dataset_file(ds, model.granularity.lower(), None, ".csv")
        model.fit(F.read_table(src))
    out = _out_dir(args.out)
    save_model(model, out / "model.txt")
    write_manifest(out, "train", s, {"model_seed": s["seed"]},
                   {"dataset": input_digest(ds), "training_file": sha256_file(src)})
    print(f"trained {name} on {src.name} -> {out / 'model.txt'}")
    return 0


def cmd_predict(args, s: dict) -> int:
    ds = Path(args.dataset)
    expect_stage(ds, "build-dataset")
    model_path = Path(args.model)
    if model_path.is_dir():
        model_path = model_path / "model.txt"
    try:
        model = load_model(model_path)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from None
    split = s["split"]
    if split is not None and split not in ("train", "validation", "all"):
        raise CliError("split must be 'train', 'validation' or 'all'")
    if split is None:
        split = "validation" if (ds / "sta_validation.csv").exists() else "all"
    which = None if split == "all" else split
    if isinstance(model, GraphModel):
        src = _dataset_file(ds, "graphs", which, ".jsonl")
        graphs = graphnet.read_graphs(src)
        ids, deps, bss, pred, truth = [], [], [], [], []
        for g, p in zip(graphs, model.predict(graphs)):
            for i in np.flatnonzero(g.sta_mask):
                ids.append(f"{g.key}/{g.node_ids[i]}")
                deps.append(g.key)
                bss.append(g.bss[i])
                pred.append(p[i])
                truth.append(g.y[i] if g.y is not None else np.nan)
        truth = np.array(truth, dtype=float)
        preds = ev.Predictions(model.name, "STA", ids, deps, bss, np.array(pred),
                               truth if (~np.isnan(truth)).any() else None, model.train_mean)
    else:
        src = _dataset_file(ds, model.granularity.lower(), which, ".csv")
        t = F.read_table(src)
        preds = ev.Predictions(model.name, model.granularity, t.ids, t.deployments, t.bss,
                               model.predict(t), t.y, model.train_mean)
    out = _out_dir(args.out)
    ev.write_predictions(preds, out / "predictions.csv")
    write_manifest(out, "predict", {**s, "split": split}, {},
                   {"model": sha256_file(model_path), "dataset": input_digest(ds),
                    "input_file": sha256_file(src)})
    print(f"{len(preds.ids)} predictions -> {out / 'predictions.csv'}")
    return 0


def cmd_evaluate(args, s: dict) -> int:
    path = Path(args.predictions)
    if path.is_dir():
        path = path / "predictions.csv"
    try:
        preds = ev.read_predictions(path)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from None
    if s["bin_width"] <= 0:
        raise CliError("bin_width must be positive")
    rep = ev.report(preds, s["threshold"], s["bin_width"])
    out = _out_dir(args.out)
    ev.write_report(rep, out)
    write_manifest(out, "evaluate", s, {}, {"predictions": sha256_file(path)})
    print(ev.summary_table(rep))
    ratio = s["assert_mae_ratio"]
    if ratio is not None:
        m, b = rep.by_scenario["all"].mae, rep.baseline_by_scenario["all"].mae
        ok = m <= ratio * b
        print(f"assert MAE {m:.4f} <= {ratio} x baseline {b:.4f}: {'PASS' if ok else 'FAIL'}")
        if not ok:
            return 1
    return 0


COMMANDS = {
    "generate": cmd_generate, "simulate": cmd_simulate, "build-dataset": cmd_build_dataset,
    "train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cbnet {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' settings file")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    sub = p.add_subparsers(dest="command", required=True)
    io_args = {
        "generate": [("--out", "output directory")],
        "simulate": [("--in", "deployments directory"), ("--out", "results directory")],
        "build-dataset": [("--deployments", "deployments directory"),
                          ("--results", "results directory"), ("--out", "dataset directory")],
        "train": [("--dataset", "dataset directory"), ("--out", "model directory")],
        "predict": [("--model", "model file or directory"), ("--dataset", "dataset directory"),
                    ("--out", "predictions directory")],
        "evaluate": [("--predictions", "predictions file or directory"), ("--out", "report directory")],
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        for flag, help_ in io_args[name]:
            dest = "input" if flag == "--in" else flag[2:].replace("-", "_")
            sp.add_argument(flag, dest=dest, required=True, help=help_)
        for _, key, typ, default, help_ in OPTIONS[name]:
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None,
                            help=f"{help_} (default: {default})")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = {}
        if args.config:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise CliError(f"cannot read config: {exc.strerror}") from None
            config = parse_config(text, args.config)
            check_config_keys(config)
        if args.jobs < 1:
            raise CliError("--jobs must be >= 1")
        settings = resolve(args.command, args, config)
        return COMMANDS[args.command](args, settings)
    except CliError as exc:
        print(f"cbnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (dep.DeploymentError, macsim.ResultFormatError, F.FeatureError, ev.EvalError) as exc:
        print(f"cbnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
