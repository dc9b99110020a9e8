"""Acceptance criteria, one or more tests each; the summary hook in conftest
prints a PASS/FAIL line per criterion at the end of the run."""
import csv
import math
import os
import time
import warnings

import numpy as np
import pytest

from cbnet import channelization as chz
from cbnet import cli
from cbnet import deployment as dep
from cbnet import evaluation as ev
from cbnet import features as F
from cbnet import macsim, rf
from cbnet.predictors import (STA_PRESETS, GradientBoosting, KNNRegressor, RandomForest,
                              RegressionTree, graphnet, make_model, nn)
from builders import bss, deployment
from gradcheck import max_grad_error, three_layer_net
from oracles import oracle_am, oracle_scb, renewal_throughput

criterion = pytest.mark.criterion
JOBS = os.cpu_count() or 1
TRAINING = ",".join(s.name for s in dep.builtin_specs() if s.name.startswith("training"))


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# -- 1 ----------------------------------------------------------------------

@criterion(1, "SCB/AM equal the subset-enumeration oracle on every primary, range and mask")
def test_c1_policy_oracle(record_property):
    t0 = time.perf_counter()
    checked = 0
    for lo, hi in chz.all_ranges():
        for p in range(lo, hi + 1):
            for mask in range(256):
                assert chz.select_am(p, lo, hi, mask) == oracle_am(p, lo, hi, mask)
                try:
                    want = oracle_scb(p, lo, hi, mask)
                except ValueError:
                    with pytest.raises(chz.ChannelError):
                        chz.select_scb(p, lo, hi, mask)
                else:
                    assert chz.select_scb(p, lo, hi, mask) == want
                checked += 1
    elapsed = time.perf_counter() - t0
    record_property("note", f"{checked} (primary, range, mask) cases over {len(chz.all_ranges())} "
                            f"ranges in {elapsed:.2f} s")
    assert elapsed < 5.0


# -- 2 ----------------------------------------------------------------------

@criterion(2, "PU draws uniformly among free candidate bonds (chi-square, alpha 0.01)")
def test_c2_pu_uniform(record_property):
    stats = pytest.importorskip("scipy.stats")
    primary, lo, hi = 0, 0, 7
    failed = total = 0
    for mask in range(256):
        cands = chz.free_bonds(primary, lo, hi, mask)
        if len(cands) < 2:
            continue
        rng = np.random.default_rng([primary, mask])
        pos = {b: i for i, b in enumerate(cands)}
        counts = np.zeros(len(cands))
        for _ in range(10_000):
            counts[pos[chz.select_pu(primary, lo, hi, mask, rng)]] += 1
        total += 1
        failed += stats.chisquare(counts).pvalue < 0.01
    record_property("note", f"{failed}/{total} masks rejected at alpha 0.01")
    assert total > 0 and failed < 0.01 * total


# -- 3 ----------------------------------------------------------------------

@criterion(3, "AP throughput is exactly the sum of its STAs; airtimes lie in [0, 1]")
def test_c3_conservation(record_property):
    specs = [dep.desk_scale(s) for s in dep.builtin_specs()]
    ds = [dep.generate(specs[i % len(specs)], i, seed=11) for i in range(50)]
    results = macsim.batch_simulate(ds, macsim.SimConfig(duration_s=0.5), jobs=JOBS, streams=range(50))
    for d, r in zip(ds, results):
        for b in d.bsss:
            total = 0.0
            for s in b.stas:
                total += r.sta_throughput[s.code]
            assert r.ap_throughput[b.ap.code] == total
            assert all(0.0 <= a <= 1.0 for a in r.ap_airtime[b.ap.code])
    record_property("note", f"{len(ds)} deployments, {sum(len(d.aps) for d in ds)} APs")


# -- 4 ----------------------------------------------------------------------

def _isolated(lo, hi, primary, sta=(11.0, 10.0)):
    return deployment(bss(0, (10.0, 10.0), [sta], primary, lo, hi))


@criterion(4, "isolated BSS matches the renewal oracle within 5%; SCB and AM within 1%")
@pytest.mark.parametrize("primary,lo,hi", [(0, 0, 0), (3, 2, 3), (5, 4, 7), (2, 0, 7)])
def test_c4_isolated(record_property, primary, lo, hi):
    d = _isolated(lo, hi, primary)
    cfg = macsim.SimConfig(duration_s=2.0)
    am = macsim.simulate(d, cfg).ap_throughput["AP00"]
    scb = macsim.simulate(d, macsim.SimConfig(duration_s=2.0, policy="SCB")).ap_throughput["AP00"]
    width = hi - lo + 1
    rate = rf.rate(rf.rssi(20.0, width, 1.0) - rf.DEFAULT_RF.noise_floor, width)
    (want,), _ = renewal_throughput([rate])
    record_property("note", f"range [{lo},{hi}]: AM {am:.2f}, oracle {want:.2f}, SCB {scb:.2f} Mbps")
    assert am == pytest.approx(want, rel=0.05)
    assert scb == pytest.approx(am, rel=0.01)


# -- 5 ----------------------------------------------------------------------

@criterion(5, "two identical co-channel BSSs split airtime and throughput evenly")
def test_c5_symmetric(record_property):
    cfg = macsim.SimConfig(duration_s=2.0)
    alone = macsim.simulate(_isolated(0, 0, 0), cfg).ap_throughput["AP00"]
    two = deployment(bss(0, (10.0, 10.0), [(11.0, 10.0)], 0, 0, 0),
                     bss(1, (12.0, 10.0), [(13.0, 10.0)], 0, 0, 0))
    r = macsim.simulate(two, cfg)
    for ap in ("AP00", "AP01"):
        air, share = r.ap_airtime[ap][0], r.ap_throughput[ap] / alone
        record_property("note", f"{ap}: airtime {air:.3f}, throughput share {share:.3f}")
        assert air == pytest.approx(0.5, abs=0.05)
        assert share == pytest.approx(0.5, abs=0.10)


# -- 6 ----------------------------------------------------------------------

@criterion(6, "backprop matches central differences for every layer kind")
@pytest.mark.parametrize("loss", [nn.mse, nn.rmse], ids=["mse", "rmse"])
def test_c6_gradients(record_property, loss):
    rng = np.random.default_rng(6)
    X = rng.normal(size=(10, 4))
    y = rng.uniform(0.5, 2.0, size=10)
    err = max_grad_error(three_layer_net(6), X, y, loss)
    record_property("note", f"max relative error {err:.2e} (Dense, BatchNorm1d, PReLU, ReLU, Identity)")
    assert err < 1e-3


# -- 7 ----------------------------------------------------------------------

@criterion(7, "masked loss on the hand-derived example")
def test_c7_masked_loss():
    loss, _ = nn.masked_rmse(np.array([10.0, 10.0]), np.array([12.0, 13.0]), np.array([0, 0]),
                             np.array([25.0]))
    assert abs(loss - math.sqrt(38 / 3)) <= 1e-12


# -- 8, 9 -------------------------------------------------------------------

@pytest.fixture(scope="session")
def training_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("c8")
    t0 = time.perf_counter()
    codes = [
        _run("generate", "--spec", TRAINING, "--scale", "desk", "--seed", 0, "--out", root / "dep"),
        _run("simulate", "--in", root / "dep", "--out", root / "res", "--jobs", JOBS),
        _run("build-dataset", "--deployments", root / "dep", "--results", root / "res",
             "--out", root / "ds"),
        _run("train", "--dataset", root / "ds", "--model", "preset:ramon", "--out", root / "model"),
        _run("predict", "--model", root / "model", "--dataset", root / "ds", "--out", root / "pred"),
        _run("evaluate", "--predictions", root / "pred", "--out", root / "rep",
             "--assert-mae-ratio", 0.6),
    ]
    return root, codes, time.perf_counter() - t0


@criterion(8, "ramon on BSS features beats 0.6 x mean-predictor MAE on held-out data")
def test_c8_learning_beats_baseline(record_property, training_run):
    root, codes, elapsed = training_run
    assert codes[:5] == [0] * 5
    assert len(list((root / "dep").glob("*/*.csv"))) == 600
    with open(root / "rep" / "mae_by_scenario.csv") as f:
        rows = {(r["model"], r["granularity"], r["scenario"]): float(r["mae"]) for r in csv.DictReader(f)}
    m, b = rows[("ramon", "BSS", "all")], rows[("baseline-mean", "BSS", "all")]
    record_property("note", f"held-out MAE {m:.3f} vs baseline {b:.3f} (ratio {m / b:.3f}); "
                            f"pipeline {elapsed / 60:.1f} min")
    assert codes[5] == 0
    assert m <= 0.6 * b
    assert elapsed < 15 * 60


@pytest.fixture(scope="session")
def test_sets(tmp_path_factory):
    root = tmp_path_factory.mktemp("c9")
    assert _run("generate", "--spec", "test1,test4", "--scale", "desk", "--seed", 1,
                "--out", root / "dep") == 0
    assert _run("simulate", "--in", root / "dep", "--out", root / "res", "--jobs", JOBS) == 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert _run("build-dataset", "--deployments", root / "dep", "--results", root / "res",
                    "--out", root / "ds", "--fraction", 1) == 0
    return root / "ds"


def _shares(pred, truth, scen):
    scen = np.asarray(scen)
    return {s: ev.share_below(pred[scen == s], truth[scen == s]) for s in ("test1", "test4")}


@criterion(9, "denser test deployments are predicted better (>= 3 of 5 STA presets)")
def test_c9_density_trend(record_property, training_run, test_sets):
    ds = training_run[0] / "ds"
    # dense-only training data: the 12-AP families
    dense = lambda key: key.startswith("training1")  # noqa: E731
    table = F.read_table(ds / "sta.csv")
    train = table.take([i for i, s in enumerate(table.scenarios) if dense(s)])
    graphs = [g for g in graphnet.read_graphs(ds / "graphs.jsonl") if dense(g.key)]
    test = F.read_table(test_sets / "sta.csv")
    test_graphs = graphnet.read_graphs(test_sets / "graphs.jsonl")
    holds = 0
    for name in STA_PRESETS:
        model = make_model(name, seed=0)
        if name == "atari":
            model.fit(graphs)
            pred, truth, scen = [], [], []
            for g, p in zip(test_graphs, model.predict(test_graphs)):
                sta = np.flatnonzero(g.sta_mask)
                pred += p[sta].tolist()
                truth += g.y[sta].tolist()
                scen += [g.key.split("/")[0]] * len(sta)
            sh = _shares(np.array(pred), np.array(truth), scen)
        else:
            model.fit(train)
            sh = _shares(model.predict(test), test.y, test.scenarios)
        holds += sh["test4"] >= sh["test1"]
        record_property("note", f"{name}: share<10 test1 {sh['test1']:.3f}, test4 {sh['test4']:.3f}")
    assert holds >= 3


# -- 10 ---------------------------------------------------------------------

def _small_pipeline(root, jobs):
    root.mkdir()
    cfg = root / "run.cfg"
    cfg.write_text("generate.scale = desk\ngenerate.count = 8\nsimulate.duration_s = 0.5\n")
    steps = [
        ("generate", "--spec", "training2c,test3", "--seed", 5, "--out", root / "dep"),
        ("simulate", "--in", root / "dep", "--out", root / "res", "--jobs", jobs),
        ("build-dataset", "--deployments", root / "dep", "--results", root / "res", "--out", root / "ds"),
    ]
    for preset, extra in (("ramon", ("--epochs", 25)), ("stc", ()), ("atari", ("--epochs", 5))):
        steps += [
            ("train", "--dataset", root / "ds", "--model", f"preset:{preset}", "--out", root / f"m-{preset}",
             *extra),
            ("predict", "--model", root / f"m-{preset}", "--dataset", root / "ds", "--out", root / f"p-{preset}"),
            ("evaluate", "--predictions", root / f"p-{preset}", "--out", root / f"r-{preset}"),
        ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        codes = [_run(*s, "--config", cfg, "--jobs", jobs) for s in steps]
    assert codes == [0] * len(steps)
    return _tree(root)


@criterion(10, "two runs with identical seeds give byte-identical outputs")
def test_c10_determinism(record_property, tmp_path):
    a = _small_pipeline(tmp_path / "a", 1)
    b = _small_pipeline(tmp_path / "b", max(2, JOBS))
    record_property("note", f"{len(a)} files compared (dataset, three models, predictions, reports)")
    assert sorted(a) == sorted(b)
    assert [k for k in a if a[k] != b[k]] == []


# -- 11 ---------------------------------------------------------------------

@criterion(11, "Yeo-Johnson, correlation, scaler, forest, knn and gbm unit examples")
def test_c11_yeo_johnson():
    for lam in (-2.0, -0.5, 0.0, 0.7, 2.0, 3.0):
        assert F.yeo_johnson(0.0, lam) == 0.0
    assert F.yeo_johnson(1.0, 1.0) == 1.0
    assert F.yeo_johnson(math.e - 1, 0.0) == pytest.approx(1.0, abs=1e-15)
    z = np.random.default_rng(0).normal(size=10_000)
    assert F.fit_yeo_johnson_lambda(z) == pytest.approx(1.0, abs=0.2)
    with pytest.raises(F.FeatureError):
        F.fit_yeo_johnson_lambda(np.full(50, 3.0))


@criterion(11, "Yeo-Johnson, correlation, scaler, forest, knn and gbm unit examples")
@pytest.mark.xfail(strict=True, reason="exp(normal) gives lambda -0.83, not 0 +- 0.2: the transform "
                                       "takes log(x + 1), not log(x); see the decision notes")
def test_c11_yeo_johnson_lognormal_literal(record_property):
    z = np.random.default_rng(0).normal(size=10_000)
    lam = F.fit_yeo_johnson_lambda(np.exp(z))
    record_property("note", f"fitted lambda for exp(normal): {lam:.3f}")
    assert lam == pytest.approx(0.0, abs=0.2)


@criterion(11, "Yeo-Johnson, correlation, scaler, forest, knn and gbm unit examples")
def test_c11_correlation_and_scaler():
    rng = np.random.default_rng(1)
    a = rng.normal(size=10_000)
    C = F.correlation_matrix(np.column_stack([a, a, -a, rng.normal(size=10_000)]))
    assert C[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert C[0, 2] == pytest.approx(-1.0, abs=1e-12)
    assert abs(C[0, 3]) < 0.05
    X = rng.gamma(2.0, 3.0, size=(500, 3)) * [1.0, 100.0, 0.01]
    T = F.Preprocessor().fit_transform(X)
    assert np.all(np.abs(T.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(T.std(axis=0) - 1) < 1e-9)


@criterion(11, "Yeo-Johnson, correlation, scaler, forest, knn and gbm unit examples")
def test_c11_forest_knn_gbm():
    f = RandomForest(n_trees=1, max_depth=1, bootstrap=False, max_features=None).fit([[0.0], [1.0]], [0.0, 10.0])
    assert f.predict([[0.49], [0.5], [3.0], [-1.0]]).tolist() == [0.0, 10.0, 10.0, 0.0]
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 3))
    y = rng.normal(size=120) * 5
    q = rng.normal(size=(300, 3)) * 3
    p = RandomForest(20, 6, seed=3).fit(X, y).predict(q)
    assert p.min() >= y.min() and p.max() <= y.max()
    assert np.all(RandomForest(5, seed=1).fit(X, np.full(120, 7.5)).predict(q) == 7.5)

    line = np.array([[0.0], [1.0], [2.0]])
    assert KNNRegressor(1).fit(line, [0.0, 10.0, 20.0]).predict([[1.0]])[0] == 10.0
    assert KNNRegressor(3).fit(line, [0.0, 10.0, 20.0]).predict([[55.0]])[0] == pytest.approx(10.0)
    assert KNNRegressor(2).fit(line, [0.0, 10.0, 20.0]).predict([[0.9]])[0] == 5.0

    g = GradientBoosting(n_rounds=1, depth=50, shrinkage=1.0).fit(X, y)
    t = RegressionTree(max_depth=50).fit(X, y)
    np.testing.assert_allclose(g.raw_predict(q), t.predict(q), rtol=0, atol=1e-12)
    c = GradientBoosting(5, 3, 0.5).fit(X, np.full(120, 4.0))
    assert all(np.all(tr.predict(q) == 0.0) for tr in c.trees)
    assert np.all(c.predict(q) == 4.0)
    m10 = GradientBoosting(10, 3, 0.1).fit(X, y).train_mse[-1]
    m50 = GradientBoosting(50, 3, 0.1).fit(X, y).train_mse[-1]
    assert m50 <= m10
