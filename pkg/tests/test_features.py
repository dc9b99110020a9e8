import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cbnet import deployment as dep
from cbnet import features as F
from cbnet import macsim
from builders import bss, deployment
from oracles import yeo_johnson_scalar


def _fake_result(d, rssi=-60.0, sinr=20.0, thr=None):
    res = macsim.SimResult({}, {}, {}, {}, {}, {}, {})
    for b in d.bsss:
        res.ap_airtime[b.ap.code] = tuple(0.1 * (c + 1) for c in range(8))
        res.ap_interference[b.ap.code] = -90.0
        total = 0.0
        for k, s in enumerate(b.stas):
            v = 10.0 + k if thr is None else thr[k]
            res.sta_throughput[s.code] = v
            res.sta_rssi[s.code] = rssi - k
            res.sta_sinr[s.code] = sinr
            total += v
        res.ap_throughput[b.ap.code] = total
    return res


def test_extract_sta_examples():
    d = deployment(bss(0, (0, 0), [(3, 4)], 2, 0, 3))
    t = F.extract_sta(d, _fake_result(d), "hand/000")
    row = dict(zip(t.schema.columns, t.X[0]))
    assert row["distance"] == 5.0
    assert [row[f"primary_ch{c}"] for c in range(8)] == [0, 0, 1, 0, 0, 0, 0, 0]
    assert row["min_ch0"] == 1 and row["max_ch3"] == 1
    assert row["ap_airtime"] == pytest.approx(np.mean([0.1, 0.2, 0.3, 0.4]))
    assert t.ids == ["hand/000/STA00_00"] and t.y[0] == 10.0


def test_extract_training1a_row_count():
    spec = dep.spec_by_name("training1a")
    d = dep.generate(spec, 0, 0)
    t = F.extract_sta(d, _fake_result(d))
    assert len(t) >= 120
    for g, a, b in t.schema.onehot:
        assert np.all(t.X[:, a:b].sum(axis=1) == 1.0)


def test_extract_missing_observable_names_node():
    d = deployment(bss(0, (0, 0), [(3, 4)]))
    r = _fake_result(d)
    del r.sta_rssi["STA00_00"]
    with pytest.raises(F.FeatureError, match="STA00_00"):
        F.extract_sta(d, r)


def _bss_table(thr):
    d = deployment(bss(0, (0, 0), [(1, 0)] * len(thr)))
    r = _fake_result(d, thr=thr)
    r.sta_rssi.update({f"STA00_{k:02d}": v for k, v in enumerate([-60.0, -70.0, -80.0][:len(thr)])})
    t = F.extract_sta(d, r, "x/0")
    return F.aggregate_bss(t, F.airtime_lookup({"x/0": r}, {"x/0": d}))


def test_aggregate_examples():
    b = _bss_table([10.0, 15.0])
    row = dict(zip(b.schema.columns, b.X[0]))
    assert row["rssi_mean"] == -65.0 and row["rssi_std"] == 5.0
    single = _bss_table([7.0])
    r1 = dict(zip(single.schema.columns, single.X[0]))
    assert all(r1[f"{c}_std"] == 0.0 for c in F.STA_NUMERIC)
    assert _bss_table([10.0, 15.0, 20.0]).y[0] == 45.0
    assert row["airtime_ch3"] == pytest.approx(0.4)


def test_aggregate_label_exact_sum():
    spec = dep.desk_scale(dep.spec_by_name("training1c"))
    d = dep.generate(spec, 2, 0)
    thr = [0.1 * k + 1 / 3 for k in range(20)]
    r = _fake_result(d, thr=thr)
    t = F.extract_sta(d, r, "k")
    b = F.aggregate_bss(t, F.airtime_lookup({"k": r}, {"k": d}))
    for i, bid in enumerate(b.bss):
        members = [t.y[j] for j in range(len(t)) if t.bss[j] == bid]
        acc = 0.0
        for v in members:
            acc += v
        assert b.y[i] == acc


def test_yeo_johnson_examples():
    assert F.yeo_johnson(0.0, 0.7) == 0.0
    assert F.yeo_johnson(1.0, 1.0) == 1.0
    assert F.yeo_johnson(math.e - 1, 0.0) == pytest.approx(1.0, abs=1e-15)


# the naive formula cancels catastrophically next to lambda = 0 and 2
lambdas = st.floats(-2, 4).filter(lambda v: abs(v) > 1e-3 and abs(v - 2) > 1e-3)


@given(st.floats(-50, 50), lambdas | st.sampled_from([0.0, 2.0]))
def test_yeo_johnson_matches_formula(x, lam):
    assert F.yeo_johnson(x, lam) == pytest.approx(yeo_johnson_scalar(x, lam), rel=1e-9, abs=1e-12)


@given(st.floats(-20, 20))
def test_yeo_johnson_continuous_at_special_lambdas(x):
    for lam in (0.0, 2.0):
        mid = F.yeo_johnson(x, lam)
        for eps in (1e-9, -1e-9):
            assert abs(F.yeo_johnson(x, lam + eps) - mid) < 1e-6


@given(st.floats(-20, 20), st.floats(0.001, 5), st.floats(-2, 4))
def test_yeo_johnson_increasing(x, dx, lam):
    assert F.yeo_johnson(x + dx, lam) > F.yeo_johnson(x, lam)


def test_fit_lambda_examples():
    rng = np.random.default_rng(0)
    z = rng.normal(size=10_000)
    assert F.fit_yeo_johnson_lambda(z) == pytest.approx(1.0, abs=0.2)
    # the transform acts on log(x + 1), so the column whose x + 1 is log-normal needs lambda 0
    assert F.fit_yeo_johnson_lambda(np.exp(3 + 0.5 * z) - 1) == pytest.approx(0.0, abs=0.2)
    with pytest.raises(F.FeatureError):
        F.fit_yeo_johnson_lambda(np.ones(10))


def test_fit_lambda_against_scipy():
    stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(1)
    for col in (rng.gamma(2.0, 3.0, 2000), rng.normal(0.5, 1, 2000), rng.normal(0, 3, 2000) ** 3 / 10,
                np.exp(rng.normal(size=2000))):
        want = stats.yeojohnson_normmax(col)
        assert F.fit_yeo_johnson_lambda(col) == pytest.approx(want, abs=1e-3)


def test_golden_section():
    assert F.golden_section_max(lambda v: -(v - 0.3) ** 2, -2, 2) == pytest.approx(0.3, abs=1e-4)


def test_correlation_examples():
    rng = np.random.default_rng(4)
    a = rng.normal(size=10_000)
    b = rng.normal(size=10_000)
    C = F.correlation_matrix(np.column_stack([a, a, -a, b]))
    assert C[0, 1] == pytest.approx(1.0) and C[0, 2] == pytest.approx(-1.0)
    assert abs(C[0, 3]) < 0.05
    assert np.allclose(C, np.corrcoef(np.column_stack([a, a, -a, b]).T))


def test_correlation_zero_variance():
    X = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.warns(UserWarning):
        C = F.correlation_matrix(X)
    assert C[1, 1] == 1.0 and C[0, 1] == 0.0 and C[1, 0] == 0.0


@given(hnp.arrays(float, (12, 4), elements=st.floats(-100, 100)))
def test_correlation_symmetric(X):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        C = F.correlation_matrix(X)
    assert np.array_equal(C, C.T)
    assert np.all(np.diag(C) == 1.0)
    assert np.all(np.abs(C) <= 1.0)


@given(hnp.arrays(float, (30, 3), elements=st.floats(-1e3, 1e3)))
@settings(max_examples=50)
def test_scaler_property(X):
    pre = F.Preprocessor()
    T = pre.fit_transform(X)
    for j in range(X.shape[1]):
        # scale-relative spread so tiny float noise does not count as variance
        if X[:, j].std() > 1e-6 * max(1.0, np.abs(X[:, j]).max()):
            assert abs(T[:, j].mean()) < 1e-9
            assert abs(T[:, j].std() - 1) < 1e-9


def test_preprocessor_yeo_johnson_and_roundtrip():
    rng = np.random.default_rng(2)
    X = np.column_stack([rng.exponential(size=300), rng.integers(0, 2, 300), np.full(300, 3.0)])
    pre = F.Preprocessor(yeo_johnson=True).fit(X)
    assert pre.lambdas[0] is not None and pre.lambdas[1] is None and pre.lambdas[2] is None
    back = F.Preprocessor.loads(pre.dumps())
    assert np.array_equal(back.transform(X), pre.transform(X))
    with pytest.raises(F.FeatureError):
        F.Preprocessor().transform(X)


def _table(n_dep, rows_per=3):
    ids, deps, bsss = [], [], []
    for i in range(n_dep):
        for k in range(rows_per):
            ids.append(f"s/{i:03d}/STA{k}")
            deps.append(f"s/{i:03d}")
            bsss.append("BSS00")
    schema = F.FeatureSchema(("a",), (), "STA")
    return F.FeatureTable(schema, ids, deps, bsss, np.arange(len(ids), dtype=float)[:, None],
                          np.arange(len(ids), dtype=float))


def test_split_examples():
    t = _table(600, 1)
    tr, va = F.split(t, 0.8, 0)
    assert (len(set(tr.deployments)), len(set(va.deployments))) == (480, 120)
    tr, va = F.split(t, 1.0, 0)
    assert len(va) == 0
    a = F.split(t, 0.8, 5)[0].ids
    assert a == F.split(t, 0.8, 5)[0].ids


@given(st.integers(2, 60), st.floats(0, 1), st.integers(0, 99))
@settings(max_examples=40)
def test_split_no_leakage(n, frac, seed):
    t = _table(n)
    tr, va = F.split(t, frac, seed)
    assert not set(tr.deployments) & set(va.deployments)
    assert len(tr) + len(va) == len(t)
    assert abs(len(set(tr.deployments)) - frac * n) <= 1


def test_split_row_level():
    t = _table(10, 5)
    tr, va = F.split(t, 0.8, 0, level="row")
    assert (len(tr), len(va)) == (40, 10)
    with pytest.raises(F.FeatureError):
        F.split(t, 0.8, 0, level="bss")


def test_variance_report():
    t = _table(4)
    t.X = np.column_stack([t.X[:, 0]])
    (name, var, low), = F.variance_report(t)
    assert name == "a" and var > 0 and not low


def test_table_csv_roundtrip(tmp_path):
    spec = dep.desk_scale(dep.spec_by_name("test2"))
    d = dep.generate(spec, 0, 0)
    r = _fake_result(d)
    t = F.extract_sta(d, r, "test2/000")
    p = tmp_path / "t.csv"
    F.write_table(t, p)
    back = F.read_table(p)
    assert back.ids == t.ids and back.schema == t.schema
    assert np.array_equal(back.X, t.X) and np.array_equal(back.y, t.y)
    b = F.aggregate_bss(t, F.airtime_lookup({"test2/000": r}, {"test2/000": d}))
    assert F.from_csv_text(F.to_csv_text(b)).schema == b.schema
    with pytest.raises(F.FeatureError):
        F.from_csv_text("# cbnet-result v1\n")
