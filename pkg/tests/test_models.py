import math

import numpy as np
import pytest

from cbnet import features as F
from cbnet.predictors import (PRESETS, STA_PRESETS, GradientBoosting, GraphModel, KNNRegressor,
                              MLP, MlpSpec, RandomForest, TableModel, grid_search, load_model,
                              make_model, save_model)
from cbnet.predictors.base import NotFittedError
from cbnet.predictors.models import dumps_model
from cbnet.predictors.search import expand_grid


def _linear_table(n=200, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, n)
    schema = F.FeatureSchema(("x", "z"), (), "STA")
    X = np.column_stack([x, rng.normal(size=n)])
    y = 2 * x + 1 + noise * rng.normal(size=n)
    ids = [f"s{i}" for i in range(n)]
    deps = [f"lin/{i // 4:03d}" for i in range(n)]
    return F.FeatureTable(schema, ids, deps, [f"B{i % 4}" for i in range(n)], X, y)


def _small_models():
    mlp = MlpSpec(hidden=(8,), activation="prelu", batchnorm=True, epochs=5, batch_size=32, seed=2)
    return [
        TableModel("mlp", "STA", MLP(mlp), None, "standard"),
        TableModel("knn", "STA", KNNRegressor(3), None, "none"),
        TableModel("rf", "STA", RandomForest(5, 4, seed=1), None, "none"),
        TableModel("gbm", "STA", GradientBoosting(10, 3, 0.3), None, "yeo-johnson"),
    ]


@pytest.mark.parametrize("model", _small_models(), ids=lambda m: m.name)
def test_save_load_is_bit_exact(tmp_path, model):
    train, test = _linear_table(seed=1, noise=0.1), _linear_table(50, seed=2)
    with pytest.raises(NotFittedError):
        model.predict(test)
    model.fit(train)
    path = tmp_path / "model.txt"
    save_model(model, path)
    back = load_model(path)
    assert np.array_equal(back.predict(test), model.predict(test))
    assert dumps_model(back) == path.read_text()
    assert path.read_text().splitlines()[0] == f"# cbnet-model v1 variant={model.variant} name={model.name}"


@pytest.mark.parametrize("name", ["mlp", "knn", "rf", "gbm"])
def test_fit_is_deterministic(name):
    t = _linear_table(seed=3, noise=0.2)
    a, b = ({m.name: m for m in _small_models()}[name].fit(t) for _ in range(2))
    assert dumps_model(a) == dumps_model(b)


def test_bad_header_rejected(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("not a model\n{}\n")
    with pytest.raises(ValueError, match="m.txt"):
        load_model(p)


def test_granularity_checked():
    m = TableModel("knn", "BSS", KNNRegressor(1), None, "none")
    with pytest.raises(ValueError, match="expects BSS"):
        m.fit(_linear_table())


def test_presets_construct():
    for name in PRESETS:
        m = make_model(name, seed=4)
        assert m.name == name
        assert (m.granularity == "graph") == (name == "atari")
    assert make_model("ramon").granularity == "BSS"
    assert set(STA_PRESETS) <= set(PRESETS)
    full = make_model("netintels-ann", full=True).estimator.spec
    assert full.hidden == (1024,) * 6 + (512,) and full.epochs == 1000
    assert make_model("ramon").estimator.spec.lr == 0.025
    assert make_model("ramon").estimator.spec.epochs == 700
    assert isinstance(make_model("atari"), GraphModel)
    with pytest.raises(ValueError, match="valid: ramon"):
        make_model("nope")


def test_expand_grid():
    assert expand_grid({"a": [1, 2], "b": [3]}) == [{"a": 1, "b": 3}, {"a": 2, "b": 3}]
    assert expand_grid([{"a": 1}]) == [{"a": 1}]


def _mlp_family(activation, lr):
    spec = MlpSpec(hidden=(1,), activation=activation, output="linear", lr=lr, epochs=150,
                   batch_size=20, seed=0)
    return TableModel("lin", "STA", MLP(spec), ["x"], "standard")


def test_grid_of_one():
    best, report = grid_search(_mlp_family, {"activation": ["linear"], "lr": [1e-2]},
                               _linear_table(seed=5), _linear_table(60, seed=6))
    assert best == {"activation": "linear", "lr": 1e-2}
    assert len(report) == 1 and report[0].error is None


def test_grid_selects_oracle_spec():
    grid = {"activation": ["relu", "linear"], "lr": [1e-5, 1e-2]}
    train, val = _linear_table(seed=7), _linear_table(60, seed=8)
    best, report = grid_search(_mlp_family, grid, train, val)
    assert best == {"activation": "linear", "lr": 1e-2}
    assert min(c.val_rmse for c in report) < 0.05
    again = grid_search(_mlp_family, grid, train, val)[1]
    assert [(c.params, c.val_rmse) for c in again] == [(c.params, c.val_rmse) for c in report]


def test_grid_records_failures_and_ties():
    def build(k):
        return TableModel("knn", "STA", KNNRegressor(k), None, "none")

    train, val = _linear_table(20, seed=9), _linear_table(10, seed=10)
    best, report = grid_search(build, {"k": [0, 1, 1]}, train, val)
    assert report[0].error is not None and math.isinf(report[0].val_rmse)
    assert best == {"k": 1}
    assert report[1].val_rmse == report[2].val_rmse
    with pytest.raises(ValueError, match="empty grid"):
        grid_search(build, {"k": []}, train, val)
    with pytest.raises(RuntimeError, match="every grid cell failed"):
        grid_search(build, {"k": [0, 100]}, train, val)
