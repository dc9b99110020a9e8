import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cbnet import _backend, _kernels_py

compiled = pytest.importorskip("cbnet._kernels")


def test_backend_selected():
    assert _backend.BACKEND == "cython"


# small integer grids produce many ties in both values and distances
grid = st.integers(-3, 3).map(float)


@given(hnp.arrays(float, st.tuples(st.integers(2, 40), st.integers(1, 5)), elements=grid),
       st.integers(0, 2**31))
@settings(max_examples=150, deadline=None)
def test_best_split_bit_identical(X, seed):
    y = np.random.default_rng(seed).normal(size=len(X))
    assert compiled.best_split(X, y) == _kernels_py.best_split(X, y)


@given(hnp.arrays(float, st.tuples(st.integers(1, 60), st.integers(1, 4)), elements=grid),
       st.integers(1, 60), st.integers(0, 2**31))
@settings(max_examples=150, deadline=None)
def test_knn_bit_identical(train, k, seed):
    k = min(k, len(train))
    rng = np.random.default_rng(seed)
    labels = rng.normal(size=len(train))
    Q = rng.integers(-3, 4, size=(7, train.shape[1])).astype(float)
    a = compiled.knn_mean(train, labels, Q, k)
    b = _kernels_py.knn_mean(train, labels, Q, k)
    assert a.tobytes() == b.tobytes()


def test_knn_large_random():
    rng = np.random.default_rng(0)
    train = rng.normal(size=(3000, 9))
    labels = rng.normal(size=3000)
    Q = rng.normal(size=(300, 9))
    for k in (1, 10, 3000):
        assert compiled.knn_mean(train, labels, Q, k).tobytes() == _kernels_py.knn_mean(train, labels, Q, k).tobytes()


def test_best_split_no_split_possible():
    X = np.ones((5, 2))
    y = np.arange(5.0)
    assert compiled.best_split(X, y) == _kernels_py.best_split(X, y)
    assert _kernels_py.best_split(X, y)[0] == -1
