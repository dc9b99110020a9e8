"""Compiled vs numpy kernels on tree-split and neighbour workloads.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so no environment variable is needed.
Each row also checks that the two backends return identical results.
"""
import argparse
import timeit

import numpy as np

from cbnet import _kernels_py

try:
    from cbnet import _kernels
except ImportError:
    _kernels = None


def workloads(rng):
    for n, k in ((200, 8), (2000, 30), (20000, 30)):
        X = rng.normal(size=(n, k)).round(2)
        y = rng.normal(size=n)
        yield f"best_split n={n} k={k}", "best_split", (X, y - y.mean(), 1e-9)
    for n, q in ((1000, 200), (10000, 500)):
        train = rng.normal(size=(n, 30))
        yield f"knn_mean n={n} q={q} k=10", "knn_mean", (train, rng.normal(size=n), rng.normal(size=(q, 30)), 10)


def best_time(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled kernels not built; run: python3 setup.py build_ext --inplace")
    rng = np.random.default_rng(0)
    print(f"{'workload':<32}{'python ms':>12}{'cython ms':>12}{'speedup':>10}  same")
    for label, name, call in workloads(rng):
        py, cy = getattr(_kernels_py, name), getattr(_kernels, name)
        same = np.array_equal(np.asarray(py(*call), dtype=float), np.asarray(cy(*call), dtype=float))
        tp, tc = best_time(py, call, args.repeat), best_time(cy, call, args.repeat)
        print(f"{label:<32}{tp * 1e3:>12.2f}{tc * 1e3:>12.2f}{tp / tc:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
