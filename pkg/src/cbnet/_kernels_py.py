"""Pure numpy implementations of the hot kernels.

Results are bit-identical to the compiled versions in ``_kernels.pyx``: sums are
accumulated sequentially in the same order and ties resolve the same way.
"""
import numpy as np


def best_split(X, y, tol=0.0):
    """Best variance-reduction split over the columns of ``X``.

    Returns ``(column, threshold, score)`` with ``score`` the maximised
    ``S_l**2 / n_l + S_r**2 / n_r``; ``column`` is -1 when no column has two
    distinct values. Samples go left when ``x < threshold``. Among candidates
    scoring within ``tol`` of the maximum, the first by (column, position)
    wins, so rounding noise cannot decide between equivalent splits.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, k = X.shape
    if n < 2:
        return -1, 0.0, -np.inf
    order = np.argsort(X, axis=0, kind="stable")
    left_n = np.arange(1, n, dtype=np.float64)
    right_n = n - left_n
    scores, xs_all = [], []
    top = -np.inf
    for j in range(k):
        o = order[:, j]
        xs = X[o, j]
        cs = np.cumsum(y[o])
        cl = cs[:-1]
        cr = cs[-1] - cl
        score = cl * cl / left_n + cr * cr / right_n
        score = np.where(xs[:-1] < xs[1:], score, -np.inf)
        scores.append(score)
        xs_all.append(xs)
        if len(score):
            top = max(top, float(score.max()))
    if top == -np.inf:
        return -1, 0.0, -np.inf
    for j in range(k):
        hits = np.flatnonzero(scores[j] >= top - tol)
        if len(hits):
            i = int(hits[0])
            a, b = xs_all[j][i], xs_all[j][i + 1]
            thr = a + (b - a) / 2.0
            if thr <= a:
                thr = b
            return j, float(thr), float(scores[j][i])
    raise AssertionError("unreachable")


def knn_mean(train, labels, queries, k, chunk=256):
    """Mean label of the ``k`` nearest training rows, ties broken by row index."""
    train = np.ascontiguousarray(train, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    n, p = train.shape
    out = np.empty(len(queries))
    for start in range(0, len(queries), chunk):
        q = queries[start:start + chunk]
        d = np.zeros((len(q), n))
        for f in range(p):
            diff = q[:, f, None] - train[None, :, f]
            d += diff * diff
        for r in range(len(q)):
            row = d[r]
            if k < n:
                kth = np.partition(row, k - 1)[k - 1]
                cand = np.flatnonzero(row <= kth)
            else:
                cand = np.arange(n)
            sel = cand[np.argsort(row[cand], kind="stable")][:k]
            acc = 0.0
            for v in labels[sel].tolist():
                acc += v
            out[start + r] = acc / k
    return out
