# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def best_split(X, y, double tol=0.0):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = Xa.shape[0], k = Xa.shape[1]
    cdef Py_ssize_t i, j, pass_
    cdef double top = -INFINITY
    cdef double cs, tot, cr, score, a, b, thr
    if n < 2:
        return -1, 0.0, -INFINITY
    cdef cnp.ndarray[cnp.int64_t, ndim=2] order = np.argsort(Xa, axis=0, kind="stable").astype(np.int64)
    # pass 0 finds the top score, pass 1 the first candidate within tol of it
    for pass_ in range(2):
        for j in range(k):
            tot = 0.0
            for i in range(n):
                tot += ya[order[i, j]]
            cs = 0.0
            for i in range(n - 1):
                cs += ya[order[i, j]]
                if not (Xa[order[i, j], j] < Xa[order[i + 1, j], j]):
                    continue
                cr = tot - cs
                score = cs * cs / <double>(i + 1) + cr * cr / <double>(n - i - 1)
                if pass_ == 0:
                    if score > top:
                        top = score
                elif score >= top - tol:
                    a = Xa[order[i, j], j]
                    b = Xa[order[i + 1, j], j]
                    thr = a + (b - a) / 2.0
                    if thr <= a:
                        thr = b
                    return j, thr, score
        if top == -INFINITY:
            return -1, 0.0, -INFINITY
    return -1, 0.0, -INFINITY


cdef inline bint _before(double da, long ia, double db, long ib):
    return da < db or (da == db and ia < ib)


def knn_mean(train, labels, queries, long k, chunk=None):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] T = np.ascontiguousarray(train, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] L = np.ascontiguousarray(labels, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef Py_ssize_t n = T.shape[0], p = T.shape[1], m = Q.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hd = np.empty(k)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hi = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t r, t, f, size, pos, child, c2
    cdef double d, diff, acc, td
    cdef long ti
    for r in range(m):
        size = 0
        for t in range(n):
            d = 0.0
            for f in range(p):
                diff = Q[r, f] - T[t, f]
                d += diff * diff
            if size < k:
                # sift up in a max-heap ordered by (distance, index)
                pos = size
                size += 1
                while pos > 0 and _before(hd[(pos - 1) // 2], hi[(pos - 1) // 2], d, t):
                    hd[pos] = hd[(pos - 1) // 2]
                    hi[pos] = hi[(pos - 1) // 2]
                    pos = (pos - 1) // 2
                hd[pos] = d
                hi[pos] = t
            elif _before(d, t, hd[0], hi[0]):
                pos = 0
                while True:
                    child = 2 * pos + 1
                    if child >= size:
                        break
                    c2 = child + 1
                    if c2 < size and _before(hd[child], hi[child], hd[c2], hi[c2]):
                        child = c2
                    if _before(d, t, hd[child], hi[child]):
                        hd[pos] = hd[child]
                        hi[pos] = hi[child]
                        pos = child
                    else:
                        break
                hd[pos] = d
                hi[pos] = t
        # ascending (distance, index) by insertion sort; k is small
        for t in range(1, size):
            td = hd[t]
            ti = hi[t]
            pos = t
            while pos > 0 and _before(td, ti, hd[pos - 1], hi[pos - 1]):
                hd[pos] = hd[pos - 1]
                hi[pos] = hi[pos - 1]
                pos -= 1
            hd[pos] = td
            hi[pos] = ti
        acc = 0.0
        for t in range(size):
            acc += L[hi[t]]
        out[r] = acc / k
    return out
