# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: coordinate binning, batched IoU, alignment/overlap scores.

Twin of ``_fallback``; both must return the same values on the same inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, floor, fmin, fmax, fabs, INFINITY

cnp.import_array()

BACKEND = "compiled"

# evaluated through the same libm exp as the scores so zero distances score exactly 1
cdef double _E_MINUS_1 = exp(1.0) - 1.0


def bin_tokens(values, extents, long k):
    """Vectorized coordinate binning: clamp to [0, extent], floor(a/D*K), clamp to [0, K]."""
    a_arr = np.ascontiguousarray(values, dtype=np.float64)
    d_arr = np.ascontiguousarray(np.broadcast_to(np.asarray(extents, dtype=np.float64), a_arr.shape))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = a_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = d_arr
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i
    cdef double v, t
    for i in range(n):
        v = fmin(fmax(a[i], 0.0), d[i])
        t = floor(v / d[i] * k)
        if t < 0.0:
            t = 0.0
        elif t > k:
            t = k
        out[i] = <long long>t
    return out


def unbin_tokens(tokens, extents, long k):
    """Bin-center reconstruction, clamped to the extent."""
    t_arr = np.ascontiguousarray(tokens, dtype=np.float64)
    d_arr = np.ascontiguousarray(np.broadcast_to(np.asarray(extents, dtype=np.float64), t_arr.shape))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = t_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = d_arr
    cdef Py_ssize_t n = t.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = fmin((t[i] + 0.5) / k * d[i], d[i])
    return out


def iou_many(a, b):
    """Elementwise IoU for two (n, 4) corner arrays (left, top, right, bottom)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ca = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = ca.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double iw, ih, inter, area_a, area_b, union
    for i in range(n):
        iw = fmin(ca[i, 2], cb[i, 2]) - fmax(ca[i, 0], cb[i, 0])
        ih = fmin(ca[i, 3], cb[i, 3]) - fmax(ca[i, 1], cb[i, 1])
        inter = fmax(0.0, iw) * fmax(0.0, ih)
        area_a = fmax(0.0, ca[i, 2] - ca[i, 0]) * fmax(0.0, ca[i, 3] - ca[i, 1])
        area_b = fmax(0.0, cb[i, 2] - cb[i, 0]) * fmax(0.0, cb[i, 3] - cb[i, 1])
        union = area_a + area_b - inter
        if union > 0.0:
            out[i] = inter / union
    return out


def alignment_score(xs, ys):
    """Alignment quality for one layout over (n, 3) normalized key-coordinate arrays."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cx = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cy = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t n = cx.shape[0]
    cdef Py_ssize_t i, j, c
    cdef double best_dx, best_dy, d, fx, fy, score, total
    total = 0.0
    for i in range(n):
        best_dx = INFINITY
        best_dy = INFINITY
        for j in range(n):
            if j == i:
                continue
            for c in range(3):
                d = fabs(cx[i, c] - cx[j, c])
                if d < best_dx:
                    best_dx = d
                d = fabs(cy[i, c] - cy[j, c])
                if d < best_dy:
                    best_dy = d
        fx = exp(1.0 - fmin(best_dx, 1.0))
        fy = exp(1.0 - fmin(best_dy, 1.0))
        score = (fmin(fx, fy) - 1.0) / _E_MINUS_1
        total += score
    return total / n


def overlap_raw(corners, areas):
    """Raw overlap quality: (1/N) sum_i sum_{j!=i} (1 - inter_ij / area_i)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(corners, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ar = np.ascontiguousarray(areas, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t i, j
    cdef double iw, ih, inter, total
    total = 0.0
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            iw = fmin(c[i, 2], c[j, 2]) - fmax(c[i, 0], c[j, 0])
            ih = fmin(c[i, 3], c[j, 3]) - fmax(c[i, 1], c[j, 1])
            inter = fmax(0.0, iw) * fmax(0.0, ih)
            total += 1.0 - inter / ar[i]
    return total / n
