# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; semantics mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort
from libc.math cimport INFINITY

cnp.import_array()


cdef struct Pair:
    double value
    Py_ssize_t index


cdef int _cmp_pair(const void* a, const void* b) noexcept nogil:
    cdef double va = (<Pair*>a).value
    cdef double vb = (<Pair*>b).value
    if va < vb:
        return -1
    if va > vb:
        return 1
    return 0


def best_split(const double[:, ::1] X, const cnp.int64_t[::1] y,
               const cnp.int64_t[::1] mult, const cnp.int64_t[::1] idx,
               const cnp.int64_t[::1] features, double w0, double w1,
               Py_ssize_t min_leaf):
    cdef Py_ssize_t m = idx.shape[0]
    cdef Py_ssize_t k = features.shape[0]
    cdef Py_ssize_t fi, i, f, row
    cdef long best_f = -1
    cdef double best_t = 0.0, best_s = INFINITY
    cdef double fs, ft, s, al, bl, ar, br, t
    cdef Py_ssize_t fpos
    cdef cnp.int64_t tot0 = 0, tot1 = 0, n0l, n1l, c1
    cdef Pair* pairs
    if m < 2:
        return best_f, best_t, best_s
    for i in range(m):
        row = idx[i]
        c1 = mult[row] * y[row]
        tot1 += c1
        tot0 += mult[row] - c1
    pairs = <Pair*>malloc(m * sizeof(Pair))
    if pairs == NULL:
        raise MemoryError()
    try:
        with nogil:
            for fi in range(k):
                f = features[fi]
                for i in range(m):
                    pairs[i].value = X[idx[i], f]
                    pairs[i].index = idx[i]
                qsort(pairs, m, sizeof(Pair), _cmp_pair)
                n0l = 0
                n1l = 0
                fs = INFINITY
                fpos = -1
                for i in range(m - 1):
                    row = pairs[i].index
                    c1 = mult[row] * y[row]
                    n1l += c1
                    n0l += mult[row] - c1
                    if i + 1 < min_leaf or m - i - 1 < min_leaf:
                        continue
                    if not (pairs[i].value < pairs[i + 1].value):
                        continue
                    al = w0 * <double>n0l
                    bl = w1 * <double>n1l
                    ar = w0 * <double>(tot0 - n0l)
                    br = w1 * <double>(tot1 - n1l)
                    s = 2.0 * al * bl / (al + bl) + 2.0 * ar * br / (ar + br)
                    if s < fs:
                        fs = s
                        fpos = i
                if fpos >= 0 and fs < best_s:
                    t = (pairs[fpos].value + pairs[fpos + 1].value) * 0.5
                    if t >= pairs[fpos + 1].value:
                        t = pairs[fpos].value
                    best_f = f
                    best_t = t
                    best_s = fs
    finally:
        free(pairs)
    return best_f, best_t, best_s


cdef inline bint _step(bint* armed, long* consec, bint* has_last,
                       cnp.int64_t* last_cue, cnp.int64_t t, double p,
                       double theta_on, double theta_off,
                       cnp.int64_t refractory, long min_consec) noexcept nogil:
    cdef bint fire
    if p < theta_off:
        armed[0] = True
        consec[0] = 0
    elif p >= theta_on:
        consec[0] += 1
    else:
        consec[0] = 0
    fire = (armed[0] and consec[0] >= min_consec
            and (not has_last[0] or t - last_cue[0] >= refractory))
    if fire:
        armed[0] = False
        consec[0] = 0
        has_last[0] = True
        last_cue[0] = t
    return fire


def scan_cues(const cnp.int64_t[::1] t, const double[::1] p, double theta_on,
              double theta_off, cnp.int64_t refractory, long min_consec, state):
    cdef bint armed = state[0]
    cdef long consec = state[1]
    cdef bint has_last = state[2]
    cdef cnp.int64_t last_cue = state[3]
    cdef bint has_t = state[4]
    cdef cnp.int64_t last_t = state[5]
    cdef Py_ssize_t n = t.shape[0], i, ncue = 0, bad = -1
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] cues = out
    with nogil:
        for i in range(n):
            if has_t and t[i] <= last_t:
                bad = i
                break
            has_t = True
            last_t = t[i]
            if _step(&armed, &consec, &has_last, &last_cue, t[i], p[i],
                     theta_on, theta_off, refractory, min_consec):
                cues[ncue] = i
                ncue += 1
    new_state = (bool(armed), int(consec), bool(has_last), int(last_cue),
                 bool(has_t), int(last_t))
    return out[:ncue].copy(), new_state, bad


def scan_cue_batch(const cnp.int64_t[::1] t, const double[::1] p,
                   const cnp.int64_t[::1] offsets, const double[::1] theta_on,
                   const double[::1] theta_off, const cnp.int64_t[::1] refractory,
                   const cnp.int64_t[::1] min_consec):
    cdef Py_ssize_t ns = offsets.shape[0] - 1, s, i
    cdef bint armed, has_last
    cdef long consec
    cdef cnp.int64_t last_cue
    out = np.zeros(t.shape[0], dtype=np.uint8)
    cdef cnp.uint8_t[::1] mask = out
    with nogil:
        for s in range(ns):
            armed = True
            consec = 0
            has_last = False
            last_cue = 0
            for i in range(offsets[s], offsets[s + 1]):
                if _step(&armed, &consec, &has_last, &last_cue, t[i], p[i],
                         theta_on[s], theta_off[s], refractory[s], min_consec[s]):
                    mask[i] = 1
    return out
