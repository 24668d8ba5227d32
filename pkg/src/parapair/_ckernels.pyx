# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused LSTM pointwise stage and edit-distance searches.

Semantics are identical to ``_kernels_py``; see that module for reference.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _sig(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def lstm_forward(double[:, ::1] z, double[:, ::1] c_prev, double[:, ::1] h_prev,
                 cnp.uint8_t[::1] mask):
    cdef Py_ssize_t n = z.shape[0], d = c_prev.shape[1], r, j
    out_a = np.empty((n, 2 * d))
    gates_a = np.empty((n, 4 * d))
    tc_a = np.empty((n, d))
    cdef double[:, ::1] out = out_a
    cdef double[:, ::1] gates = gates_a
    cdef double[:, ::1] tcv = tc_a
    cdef double i, f, g, o, c
    with nogil:
        for r in range(n):
            for j in range(d):
                i = _sig(z[r, j])
                f = _sig(z[r, d + j])
                g = tanh(z[r, 2 * d + j])
                o = _sig(z[r, 3 * d + j])
                c = f * c_prev[r, j] + i * g
                gates[r, j] = i
                gates[r, d + j] = f
                gates[r, 2 * d + j] = g
                gates[r, 3 * d + j] = o
                tcv[r, j] = tanh(c)
                if mask[r]:
                    out[r, j] = o * tcv[r, j]
                    out[r, d + j] = c
                else:
                    out[r, j] = h_prev[r, j]
                    out[r, d + j] = c_prev[r, j]
    return out_a, (gates_a, tc_a, np.asarray(c_prev), np.asarray(mask))


def lstm_backward(double[:, ::1] gout, cache):
    gates_a, tc_a, c_prev_a, mask_a = cache
    cdef double[:, ::1] gates = gates_a
    cdef double[:, ::1] tcv = tc_a
    cdef double[:, ::1] c_prev = c_prev_a
    cdef cnp.uint8_t[::1] mask = mask_a
    cdef Py_ssize_t n = gout.shape[0], d = c_prev.shape[1], r, j
    dz_a = np.empty((n, 4 * d))
    dcp_a = np.empty((n, d))
    dhp_a = np.empty((n, d))
    cdef double[:, ::1] dz = dz_a
    cdef double[:, ::1] dcp = dcp_a
    cdef double[:, ::1] dhp = dhp_a
    cdef double i, f, g, o, tc, gh, dc
    with nogil:
        for r in range(n):
            for j in range(d):
                gh = gout[r, j]
                if mask[r]:
                    i = gates[r, j]
                    f = gates[r, d + j]
                    g = gates[r, 2 * d + j]
                    o = gates[r, 3 * d + j]
                    tc = tcv[r, j]
                    dc = gout[r, d + j] + gh * o * (1.0 - tc * tc)
                    dz[r, j] = dc * g * i * (1.0 - i)
                    dz[r, d + j] = dc * c_prev[r, j] * f * (1.0 - f)
                    dz[r, 2 * d + j] = dc * i * (1.0 - g * g)
                    dz[r, 3 * d + j] = gh * tc * o * (1.0 - o)
                    dcp[r, j] = dc * f
                    dhp[r, j] = 0.0
                else:
                    dz[r, j] = 0.0
                    dz[r, d + j] = 0.0
                    dz[r, 2 * d + j] = 0.0
                    dz[r, 3 * d + j] = 0.0
                    dcp[r, j] = gout[r, d + j]
                    dhp[r, j] = gh
    return dz_a, dcp_a, dhp_a


cdef Py_ssize_t _lev(const long long* a, Py_ssize_t na, const long long* b,
                     Py_ssize_t nb, Py_ssize_t* row) nogil:
    cdef Py_ssize_t i, j, diag, up, best
    for j in range(nb + 1):
        row[j] = j
    for i in range(1, na + 1):
        diag = row[0]
        row[0] = i
        for j in range(1, nb + 1):
            up = row[j]
            best = diag + (a[i - 1] != b[j - 1])
            if up + 1 < best:
                best = up + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
            diag = up
    return row[nb]


def levenshtein(a, b):
    cdef long long[::1] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef long long[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0]
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((nb + 1) * sizeof(Py_ssize_t))
    cdef long long dummy = 0
    cdef const long long* ap = &av[0] if na else &dummy
    cdef const long long* bp = &bv[0] if nb else &dummy
    try:
        return _lev(ap, na, bp, nb, row)
    finally:
        free(row)


def lcs_length(a, b):
    cdef long long[::1] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef long long[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], i, j, diag, up
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((nb + 1) * sizeof(Py_ssize_t))
    try:
        for j in range(nb + 1):
            row[j] = 0
        for i in range(na):
            diag = 0
            for j in range(1, nb + 1):
                up = row[j]
                if av[i] == bv[j - 1]:
                    row[j] = diag + 1
                elif row[j - 1] > up:
                    row[j] = row[j - 1]
                diag = up
        return row[nb]
    finally:
        free(row)


cdef inline void _shifted(const long long* cur, Py_ssize_t n, Py_ssize_t i,
                          Py_ssize_t j, Py_ssize_t k, long long* out) noexcept nogil:
    # rest[:k] + cur[i:j] + rest[k:], rest = cur without [i, j)
    cdef Py_ssize_t span = j - i, m = 0, p
    for p in range(n):
        if p >= i and p < j:
            continue
        if m == k:
            m += span
        out[m] = cur[p]
        m += 1
    for p in range(span):
        out[k + p] = cur[i + p]


cdef Py_ssize_t _best_after_one_shift(const long long* seq, Py_ssize_t n,
                                      const long long* ref, Py_ssize_t nr,
                                      Py_ssize_t floor, long long* buf,
                                      Py_ssize_t* row) nogil:
    cdef Py_ssize_t best = _lev(seq, n, ref, nr, row), i, j, k, dd
    for i in range(n):
        for j in range(i + 1, n + 1):
            for k in range(n - (j - i) + 1):
                if best <= floor:
                    return best
                if k == i:
                    continue
                _shifted(seq, n, i, j, k, buf)
                dd = _lev(buf, n, ref, nr, row)
                if dd < best:
                    best = dd
    return best


cdef Py_ssize_t _shift_floor(long long[::1] a, long long[::1] b):
    # shifts keep the token multiset: at most |bag(a) & bag(b)| matches
    cdef dict counts = {}
    cdef Py_ssize_t common = 0, i
    for i in range(a.shape[0]):
        counts[a[i]] = counts.get(a[i], 0) + 1
    for i in range(b.shape[0]):
        if counts.get(b[i], 0) > 0:
            counts[b[i]] -= 1
            common += 1
    return (a.shape[0] if a.shape[0] > b.shape[0] else b.shape[0]) - common


def ter_greedy(hyp, ref, bint lookahead=True):
    cdef long long[::1] cur_v = np.array(hyp, dtype=np.int64)
    cdef long long[::1] ref_v = np.ascontiguousarray(ref, dtype=np.int64)
    cdef Py_ssize_t n = cur_v.shape[0], nr = ref_v.shape[0]
    cdef Py_ssize_t i, j, k, dd, v, lb, dist, floor, shifts = 0, it, max_iter
    cdef Py_ssize_t best_v = 0, best_d = 0, bi = 0, bj = 0, bk = 0
    cdef bint found
    cdef long long dummy = 0
    cdef long long* cur = <long long*> malloc((n + 1) * sizeof(long long))
    cdef long long* cand = <long long*> malloc((n + 1) * sizeof(long long))
    cdef long long* buf = <long long*> malloc((n + 1) * sizeof(long long))
    cdef long long* tmp
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((nr + 1) * sizeof(Py_ssize_t))
    cdef const long long* rp = &ref_v[0] if nr else &dummy
    try:
        for i in range(n):
            cur[i] = cur_v[i]
        dist = _lev(cur, n, rp, nr, row)
        floor = _shift_floor(cur_v, ref_v)
        max_iter = 2 * (n if n > nr else nr) + 2
        with nogil:
            for it in range(max_iter):
                if dist <= floor:
                    break
                found = False
                for i in range(n):
                    for j in range(i + 1, n + 1):
                        for k in range(n - (j - i) + 1):
                            if k == i:
                                continue
                            _shifted(cur, n, i, j, k, cand)
                            dd = _lev(cand, n, rp, nr, row)
                            if not lookahead:
                                v = dd
                                if found and dd >= best_d:
                                    continue
                            else:
                                lb = dd if dd < 1 + floor else 1 + floor
                                if found and (lb > best_v or (lb == best_v and dd >= best_d)):
                                    continue
                                v = dd
                                if dd > 1 + floor and dd <= dist:
                                    v = 1 + _best_after_one_shift(cand, n, rp, nr, floor, buf, row)
                                    if dd < v:
                                        v = dd
                                if found and not (v < best_v or (v == best_v and dd < best_d)):
                                    continue
                            found = True
                            best_v = v
                            best_d = dd
                            bi = i
                            bj = j
                            bk = k
                if not found:
                    break
                if lookahead:
                    if 1 + best_v >= dist:
                        break
                elif best_d >= dist:
                    break
                _shifted(cur, n, bi, bj, bk, cand)
                tmp = cur
                cur = cand
                cand = tmp
                dist = best_d
                shifts += 1
        return shifts, dist
    finally:
        free(cur)
        free(cand)
        free(buf)
        free(row)
