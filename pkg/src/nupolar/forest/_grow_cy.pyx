# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree-growth and prediction kernels.

Draw-for-draw and comparison-for-comparison identical to _grow_py (see its
module docstring for the algorithm contract); split quality is compared as
exact rationals using 128-bit products.  test_forest asserts whole-tree
equality between the two backends.
"""
from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    ctypedef long long int128 "__int128"

cdef uint64_t GAMMA = (<uint64_t>0x9E3779B9 << 32) | <uint64_t>0x7F4A7C15
cdef uint64_t MULT1 = (<uint64_t>0xBF58476D << 32) | <uint64_t>0x1CE4E5B9
cdef uint64_t MULT2 = (<uint64_t>0x94D049BB << 32) | <uint64_t>0x133111EB


cdef inline uint64_t _mix(uint64_t seed, uint64_t counter) noexcept nogil:
    cdef uint64_t z = seed + (counter + <uint64_t>1) * GAMMA
    z = (z ^ (z >> 30)) * MULT1
    z = (z ^ (z >> 27)) * MULT2
    return z ^ (z >> 31)


cdef inline void _swap(double* v, uint8_t* lab, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef double tv = v[i]
    cdef uint8_t tl = lab[i]
    v[i] = v[j]
    lab[i] = lab[j]
    v[j] = tv
    lab[j] = tl


cdef void _sort(double* v, uint8_t* lab, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    """3-way quicksort of v[lo:hi] carrying labels along.

    Dutch-flag partitioning keeps heavily duplicated columns (sparse
    histogram features) near O(n); recursion always takes the smaller
    side, so stack depth stays O(log n).
    """
    cdef Py_ssize_t mid, i, lt, gt, j
    cdef double a, b, c, pivot, key
    cdef uint8_t keyl
    while hi - lo > 16:
        mid = lo + (hi - lo) // 2
        a = v[lo]; b = v[mid]; c = v[hi - 1]
        if a > b:
            if b > c:
                pivot = b
            elif a > c:
                pivot = c
            else:
                pivot = a
        else:
            if a > c:
                pivot = a
            elif b > c:
                pivot = c
            else:
                pivot = b
        lt = lo
        gt = hi - 1
        i = lo
        while i <= gt:
            if v[i] < pivot:
                _swap(v, lab, i, lt)
                lt += 1
                i += 1
            elif v[i] > pivot:
                _swap(v, lab, i, gt)
                gt -= 1
            else:
                i += 1
        if lt - lo < hi - gt - 1:
            _sort(v, lab, lo, lt)
            lo = gt + 1
        else:
            _sort(v, lab, gt + 1, hi)
            hi = lt
    # insertion sort for the short tail
    i = lo + 1
    while i < hi:
        key = v[i]
        keyl = lab[i]
        j = i - 1
        while j >= lo and v[j] > key:
            v[j + 1] = v[j]
            lab[j + 1] = lab[j]
            j -= 1
        v[j + 1] = key
        lab[j + 1] = keyl
        i += 1


cdef bint _node_best(
    const double[:, ::1] X, const uint8_t[::1] y,
    int64_t* samples, Py_ssize_t start, Py_ssize_t n_node,
    int32_t* cand, Py_ssize_t n_cand, int64_t P, int64_t N,
    double* vals, uint8_t* labs,
    int32_t* out_f, double* out_thr, int64_t* out_u, int64_t* out_v,
) noexcept nogil:
    """Best admissible split over sorted candidate features; False if none."""
    cdef Py_ssize_t c2, ii, k
    cdef int32_t f
    cdef int64_t cum, pL, nL, lL, pR, nR, lR, u, v
    cdef int64_t best_u = 0, best_v = 1
    cdef int32_t best_f = -1
    cdef double best_thr = 0.0, a, b, thr
    cdef bint found = 0
    if n_node < 2 or P == 0 or N == 0:
        return 0
    for c2 in range(n_cand):
        f = cand[c2]
        for ii in range(n_node):
            vals[ii] = X[samples[start + ii], f]
            labs[ii] = y[samples[start + ii]]
        _sort(vals, labs, 0, n_node)
        cum = 0
        for k in range(1, n_node):
            cum += labs[k - 1]
            if vals[k - 1] == vals[k]:
                continue
            lL = k
            pL = cum
            nL = lL - pL
            lR = n_node - k
            pR = P - pL
            nR = lR - pR
            u = (pL * pL + nL * nL) * lR + (pR * pR + nR * nR) * lL
            v = lL * lR
            if (not found) or (<int128>u) * best_v > (<int128>best_u) * v:
                a = vals[k - 1]
                b = vals[k]
                thr = (a + b) / 2.0
                if not (thr < b):
                    thr = a
                found = 1
                best_u = u
                best_v = v
                best_f = f
                best_thr = thr
    if not found:
        return 0
    if (<int128>n_node) * best_u <= (<int128>(P * P + N * N)) * best_v:
        return 0
    out_f[0] = best_f
    out_thr[0] = best_thr
    out_u[0] = best_u
    out_v[0] = best_v
    return 1


def best_split_on(X, y, sample_idx, candidates):
    """Mirror of _grow_py.best_split_on: (feature, threshold, u, v) or None."""
    cdef const double[:, ::1] Xv = X
    cdef const uint8_t[::1] yv = y
    cdef cnp.ndarray[int64_t, ndim=1] idx = np.ascontiguousarray(sample_idx, dtype=np.int64)
    cdef cnp.ndarray[int32_t, ndim=1] cnd = np.ascontiguousarray(candidates, dtype=np.int32)
    cdef Py_ssize_t n_node = idx.shape[0]
    if n_node < 2 or cnd.shape[0] == 0:
        return None
    cdef cnp.ndarray[double, ndim=1] vals = np.empty(n_node, dtype=np.float64)
    cdef cnp.ndarray[uint8_t, ndim=1] labs = np.empty(n_node, dtype=np.uint8)
    cdef int64_t P = 0
    cdef Py_ssize_t i
    for i in range(n_node):
        P += yv[idx[i]]
    cdef int32_t f = -1
    cdef double thr = 0.0
    cdef int64_t u = 0, v = 1
    cdef bint ok = _node_best(
        Xv, yv, &idx[0], 0, n_node, &cnd[0], cnd.shape[0], P, n_node - P,
        &vals[0], &labs[0], &f, &thr, &u, &v,
    )
    if not ok:
        return None
    return int(f), float(thr), int(u), int(v)


def grow_tree(X, y, seed, max_features, min_samples_split, max_depth):
    """Compiled twin of _grow_py.grow_tree; same flat-array output."""
    cdef const double[:, ::1] Xv = X
    cdef const uint8_t[::1] yv = y
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t d = Xv.shape[1]
    cdef uint64_t sd = seed
    cdef Py_ssize_t mf = max_features
    cdef Py_ssize_t mss = min_samples_split
    cdef Py_ssize_t md = -1 if max_depth is None else max_depth
    if n == 0:
        raise ValueError("cannot grow a tree on an empty sample set")
    if n > 1_500_000:
        raise ValueError("node size exceeds exact-arithmetic limit 1500000")

    cdef Py_ssize_t cap = 2 * n + 1
    cdef cnp.ndarray[int32_t, ndim=1] feature = np.full(cap, -1, dtype=np.int32)
    cdef cnp.ndarray[double, ndim=1] threshold = np.zeros(cap, dtype=np.float64)
    cdef cnp.ndarray[int32_t, ndim=1] left = np.full(cap, -1, dtype=np.int32)
    cdef cnp.ndarray[int32_t, ndim=1] right = np.full(cap, -1, dtype=np.int32)
    cdef cnp.ndarray[double, ndim=1] value = np.zeros(cap, dtype=np.float64)
    cdef cnp.ndarray[int32_t, ndim=1] nsamp = np.zeros(cap, dtype=np.int32)

    cdef cnp.ndarray[int64_t, ndim=1] samples = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] vals = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[uint8_t, ndim=1] labs = np.empty(n, dtype=np.uint8)
    cdef cnp.ndarray[int32_t, ndim=1] perm = np.empty(d, dtype=np.int32)
    # stack rows: start, end, depth, parent, is_left
    cdef cnp.ndarray[int64_t, ndim=2] stack = np.empty((n + 2, 5), dtype=np.int64)

    cdef int64_t[::1] smp = samples
    cdef double[::1] vv = vals
    cdef uint8_t[::1] lv = labs
    cdef int32_t[::1] pm = perm
    cdef int64_t[:, ::1] st = stack
    cdef int32_t[::1] ftr = feature
    cdef double[::1] thr_a = threshold
    cdef int32_t[::1] lft = left
    cdef int32_t[::1] rgt = right
    cdef double[::1] val_a = value
    cdef int32_t[::1] nsp = nsamp

    cdef uint64_t ctr = 0
    cdef Py_ssize_t sp, n_nodes, start, end, depth, nid, n_node, i, j, i3, j3, mid
    cdef int64_t parent, is_left, P, tmp
    cdef int32_t tf, bf = -1
    cdef double bthr = 0.0
    cdef int64_t bu = 0, bv = 1
    cdef bint ok

    with nogil:
        for i in range(n):
            smp[i] = <int64_t>(_mix(sd, ctr) % <uint64_t>n)
            ctr += 1
        st[0, 0] = 0
        st[0, 1] = n
        st[0, 2] = 0
        st[0, 3] = -1
        st[0, 4] = 0
        sp = 1
        n_nodes = 0
        while sp > 0:
            sp -= 1
            start = <Py_ssize_t>st[sp, 0]
            end = <Py_ssize_t>st[sp, 1]
            depth = <Py_ssize_t>st[sp, 2]
            parent = st[sp, 3]
            is_left = st[sp, 4]
            nid = n_nodes
            n_nodes += 1
            if parent >= 0:
                if is_left:
                    lft[<Py_ssize_t>parent] = <int32_t>nid
                else:
                    rgt[<Py_ssize_t>parent] = <int32_t>nid
            n_node = end - start
            P = 0
            for i in range(start, end):
                P += yv[smp[i]]
            val_a[nid] = <double>P / <double>n_node
            nsp[nid] = <int32_t>n_node
            if P == 0 or P == n_node or n_node < mss or depth == md:
                continue
            # per-node feature subset: partial Fisher-Yates, then ascending
            for i in range(d):
                pm[i] = <int32_t>i
            for i in range(mf):
                j = i + <Py_ssize_t>(_mix(sd, ctr) % <uint64_t>(d - i))
                ctr += 1
                tf = pm[i]
                pm[i] = pm[j]
                pm[j] = tf
            for i in range(1, mf):
                tf = pm[i]
                j = i - 1
                while j >= 0 and pm[j] > tf:
                    pm[j + 1] = pm[j]
                    j -= 1
                pm[j + 1] = tf
            ok = _node_best(
                Xv, yv, &smp[0], start, n_node, &pm[0], mf, P, n_node - P,
                &vv[0], &lv[0], &bf, &bthr, &bu, &bv,
            )
            if not ok:
                continue
            # in-place partition: rows with value <= threshold go left
            i3 = start
            j3 = end - 1
            while i3 <= j3:
                if Xv[smp[i3], bf] <= bthr:
                    i3 += 1
                else:
                    tmp = smp[i3]
                    smp[i3] = smp[j3]
                    smp[j3] = tmp
                    j3 -= 1
            mid = i3
            ftr[nid] = bf
            thr_a[nid] = bthr
            st[sp, 0] = mid
            st[sp, 1] = end
            st[sp, 2] = depth + 1
            st[sp, 3] = nid
            st[sp, 4] = 0
            sp += 1
            st[sp, 0] = start
            st[sp, 1] = mid
            st[sp, 2] = depth + 1
            st[sp, 3] = nid
            st[sp, 4] = 1
            sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        nsamp[:n_nodes].copy(),
    )


def predict_into(feature, threshold, left, right, value, X, acc):
    """Route every row of X through one tree; add leaf values into acc."""
    cdef const int32_t[::1] ftr = feature
    cdef const double[::1] thr = threshold
    cdef const int32_t[::1] lft = left
    cdef const int32_t[::1] rgt = right
    cdef const double[::1] val = value
    cdef const double[:, ::1] Xv = X
    cdef double[::1] out = acc
    cdef Py_ssize_t i, node
    with nogil:
        for i in range(Xv.shape[0]):
            node = 0
            while ftr[node] >= 0:
                if Xv[i, ftr[node]] <= thr[node]:
                    node = lft[node]
                else:
                    node = rgt[node]
            out[i] += val[node]
