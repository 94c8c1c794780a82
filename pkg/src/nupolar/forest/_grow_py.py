"""Pure-Python (numpy) tree growth and prediction backend.

This is the fallback used when the compiled extension is unavailable, and
the executable reference the compiled kernel is tested against.  Both
backends implement the identical algorithm:

* bootstrap indices and per-node feature subsets come from the shared
  counter-based stream in ``_rng`` (one counter per draw, consumed in node
  preorder, left subtree first);
* candidate thresholds sit at midpoints of consecutive distinct sorted
  values; split quality is the Gini impurity decrease, compared EXACTLY.

For a parent with class counts (P, N), n = P + N, maximising the decrease
is equivalent to maximising

    S = (pL^2 + nL^2)/lL + (pR^2 + nR^2)/lR  =  u / v,
    u = aL*lR + aR*lL,  v = lL*lR    (all integers),

and the decrease is positive iff n*u > (P^2 + N^2)*v.  Candidates are
compared as exact rationals (u1*v2 vs u2*v1, arbitrary-precision ints
here, 128-bit in the compiled kernel), so tie-breaking -- lower feature
index, then lower threshold -- is exact and both backends match the
brute-force oracle bit for bit.  Exactness of the int64 intermediates u, v
needs 2*n^3 < 2^63, i.e. n below ~1.6e6 samples per tree.
"""
from __future__ import annotations

import numpy as np

from . import _rng

_N_LIMIT = 1_500_000


def _draw_candidates(seed: int, ctr: int, d: int, mf: int) -> tuple[list[int], int]:
    """mf distinct feature indices (sorted ascending) via partial Fisher-Yates."""
    perm = list(range(d))
    for i in range(mf):
        j = i + _rng.bounded(seed, ctr, d - i)
        ctr += 1
        perm[i], perm[j] = perm[j], perm[i]
    return sorted(perm[:mf]), ctr


def best_split_on(X, y, sample_idx, candidates):
    """Best admissible split of the node holding ``sample_idx``.

    ``candidates`` must be sorted ascending.  Returns (feature, threshold,
    u, v) or None when no split strictly decreases impurity.
    """
    idx = np.asarray(sample_idx, dtype=np.intp)
    n_node = idx.size
    if n_node < 2:
        return None
    if n_node > _N_LIMIT:
        raise ValueError(f"node size {n_node} exceeds exact-arithmetic limit {_N_LIMIT}")
    ysub = y[idx].astype(np.int64)
    P = int(ysub.sum())
    N = n_node - P
    if P == 0 or N == 0:
        return None

    best = None   # (u, v, feature, threshold) with u, v Python ints
    for f in candidates:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        cum = np.cumsum(ysub[order])
        ks = np.flatnonzero(sv[1:] != sv[:-1]) + 1
        if ks.size == 0:
            continue
        lL = ks.astype(np.int64)
        pL = cum[ks - 1]
        nL = lL - pL
        lR = n_node - lL
        pR = P - pL
        nR = lR - pR
        u = (pL * pL + nL * nL) * lR + (pR * pR + nR * nR) * lL
        v = lL * lR
        # float prefilter keeps the exact comparisons to a handful of
        # near-maximal candidates; the true max is always within the band
        q = u / v
        qm = q.max()
        for s in np.flatnonzero(q >= qm * (1.0 - 1e-12)):
            uu, vv = int(u[s]), int(v[s])
            if best is None or uu * best[1] > best[0] * vv:
                k = int(ks[s])
                a, b = float(sv[k - 1]), float(sv[k])
                thr = (a + b) / 2.0
                if not (thr < b):   # midpoint rounded up to b: keep b on the right
                    thr = a
                best = (uu, vv, int(f), thr)
    if best is None:
        return None
    u, v, f, thr = best
    if n_node * u <= (P * P + N * N) * v:   # exact: no positive decrease
        return None
    return f, thr, u, v


def grow_tree(X, y, seed, max_features, min_samples_split, max_depth):
    """Grow one CART tree on a bootstrap sample; flat-array representation.

    Returns (feature, threshold, left, right, value, n_node_samples);
    feature = -1 marks leaves, node 0 is the root, children carry higher
    indices (preorder, left subtree first).
    """
    n, d = X.shape
    seed = int(seed) & _rng.MASK
    md = -1 if max_depth is None else int(max_depth)

    samples = (_rng.mix_block(seed, 0, n) % np.uint64(n)).astype(np.intp)
    ctr = n

    feature, threshold = [], []
    left, right = [], []
    value, n_node_samples = [], []
    stack = [(0, n, 0, -1, False)]
    while stack:
        start, end, depth, parent, is_left = stack.pop()
        nid = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        if parent >= 0:
            if is_left:
                left[parent] = nid
            else:
                right[parent] = nid
        idx = samples[start:end]
        n_node = end - start
        P = int(y[idx].sum())
        value.append(P / n_node)
        n_node_samples.append(n_node)
        if P == 0 or P == n_node or n_node < min_samples_split or depth == md:
            continue
        cand, ctr = _draw_candidates(seed, ctr, d, max_features)
        found = best_split_on(X, y, idx, cand)
        if found is None:
            continue
        f, thr, _, _ = found
        go_left = X[idx, f] <= thr
        samples[start:end] = np.concatenate([idx[go_left], idx[~go_left]])
        mid = start + int(go_left.sum())
        feature[nid] = f
        threshold[nid] = thr
        stack.append((mid, end, depth + 1, nid, False))
        stack.append((start, mid, depth + 1, nid, True))

    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(value, dtype=np.float64),
        np.array(n_node_samples, dtype=np.int32),
    )


def predict_into(feature, threshold, left, right, value, X, acc):
    """Route every row of X through one tree; add leaf values into acc."""
    node = np.zeros(X.shape[0], dtype=np.int32)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        cur = node[active]
        f = feature[cur]
        go_left = X[active, f] <= threshold[cur]
        nxt = np.where(go_left, left[cur], right[cur])
        node[active] = nxt
        active = active[feature[nxt] >= 0]
    acc += value[node]
