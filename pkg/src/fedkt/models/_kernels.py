"""Compiled inner loops for tree growth and traversal.

Trees are grown depth-first over a single index buffer: each node owns a
contiguous segment ``idx[start:end]`` which is partitioned in place when the
node splits.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _capacity(n, max_depth):
    cap = 2 * n - 1
    if max_depth < 30:
        full = 2 ** (max_depth + 1) - 1
        if full < cap:
            cap = full
    return max(cap, 1)


@njit(cache=True)
def _partition(X, idx, start, end, f, thr):
    """Move rows with ``X[:, f] <= thr`` to the front of the segment; return the split point."""
    i = start
    j = end - 1
    while i <= j:
        if X[idx[i], f] <= thr:
            i += 1
        else:
            tmp = idx[i]
            idx[i] = idx[j]
            idx[j] = tmp
            j -= 1
    return i


@njit(cache=True)
def _midpoint(lo, hi):
    mid = (lo + hi) / 2.0
    if mid >= hi:
        return lo
    return mid


def dense_ranks(X):
    """Per-column dense ranks of ``X`` plus the sorted distinct values.

    Returns ``(ranks, values, offsets, counts)``: column ``f`` has distinct
    values ``values[offsets[f]:offsets[f] + counts[f]]`` and
    ``X[i, f] == values[offsets[f] + ranks[i, f]]``.
    """
    n, d = X.shape
    ranks = np.empty((n, d), np.int64)
    chunks, counts = [], np.empty(d, np.int64)
    for f in range(d):
        vals, inv = np.unique(X[:, f], return_inverse=True)
        ranks[:, f] = inv.reshape(-1)
        chunks.append(vals)
        counts[f] = len(vals)
    offsets = np.zeros(d, np.int64)
    offsets[1:] = np.cumsum(counts)[:-1]
    values = np.concatenate(chunks) if chunks else np.zeros(0)
    return ranks, values, offsets, counts


@njit(cache=True)
def grow_gini_tree(X, ranks, values, offsets, nvals, y, n_classes, max_depth, max_features, shuffle, seed):
    """CART with Gini impurity and exhaustive thresholds.

    At each node features are visited in random order (``shuffle``) or column
    order; constant features are skipped and do not count towards
    ``max_features``. Splits are taken whenever the node is impure and some
    feature varies. Candidate thresholds are midpoints between consecutive
    distinct values present in the node; features with at most ``m`` distinct
    values are scanned by bucketing on ``ranks`` instead of sorting.
    Returns (feature, threshold, left, right, class_counts).
    """
    if shuffle:
        np.random.seed(seed)
    n, d = X.shape
    cap = _capacity(n, max_depth)
    feature = np.full(cap, LEAF, np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, np.int32)
    right = np.full(cap, LEAF, np.int32)
    counts = np.zeros((cap, n_classes))
    idx = np.arange(n)

    for i in range(n):
        counts[0, y[i]] += 1.0
    n_nodes = 1
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0], st_start[0], st_end[0], st_depth[0] = 0, 0, n, 0
    top = 1
    order_feats = np.arange(d)
    lc = np.zeros(n_classes)
    xs = np.empty(n)
    max_k = 1
    for f in range(d):
        if nvals[f] > max_k:
            max_k = nvals[f]
    bucket = np.zeros((min(max_k, n), n_classes))

    while top > 0:
        top -= 1
        node, start, end, depth = st_node[top], st_start[top], st_end[top], st_depth[top]
        m = end - start
        if depth >= max_depth or m < 2:
            continue
        nz = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                nz += 1
        if nz < 2:
            continue

        if shuffle:
            order_feats = np.random.permutation(d)
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        visited = 0
        for fi in range(d):
            if visited >= max_features:
                break
            f = order_feats[fi]
            lo = ranks[idx[start], f]
            hi = lo
            for r in range(start + 1, end):
                v = ranks[idx[r], f]
                if v < lo:
                    lo = v
                elif v > hi:
                    hi = v
            if lo == hi:
                continue
            visited += 1
            if hi - lo + 1 <= m:
                # bucket scan over the rank range present in this node
                for b in range(hi - lo + 1):
                    for c in range(n_classes):
                        bucket[b, c] = 0.0
                for r in range(start, end):
                    bucket[ranks[idx[r], f] - lo, y[idx[r]]] += 1.0
                lc[:] = 0.0
                nl = 0.0
                prev = -1
                for b in range(hi - lo + 1):
                    tot = 0.0
                    for c in range(n_classes):
                        tot += bucket[b, c]
                    if tot == 0.0:
                        continue
                    if prev >= 0:
                        nr = m - nl
                        sl = 0.0
                        sr = 0.0
                        for c in range(n_classes):
                            sl += lc[c] * lc[c]
                            rc = counts[node, c] - lc[c]
                            sr += rc * rc
                        score = sl / nl + sr / nr
                        if score > best_score:
                            best_score = score
                            best_f = f
                            best_thr = _midpoint(values[offsets[f] + lo + prev], values[offsets[f] + lo + b])
                    for c in range(n_classes):
                        lc[c] += bucket[b, c]
                    nl += tot
                    prev = b
            else:
                for r in range(m):
                    xs[r] = X[idx[start + r], f]
                order = np.argsort(xs[:m], kind="mergesort")
                lc[:] = 0.0
                for r in range(m - 1):
                    lc[y[idx[start + order[r]]]] += 1.0
                    a = xs[order[r]]
                    b2 = xs[order[r + 1]]
                    if b2 > a:
                        nl = r + 1.0
                        nr = m - nl
                        sl = 0.0
                        sr = 0.0
                        for c in range(n_classes):
                            sl += lc[c] * lc[c]
                            rc = counts[node, c] - lc[c]
                            sr += rc * rc
                        score = sl / nl + sr / nr
                        if score > best_score:
                            best_score = score
                            best_f = f
                            best_thr = _midpoint(a, b2)
        if best_f < 0:
            continue
        mid = _partition(X, idx, start, end, best_f, best_thr)
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lnode
        right[node] = rnode
        for r in range(start, mid):
            counts[lnode, y[idx[r]]] += 1.0
        for r in range(mid, end):
            counts[rnode, y[idx[r]]] += 1.0
        # right pushed first so the left subtree is grown first
        st_node[top], st_start[top], st_end[top], st_depth[top] = rnode, mid, end, depth + 1
        top += 1
        st_node[top], st_start[top], st_end[top], st_depth[top] = lnode, start, mid, depth + 1
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], counts[:n_nodes])


@njit(cache=True)
def grow_newton_tree(X, g, h, max_depth, reg_lambda, min_child_weight):
    """Regression tree on gradient/hessian pairs; leaf weight ``-G / (H + lambda)``.

    A split needs positive gain and hessian mass >= ``min_child_weight`` on both sides.
    """
    n, d = X.shape
    cap = _capacity(n, max_depth)
    feature = np.full(cap, LEAF, np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, np.int32)
    right = np.full(cap, LEAF, np.int32)
    G = np.zeros(cap)
    H = np.zeros(cap)
    idx = np.arange(n)
    for i in range(n):
        G[0] += g[i]
        H[0] += h[i]
    n_nodes = 1
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0], st_start[0], st_end[0], st_depth[0] = 0, 0, n, 0
    top = 1
    xs = np.empty(n)

    while top > 0:
        top -= 1
        node, start, end, depth = st_node[top], st_start[top], st_end[top], st_depth[top]
        m = end - start
        if depth >= max_depth or m < 2:
            continue
        parent = G[node] * G[node] / (H[node] + reg_lambda)
        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for f in range(d):
            for r in range(m):
                xs[r] = X[idx[start + r], f]
            order = np.argsort(xs[:m], kind="mergesort")
            gl = 0.0
            hl = 0.0
            for r in range(m - 1):
                k = idx[start + order[r]]
                gl += g[k]
                hl += h[k]
                a = xs[order[r]]
                b = xs[order[r + 1]]
                if b > a:
                    hr = H[node] - hl
                    if hl < min_child_weight or hr < min_child_weight:
                        continue
                    gr = G[node] - gl
                    gain = gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_thr = _midpoint(a, b)
        if best_f < 0:
            continue
        mid = _partition(X, idx, start, end, best_f, best_thr)
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lnode
        right[node] = rnode
        for r in range(start, mid):
            G[lnode] += g[idx[r]]
            H[lnode] += h[idx[r]]
        for r in range(mid, end):
            G[rnode] += g[idx[r]]
            H[rnode] += h[idx[r]]
        st_node[top], st_start[top], st_end[top], st_depth[top] = rnode, mid, end, depth + 1
        top += 1
        st_node[top], st_start[top], st_end[top], st_depth[top] = lnode, start, mid, depth + 1
        top += 1

    value = -G[:n_nodes] / (H[:n_nodes] + reg_lambda)
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value)


@njit(cache=True)
def apply_tree(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
