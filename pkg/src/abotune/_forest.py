"""Compiled kernels for the regression forest.

Trees are grown level by level.  Every feature column is presorted once per
fit; at each level a single sweep over a column in sorted order visits the
rows of all open nodes, so evaluating every midpoint split of every node on
one feature costs O(n).  Bootstrap resampling is expressed as integer row
weights, which lets all trees share the presorted order.
"""

import numpy as np
from numba import njit

_NO_CHILD = -1

# Children of a split node are allocated consecutively: right == left + 1.


@njit(cache=True)
def _grow_tree(X, y, order, weight, min_samples_leaf, n_try, seed,
               feature, threshold, left, value):
    """Grow one tree into the preallocated node arrays; return node count."""
    np.random.seed(seed)
    n, n_feat = X.shape
    max_nodes = feature.shape[0]

    node_of = np.full(n, -1, np.int64)
    for i in range(n):
        if weight[i] > 0:
            node_of[i] = 0

    # per-node totals: weighted count, weighted sum, distinct row count
    tot_w = np.zeros(max_nodes)
    tot_s = np.zeros(max_nodes)
    tot_c = np.zeros(max_nodes, np.int64)
    for i in range(n):
        if weight[i] > 0:
            tot_w[0] += weight[i]
            tot_s[0] += weight[i] * y[i]
            tot_c[0] += 1

    # rows still in open nodes, kept sorted per feature (feature-major)
    active = np.empty((n_feat, n), np.int64)
    n_active = 0
    for f in range(n_feat):
        t = 0
        for r in range(n):
            i = order[r, f]
            if weight[i] > 0:
                active[f, t] = i
                t += 1
        n_active = t

    n_nodes = 1
    level = np.zeros(1, np.int64)
    level[0] = 0
    slot = np.full(max_nodes, -1, np.int64)

    while level.shape[0] > 0:
        m = level.shape[0]
        for k in range(m):
            slot[level[k]] = k
        best_score = np.full(m, -np.inf)
        best_feat = np.full(m, -1, np.int64)
        best_thr = np.zeros(m)
        parent_score = np.empty(m)
        for k in range(m):
            nd = level[k]
            parent_score[k] = tot_s[nd] * tot_s[nd] / tot_w[nd]

        allowed = np.ones((m, n_feat), np.bool_)
        if n_try < n_feat:
            for k in range(m):
                allowed[k, :] = False
                perm = np.random.permutation(n_feat)
                for t in range(n_try):
                    allowed[k, perm[t]] = True

        acc_w = np.zeros(m)
        acc_s = np.zeros(m)
        acc_c = np.zeros(m, np.int64)
        last = np.zeros(m)
        for f in range(n_feat):
            acc_w[:] = 0.0
            acc_s[:] = 0.0
            acc_c[:] = 0
            for r in range(n_active):
                i = active[f, r]
                nd = node_of[i]
                k = slot[nd]
                if not allowed[k, f]:
                    continue
                v = X[i, f]
                if acc_c[k] > 0 and v > last[k]:
                    c_right = tot_c[nd] - acc_c[k]
                    if acc_c[k] >= min_samples_leaf and c_right >= min_samples_leaf:
                        w_right = tot_w[nd] - acc_w[k]
                        s_right = tot_s[nd] - acc_s[k]
                        score = acc_s[k] * acc_s[k] / acc_w[k] + s_right * s_right / w_right
                        if score > best_score[k]:
                            thr = 0.5 * (last[k] + v)
                            if thr >= v:
                                thr = last[k]
                            best_score[k] = score
                            best_feat[k] = f
                            best_thr[k] = thr
                acc_w[k] += weight[i]
                acc_s[k] += weight[i] * y[i]
                acc_c[k] += 1
                last[k] = v

        n_split = 0
        for k in range(m):
            nd = level[k]
            gain = best_score[k] - parent_score[k]
            tol = 1e-12 * max(1.0, abs(parent_score[k]))
            if best_feat[k] >= 0 and gain > tol and n_nodes + 2 <= max_nodes:
                feature[nd] = best_feat[k]
                threshold[nd] = best_thr[k]
                left[nd] = n_nodes
                n_nodes += 2
                n_split += 1
            else:
                feature[nd] = -1
                left[nd] = _NO_CHILD
                value[nd] = tot_s[nd] / tot_w[nd]

        next_level = np.empty(2 * n_split, np.int64)
        t = 0
        for k in range(m):
            nd = level[k]
            slot[nd] = -1
            if left[nd] != _NO_CHILD:
                next_level[t] = left[nd]
                next_level[t + 1] = left[nd] + 1
                t += 2
        for i in range(n):
            nd = node_of[i]
            if nd < 0 or left[nd] == _NO_CHILD:
                continue
            child = left[nd] + (X[i, feature[nd]] > threshold[nd])
            node_of[i] = child
            tot_w[child] += weight[i]
            tot_s[child] += weight[i] * y[i]
            tot_c[child] += 1
        for k in range(next_level.shape[0]):
            slot[next_level[k]] = k
        if n_split > 0:
            for f in range(n_feat):
                t = 0
                for r in range(n_active):
                    i = active[f, r]
                    if slot[node_of[i]] >= 0:
                        active[f, t] = i
                        t += 1
            n_active = t
        level = next_level
    return n_nodes


@njit(cache=True)
def grow_forest(X, y, weights, min_samples_leaf, n_try, seeds):
    """Grow ``weights.shape[0]`` trees; return stacked node arrays."""
    n, n_feat = X.shape
    n_trees = weights.shape[0]
    max_nodes = 2 * n + 1
    order = np.empty((n, n_feat), np.int64)
    for f in range(n_feat):
        order[:, f] = np.argsort(X[:, f], kind="mergesort")
    feature = np.full((n_trees, max_nodes), -1, np.int64)
    threshold = np.zeros((n_trees, max_nodes))
    left = np.full((n_trees, max_nodes), _NO_CHILD, np.int64)
    value = np.zeros((n_trees, max_nodes))
    counts = np.zeros(n_trees, np.int64)
    for t in range(n_trees):
        counts[t] = _grow_tree(X, y, order, weights[t], min_samples_leaf, n_try, seeds[t],
                               feature[t], threshold[t], left[t], value[t])
    return feature, threshold, left, value, counts


@njit(cache=True)
def predict_forest(X, feature, threshold, left, value):
    """Per-tree predictions, shape ``(n_trees, n_rows)``."""
    n_trees = feature.shape[0]
    n = X.shape[0]
    out = np.empty((n_trees, n))
    for t in range(n_trees):
        feat = feature[t]
        thr = threshold[t]
        lft = left[t]
        val = value[t]
        for i in range(n):
            nd = 0
            while feat[nd] >= 0:
                nd = lft[nd] + (X[i, feat[nd]] > thr[nd])
            out[t, i] = val[nd]
    return out
