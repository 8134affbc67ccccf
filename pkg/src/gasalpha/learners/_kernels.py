"""Compiled inner loops: exact split search and tree traversal."""

import numpy as np
from numba import njit

# relative tolerance under which two split scores count as tied
TIE_TOL = 1e-12


@njit(cache=True, nogil=True)
def _midpoint(a, b):
    t = 0.5 * (a + b)
    if t >= b or not np.isfinite(t):
        t = a
    return t


@njit(cache=True, nogil=True)
def _better(score, feat, thr, best_score, best_feat, best_thr, tol):
    """Lower score wins; near-ties go to the lower feature, then lower threshold."""
    if best_feat < 0:
        return True
    if score < best_score - tol:
        return True
    if score <= best_score + tol:
        if feat < best_feat:
            return True
        if feat == best_feat and thr < best_thr:
            return True
    return False


@njit(cache=True, nogil=True)
def best_gini_split(X, y, w, rows, features, max_features, min_samples_leaf, min_weight_leaf):
    """Minimise the weighted child Gini impurity ``W_L*gini_L + W_R*gini_R``.

    ``features`` is the visiting order; features constant within the node do
    not count towards ``max_features``.  Returns (feature, threshold, score),
    with feature -1 when no admissible split exists.
    """
    m = rows.shape[0]
    total_w = 0.0
    total_pos = 0.0
    for i in range(m):
        total_w += w[rows[i]]
        total_pos += w[rows[i]] * y[rows[i]]
    tol = TIE_TOL * max(1.0, total_w)
    best_feat = -1
    best_thr = 0.0
    best_score = np.inf
    xs = np.empty(m)
    visited = 0
    for fi in range(features.shape[0]):
        if visited >= max_features:
            break
        f = features[fi]
        for i in range(m):
            xs[i] = X[rows[i], f]
        order = np.argsort(xs)
        if xs[order[0]] >= xs[order[m - 1]]:
            continue
        visited += 1
        wl = 0.0
        pl = 0.0
        for i in range(m - 1):
            r = rows[order[i]]
            wl += w[r]
            pl += w[r] * y[r]
            a = xs[order[i]]
            b = xs[order[i + 1]]
            if not a < b:
                continue
            if i + 1 < min_samples_leaf or m - i - 1 < min_samples_leaf:
                continue
            wr = total_w - wl
            if wl < min_weight_leaf or wr < min_weight_leaf or wl <= 0.0 or wr <= 0.0:
                continue
            pr = total_pos - pl
            nl = wl - pl
            nr = wr - pr
            score = (wl - (pl * pl + nl * nl) / wl) + (wr - (pr * pr + nr * nr) / wr)
            thr = _midpoint(a, b)
            if _better(score, f, thr, best_score, best_feat, best_thr, tol):
                best_score = score
                best_feat = f
                best_thr = thr
    return best_feat, best_thr, best_score


@njit(cache=True, nogil=True)
def soft_threshold(g, alpha):
    if g > alpha:
        return g - alpha
    if g < -alpha:
        return g + alpha
    return 0.0


@njit(cache=True, nogil=True)
def leaf_score(G, H, lam, alpha):
    t = soft_threshold(G, alpha)
    return t * t / (H + lam)


@njit(cache=True, nogil=True)
def best_gain_split(X, g, h, rows, features, lam, alpha, gamma, min_child_weight, min_samples_leaf):
    """Maximise the second-order split gain; returns (feature, threshold, gain)."""
    m = rows.shape[0]
    G = 0.0
    H = 0.0
    for i in range(m):
        G += g[rows[i]]
        H += h[rows[i]]
    parent = leaf_score(G, H, lam, alpha)
    tol = TIE_TOL * max(1.0, abs(parent))
    best_feat = -1
    best_thr = 0.0
    best_score = np.inf  # negated gain, so lower is better
    xs = np.empty(m)
    for fi in range(features.shape[0]):
        f = features[fi]
        for i in range(m):
            xs[i] = X[rows[i], f]
        order = np.argsort(xs)
        if xs[order[0]] >= xs[order[m - 1]]:
            continue
        gl = 0.0
        hl = 0.0
        for i in range(m - 1):
            r = rows[order[i]]
            gl += g[r]
            hl += h[r]
            a = xs[order[i]]
            b = xs[order[i + 1]]
            if not a < b:
                continue
            if i + 1 < min_samples_leaf or m - i - 1 < min_samples_leaf:
                continue
            hr = H - hl
            if hl < min_child_weight or hr < min_child_weight:
                continue
            gr = G - gl
            gain = 0.5 * (leaf_score(gl, hl, lam, alpha) + leaf_score(gr, hr, lam, alpha) - parent) - gamma
            thr = _midpoint(a, b)
            if _better(-gain, f, thr, best_score, best_feat, best_thr, tol):
                best_score = -gain
                best_feat = f
                best_thr = thr
    return best_feat, best_thr, -best_score


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def _splitmix(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _node_stats(y, w, idx, start, end):
    ww = 0.0
    wp = 0.0
    for i in range(start, end):
        ww += w[idx[i]]
        wp += w[idx[i]] * y[idx[i]]
    return ww, wp


@njit(cache=True, nogil=True)
def _gini_split_presorted(X, y, w, srt, s, e, features, max_features, min_samples_leaf, min_weight_leaf):
    """Same search as ``best_gini_split`` on rows already sorted per feature.

    ``srt[f, s:e]`` lists the node's rows in ascending order of column ``f``.
    """
    m = e - s
    total_w = 0.0
    total_pos = 0.0
    for i in range(s, e):
        r = srt[0, i]
        total_w += w[r]
        total_pos += w[r] * y[r]
    tol = TIE_TOL * max(1.0, total_w)
    best_feat = -1
    best_thr = 0.0
    best_score = np.inf
    visited = 0
    for fi in range(features.shape[0]):
        if visited >= max_features:
            break
        f = features[fi]
        if X[srt[f, s], f] >= X[srt[f, e - 1], f]:
            continue
        visited += 1
        wl = 0.0
        pl = 0.0
        for i in range(m - 1):
            r = srt[f, s + i]
            wl += w[r]
            pl += w[r] * y[r]
            a = X[r, f]
            b = X[srt[f, s + i + 1], f]
            if not a < b:
                continue
            if i + 1 < min_samples_leaf or m - i - 1 < min_samples_leaf:
                continue
            wr = total_w - wl
            if wl < min_weight_leaf or wr < min_weight_leaf or wl <= 0.0 or wr <= 0.0:
                continue
            pr = total_pos - pl
            nl = wl - pl
            nr = wr - pr
            score = (wl - (pl * pl + nl * nl) / wl) + (wr - (pr * pr + nr * nr) / wr)
            thr = _midpoint(a, b)
            if _better(score, f, thr, best_score, best_feat, best_thr, tol):
                best_score = score
                best_feat = f
                best_thr = thr
    return best_feat, best_thr, best_score


@njit(cache=True, nogil=True)
def grow_gini_tree(X, y, w, presorted, max_features, max_depth, min_samples_split, min_samples_leaf,
                   min_weight_leaf, max_leaf_nodes, seed):
    """Whole CART growth loop.

    ``presorted[f]`` lists the training rows in ascending order of column ``f``.
    Negative ``max_depth`` / ``max_leaf_nodes`` mean unlimited.  With a leaf
    budget the candidate with the largest impurity decrease is split first
    (ties: lowest node id); otherwise every admissible node is split.  Per-node
    feature subsets come from a splitmix64 stream started at ``seed``.
    """
    n_feat = X.shape[1]
    m = presorted.shape[1]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    prob = np.zeros(cap)
    weight = np.zeros(cap)
    impurity = np.zeros(cap)
    n_samples = np.zeros(cap, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    end = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    # pending split per node: feature (-1 = none), threshold, gain
    c_feat = np.full(cap, -1, dtype=np.int64)
    c_thr = np.zeros(cap)
    c_gain = np.zeros(cap)
    # per-feature row lists; every node owns the same segment in each list
    srt = presorted.copy()
    goes_left = np.zeros(X.shape[0], dtype=np.bool_)
    scratch = np.empty(m, dtype=np.int64)
    order = np.arange(n_feat).astype(np.int64)
    state = np.uint64(seed)
    subsample = max_features < n_feat

    n_nodes = 1
    start[0] = 0
    end[0] = m
    pending = np.empty(cap, dtype=np.int64)
    n_pending = 0
    n_leaves = 1
    nid = 0
    while True:
        # evaluate node nid (fresh nodes are evaluated in id order)
        while nid < n_nodes:
            s, e = start[nid], end[nid]
            ww, wp = _node_stats(y, w, srt[0], s, e)
            weight[nid] = ww
            n_samples[nid] = e - s
            p = wp / ww if ww > 0 else 0.5
            prob[nid] = p
            impurity[nid] = 1.0 - p * p - (1.0 - p) * (1.0 - p) if ww > 0 else 0.0
            ok = True
            if max_depth >= 0 and depth[nid] >= max_depth:
                ok = False
            if e - s < min_samples_split or e - s < 2 * min_samples_leaf:
                ok = False
            if impurity[nid] <= 0.0 or ww < 2 * min_weight_leaf:
                ok = False
            if ok:
                if subsample:
                    for i in range(n_feat):
                        order[i] = i
                    for i in range(n_feat - 1, 0, -1):
                        state, r = _splitmix(state)
                        j = np.int64(r % np.uint64(i + 1))
                        t = order[i]
                        order[i] = order[j]
                        order[j] = t
                f, thr, score = _gini_split_presorted(X, y, w, srt, s, e, order, max_features,
                                                      min_samples_leaf, min_weight_leaf)
                if f >= 0:
                    c_feat[nid] = f
                    c_thr[nid] = thr
                    c_gain[nid] = ww * impurity[nid] - score
                    pending[n_pending] = nid
                    n_pending += 1
            nid += 1
        if n_pending == 0 or (max_leaf_nodes > 0 and n_leaves >= max_leaf_nodes):
            break
        # choose the node to split
        pick = 0
        if max_leaf_nodes > 0:
            for k in range(1, n_pending):
                a = pending[k]
                b = pending[pick]
                if c_gain[a] > c_gain[b] or (c_gain[a] == c_gain[b] and a < b):
                    pick = k
        node = pending[pick]
        pending[pick] = pending[n_pending - 1]
        n_pending -= 1
        f = c_feat[node]
        thr = c_thr[node]
        s, e = start[node], end[node]
        # stable partition of every feature's list for this node
        nl = 0
        for i in range(s, e):
            r = srt[0, i]
            goes_left[r] = X[r, f] <= thr
            if goes_left[r]:
                nl += 1
        for g in range(n_feat):
            a = 0
            b = 0
            for i in range(s, e):
                r = srt[g, i]
                if goes_left[r]:
                    srt[g, s + a] = r
                    a += 1
                else:
                    scratch[b] = r
                    b += 1
            for i in range(b):
                srt[g, s + a + i] = scratch[i]
        lft = n_nodes
        rgt = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = thr
        left[node] = lft
        right[node] = rgt
        start[lft], end[lft] = s, s + nl
        start[rgt], end[rgt] = s + nl, e
        depth[lft] = depth[node] + 1
        depth[rgt] = depth[node] + 1
        n_leaves += 1
    k = n_nodes
    return (feature[:k], threshold[:k], left[:k], right[:k], prob[:k], weight[:k], impurity[:k],
            n_samples[:k])
