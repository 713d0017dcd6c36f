"""Compiled tree-induction and routing kernels.

Randomness is counter-based: every draw is a hash of (tree key, node path key, counter),
so fitted trees do not depend on training-row order.
"""
import numpy as np
from numba import njit

_U = np.uint64
GOLDEN = _U(0x9E3779B97F4A7C15)
M1 = _U(0xBF58476D1CE4E5B9)
M2 = _U(0x94D049BB133111EB)
S30, S27, S31, S11 = _U(30), _U(27), _U(31), _U(11)
INV53 = 1.0 / 9007199254740992.0

MODE_RF = 0
MODE_ERT = 1


@njit(cache=True)
def mix64(x):
    x = x + GOLDEN
    x = (x ^ (x >> S30)) * M1
    x = (x ^ (x >> S27)) * M2
    return x ^ (x >> S31)


@njit(cache=True)
def uniform(key, counter):
    """Uniform in [0, 1) from a 64-bit key and a counter."""
    return float(mix64(key ^ mix64(_U(counter))) >> S11) * INV53


@njit(cache=True)
def child_key(key, side):
    return mix64(key ^ mix64(_U(side + 1) * M1))


@njit(cache=True)
def row_hashes(X, y):
    """Content hash per row (feature bits + label)."""
    n, d = X.shape
    bits = X.view(np.uint64)
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        h = mix64(_U(y[i]))
        for j in range(d):
            h = mix64(h ^ bits[i, j])
        out[i] = h
    return out


@njit(cache=True)
def poisson_weights(row_keys, tree_key):
    """Poisson(1) multiplicity per row, keyed by row content (order-independent bootstrap)."""
    n = row_keys.shape[0]
    w = np.empty(n, dtype=np.float64)
    for i in range(n):
        u = uniform(tree_key ^ row_keys[i], 0)
        # inverse CDF of Poisson(1)
        k = 0
        p = np.exp(-1.0)
        cdf = p
        while u >= cdf and k < 50:
            k += 1
            p = p / k
            cdf += p
        w[i] = k
    return w


@njit(cache=True)
def _gini_sum(counts, total):
    """total * gini(counts)."""
    if total <= 0.0:
        return 0.0
    s = 0.0
    for c in range(counts.shape[0]):
        s += counts[c] * counts[c]
    return total - s / total


@njit(cache=True)
def _better(gain, f, thr, best_gain, best_f, best_thr):
    if best_f < 0:
        return True
    if gain > best_gain:
        return True
    if gain == best_gain:
        if f < best_f:
            return True
        if f == best_f and thr < best_thr:
            return True
    return False


@njit(cache=True)
def build_tree(X, y, w, n_classes, mode, k_candidates, min_split, max_depth, tree_key):
    """Grow one tree on rows with positive weight.

    Returns (feature, threshold, left, right, counts, gain) node arrays; leaves have
    feature == -1. ``gain`` is the weighted impurity decrease at each internal node.
    """
    n_all, d = X.shape
    idx_list = np.flatnonzero(w > 0.0)
    n = idx_list.shape[0]
    cap = 2 * max(n, 1) + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, n_classes), dtype=np.float64)
    gain_arr = np.zeros(cap, dtype=np.float64)

    idx = idx_list.copy()
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_key = np.empty(cap, dtype=np.uint64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_key[0] = tree_key
    sp = 1
    n_nodes = 1

    perm_keys = np.empty(d, dtype=np.float64)
    vals = np.empty(n, dtype=np.float64)
    cl = np.empty(n_classes, dtype=np.float64)
    cr = np.empty(n_classes, dtype=np.float64)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        key = st_key[sp]

        total = 0.0
        for i in range(start, end):
            r = idx[i]
            counts[node, y[r]] += w[r]
            total += w[r]
        n_present = 0
        for c in range(n_classes):
            if counts[node, c] > 0.0:
                n_present += 1
        if n_present <= 1 or total < min_split or (max_depth >= 0 and depth >= max_depth) or end - start < 2:
            continue
        parent_imp = _gini_sum(counts[node], total)

        # visit features in a keyed random order; the first k non-constant ones are candidates
        for j in range(d):
            perm_keys[j] = uniform(key, j)
        order = np.argsort(perm_keys)

        best_f = -1
        best_thr = 0.0
        best_gain = 0.0
        n_tried = 0
        for oi in range(d):
            if n_tried >= k_candidates:
                break
            f = order[oi]
            lo = np.inf
            hi = -np.inf
            for i in range(start, end):
                v = X[idx[i], f]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if not hi > lo:
                continue
            n_tried += 1

            if mode == MODE_ERT:
                u = uniform(key, d + f)
                thr = lo + u * (hi - lo)
                if thr >= hi:
                    thr = lo
                for c in range(n_classes):
                    cl[c] = 0.0
                wl = 0.0
                for i in range(start, end):
                    r = idx[i]
                    if X[r, f] <= thr:
                        cl[y[r]] += w[r]
                        wl += w[r]
                for c in range(n_classes):
                    cr[c] = counts[node, c] - cl[c]
                g = parent_imp - _gini_sum(cl, wl) - _gini_sum(cr, total - wl)
                if _better(g, f, thr, best_gain, best_f, best_thr):
                    best_gain, best_f, best_thr = g, f, thr
            else:
                m = end - start
                for i in range(m):
                    vals[i] = X[idx[start + i], f]
                srt = np.argsort(vals[:m])
                for c in range(n_classes):
                    cl[c] = 0.0
                wl = 0.0
                for i in range(m - 1):
                    r = idx[start + srt[i]]
                    cl[y[r]] += w[r]
                    wl += w[r]
                    v0 = vals[srt[i]]
                    v1 = vals[srt[i + 1]]
                    if v1 <= v0:
                        continue
                    thr = 0.5 * (v0 + v1)
                    if thr >= v1:
                        thr = v0
                    for c in range(n_classes):
                        cr[c] = counts[node, c] - cl[c]
                    g = parent_imp - _gini_sum(cl, wl) - _gini_sum(cr, total - wl)
                    if _better(g, f, thr, best_gain, best_f, best_thr):
                        best_gain, best_f, best_thr = g, f, thr

        if best_f < 0:
            continue

        # partition idx[start:end] so rows with X <= thr come first
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i
        if mid == start or mid == end:
            continue

        feature[node] = best_f
        threshold[node] = best_thr
        gain_arr[node] = best_gain
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode

        st_node[sp] = rnode
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        st_key[sp] = child_key(key, 1)
        sp += 1
        st_node[sp] = lnode
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        st_key[sp] = child_key(key, 0)
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
        gain_arr[:n_nodes].copy(),
    )


@njit(cache=True)
def apply_tree(feature, threshold, left, right, X):
    """Leaf index reached by each row."""
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


@njit(cache=True)
def make_tree_key(seed, tree_index):
    return mix64(mix64(seed) ^ mix64(_U(tree_index) * M2))


@njit(cache=True)
def combine_keys(a, b):
    out = np.empty(a.shape[0], dtype=np.uint64)
    for i in range(a.shape[0]):
        out[i] = mix64(a[i] ^ mix64(b[i]))
    return out
