"""Hot numeric kernels: exact greedy tree growth and packed-ensemble routing.

Each kernel exists twice.  The ``*_nb`` functions are plain loops compiled by
numba; the ``*_np`` functions are numpy-vectorized equivalents.  Both use the
same stable sort and the same left-to-right accumulation order, so given the
same inputs they return bit-identical arrays.  ``_backend.BACKEND`` decides
which pair the public wrappers call.
"""
import numpy as np

from ._backend import BACKEND, maybe_njit

LEAF = -1


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


@maybe_njit
def _best_split_nb(X, g, h, idx, G, H, lam, gamma, min_child_weight):
    m = idx.shape[0]
    d = X.shape[1]
    best_gain = 0.0
    best_feat = -1
    best_thr = 0.0
    found = False
    parent = G * G / (H + lam)
    vals = np.empty(m)
    for f in range(d):
        for k in range(m):
            vals[k] = X[idx[k], f]
        order = np.argsort(vals, kind="mergesort")
        GL = 0.0
        HL = 0.0
        for k in range(m - 1):
            s = idx[order[k]]
            GL += g[s]
            HL += h[s]
            lo = vals[order[k]]
            hi = vals[order[k + 1]]
            if not lo < hi:
                continue
            GR = G - GL
            HR = H - HL
            if HL < min_child_weight or HR < min_child_weight:
                continue
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - gamma
            if (not found) or gain > best_gain:
                found = True
                best_gain = gain
                best_feat = f
                thr = 0.5 * (lo + hi)
                if thr <= lo:
                    thr = hi
                best_thr = thr
    return found, best_feat, best_thr, best_gain


@maybe_njit
def _grow_tree_nb(X, g, h, max_depth, lam, gamma, eta, min_child_weight):
    n = X.shape[0]
    # every leaf holds at least one sample, so a tree has at most 2n - 1 nodes
    cap = 2 * n - 1
    full = 1
    for _ in range(max_depth + 1):
        full *= 2
        if full > cap + 1:
            break
    cap = min(cap, full - 1)

    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain_out = np.zeros(cap)
    sum_h = np.zeros(cap)

    samples = np.arange(n)
    buf = np.empty(n, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    stop[0] = n
    n_nodes = 1
    head = 0
    while head < n_nodes:
        node = head
        head += 1
        idx = samples[start[node]:stop[node]]
        m = idx.shape[0]
        G = 0.0
        H = 0.0
        for k in range(m):
            G += g[idx[k]]
            H += h[idx[k]]
        sum_h[node] = H
        found = False
        feat = -1
        thr = 0.0
        gain = 0.0
        if depth[node] < max_depth and m > 1:
            found, feat, thr, gain = _best_split_nb(
                X, g, h, idx, G, H, lam, gamma, min_child_weight
            )
        if found and gain > 0.0:
            # stable partition: left block keeps ascending sample order
            nl = 0
            for k in range(m):
                if X[idx[k], feat] < thr:
                    buf[nl] = idx[k]
                    nl += 1
            nr = nl
            for k in range(m):
                if not X[idx[k], feat] < thr:
                    buf[nr] = idx[k]
                    nr += 1
            for k in range(m):
                samples[start[node] + k] = buf[k]
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            feature[node] = feat
            threshold[node] = thr
            gain_out[node] = gain
            left[node] = lc
            right[node] = rc
            start[lc] = start[node]
            stop[lc] = start[node] + nl
            start[rc] = start[node] + nl
            stop[rc] = stop[node]
            depth[lc] = depth[node] + 1
            depth[rc] = depth[node] + 1
        else:
            if H + lam <= 0.0:
                raise ValueError("degenerate leaf: hessian sum + lambda is zero")
            value[node] = eta * (-G / (H + lam))
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        gain_out[:n_nodes].copy(),
        sum_h[:n_nodes].copy(),
    )


@maybe_njit
def _predict_groups_nb(X, feature, threshold, left, right, value, roots, group_of_tree, n_groups):
    n = X.shape[0]
    out = np.zeros((n, n_groups))
    for i in range(n):
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, group_of_tree[t]] += value[node]
    return out


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _best_split_np(X, g, h, idx, G, H, lam, gamma, min_child_weight):
    best = (False, -1, 0.0, 0.0)
    parent = G * G / (H + lam)
    gi = g[idx]
    hi_ = h[idx]
    for f in range(X.shape[1]):
        vals = X[idx, f]
        order = np.argsort(vals, kind="mergesort")
        sv = vals[order]
        GL = np.cumsum(gi[order])[:-1]
        HL = np.cumsum(hi_[order])[:-1]
        GR = G - GL
        HR = H - HL
        ok = (sv[:-1] < sv[1:]) & (HL >= min_child_weight) & (HR >= min_child_weight)
        if not ok.any():
            continue
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent) - gamma
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        if (not best[0]) or gain[k] > best[3]:
            lo, hi = sv[k], sv[k + 1]
            thr = 0.5 * (lo + hi)
            if thr <= lo:
                thr = hi
            best = (True, f, float(thr), float(gain[k]))
    return best


def _grow_tree_np(X, g, h, max_depth, lam, gamma, eta, min_child_weight):
    n = X.shape[0]
    feature, threshold, left, right, value, gain_out, sum_h = [], [], [], [], [], [], []
    queue = [(np.arange(n), 0)]
    head = 0
    while head < len(queue):
        idx, depth = queue[head]
        head += 1
        G = float(np.cumsum(g[idx])[-1])
        H = float(np.cumsum(h[idx])[-1])
        sum_h.append(H)
        found, feat, thr, gain = False, -1, 0.0, 0.0
        if depth < max_depth and idx.shape[0] > 1:
            found, feat, thr, gain = _best_split_np(X, g, h, idx, G, H, lam, gamma, min_child_weight)
        if found and gain > 0.0:
            go_left = X[idx, feat] < thr
            lc = len(queue)
            queue.append((idx[go_left], depth + 1))
            queue.append((idx[~go_left], depth + 1))
            feature.append(feat)
            threshold.append(thr)
            left.append(lc)
            right.append(lc + 1)
            value.append(0.0)
            gain_out.append(gain)
        else:
            if H + lam <= 0.0:
                raise ValueError("degenerate leaf: hessian sum + lambda is zero")
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(eta * (-G / (H + lam)))
            gain_out.append(0.0)
    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
        np.asarray(gain_out, dtype=np.float64),
        np.asarray(sum_h, dtype=np.float64),
    )


def _predict_groups_np(X, feature, threshold, left, right, value, roots, group_of_tree, n_groups):
    n = X.shape[0]
    out = np.zeros((n, n_groups))
    rows = np.arange(n)
    for t in range(roots.shape[0]):
        node = np.full(n, roots[t], dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            a = node[active]
            goes_left = X[rows[active], feature[a]] < threshold[a]
            node[active] = np.where(goes_left, left[a], right[a])
            active = feature[node] >= 0
        out[:, group_of_tree[t]] += value[node]
    return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def grow_tree(X, g, h, max_depth, lam, gamma, eta, min_child_weight, backend=None):
    """Grow one regression tree; returns the raw node arrays."""
    backend = backend or BACKEND
    args = (
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(g, dtype=np.float64),
        np.ascontiguousarray(h, dtype=np.float64),
        int(max_depth),
        float(lam),
        float(gamma),
        float(eta),
        float(min_child_weight),
    )
    if backend == "numba":
        return _grow_tree_nb(*args)
    return _grow_tree_np(*args)


def predict_groups(X, packed, backend=None):
    """Per-group margin sums for a packed forest, shape ``(n_samples, n_groups)``."""
    backend = backend or BACKEND
    X = np.ascontiguousarray(X, dtype=np.float64)
    if backend == "numba":
        return _predict_groups_nb(X, *packed)
    return _predict_groups_np(X, *packed)
