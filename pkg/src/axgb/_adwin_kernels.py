"""Exponential-histogram kernels behind :class:`axgb.adwin.AdwinDetector`.

Plain Python on purpose: the detector runs these directly on the numpy
backend and a numba-compiled copy of this module otherwise.
"""
import math

MAX_ROWS = 64

# state vector slots
_COUNT, _SUM, _VAR, _ROWS = 0, 1, 2, 3


def _insert(bsum, bvar, rowlen, state, value, max_buckets):
    n = state[_COUNT]
    if n > 0:
        mean = state[_SUM] / n
        state[_VAR] += n * (value - mean) * (value - mean) / (n + 1.0)
    state[_COUNT] = n + 1.0
    state[_SUM] += value
    k = rowlen[0]
    bsum[0, k] = value
    bvar[0, k] = 0.0
    rowlen[0] = k + 1
    if state[_ROWS] < 1:
        state[_ROWS] = 1
    # compress: merge the two oldest buckets of an overfull row into the next row
    j = 0
    while rowlen[j] > max_buckets:
        size = 2.0 ** j
        s0 = bsum[j, 0]
        s1 = bsum[j, 1]
        d = s0 / size - s1 / size
        v = bvar[j, 0] + bvar[j, 1] + size * size / (2.0 * size) * d * d
        for k in range(2, rowlen[j]):
            bsum[j, k - 2] = bsum[j, k]
            bvar[j, k - 2] = bvar[j, k]
        rowlen[j] -= 2
        k = rowlen[j + 1]
        bsum[j + 1, k] = s0 + s1
        bvar[j + 1, k] = v
        rowlen[j + 1] = k + 1
        if state[_ROWS] < j + 2:
            state[_ROWS] = j + 2
        j += 1


def _drop_oldest(bsum, bvar, rowlen, state, n_buckets):
    """Remove the ``n_buckets`` oldest buckets."""
    top = int(state[_ROWS]) - 1
    while n_buckets > 0:
        r = rowlen[top]
        if n_buckets >= r:
            rowlen[top] = 0
            n_buckets -= r
            top -= 1
        else:
            for k in range(n_buckets, r):
                bsum[top, k - n_buckets] = bsum[top, k]
                bvar[top, k - n_buckets] = bvar[top, k]
            rowlen[top] = r - n_buckets
            n_buckets = 0
    while top >= 0 and rowlen[top] == 0:
        top -= 1
    state[_ROWS] = top + 1


def _scan_cut(bsum, bvar, rowlen, state, delta):
    """Find the first (oldest) cut; drop W0 and return its size, else 0."""
    n = state[_COUNT]
    total = state[_SUM]
    if n < 2:
        return 0.0
    log_term = math.log(4.0 * n / delta)
    n0 = 0.0
    s0 = 0.0
    v0 = 0.0
    seen = 0
    rows = int(state[_ROWS])
    n_buckets = 0
    for j in range(rows):
        n_buckets += rowlen[j]
    for j in range(rows - 1, -1, -1):
        size = 2.0 ** j
        for k in range(rowlen[j]):
            seen += 1
            if seen == n_buckets:
                return 0.0
            bs = bsum[j, k]
            if n0 > 0:
                d = s0 / n0 - bs / size
                v0 += bvar[j, k] + n0 * size / (n0 + size) * d * d
            else:
                v0 = bvar[j, k]
            n0 += size
            s0 += bs
            n1 = n - n0
            s1 = total - s0
            m = 1.0 / (1.0 / n0 + 1.0 / n1)
            eps = math.sqrt(log_term / (2.0 * m))
            if abs(s0 / n0 - s1 / n1) >= eps:
                d = s0 / n0 - s1 / n1
                var = state[_VAR] - v0 - n0 * n1 / n * d * d
                state[_VAR] = var if var > 0.0 else 0.0
                state[_COUNT] = n1
                state[_SUM] = s1
                _drop_oldest(bsum, bvar, rowlen, state, seen)
                return n0
    return 0.0


def _add_many(bsum, bvar, rowlen, state, values, delta, max_buckets, repeat_cut, stop_on_drift):
    """Feed values in order; returns (consumed, n_drifts)."""
    drifts = 0
    for i in range(values.shape[0]):
        _insert(bsum, bvar, rowlen, state, values[i], max_buckets)
        dropped = _scan_cut(bsum, bvar, rowlen, state, delta)
        if dropped > 0:
            drifts += 1
            while repeat_cut and dropped > 0:
                dropped = _scan_cut(bsum, bvar, rowlen, state, delta)
            if stop_on_drift:
                return i + 1, drifts
    return values.shape[0], drifts
