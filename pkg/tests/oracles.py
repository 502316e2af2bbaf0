"""Independent reference implementations used only by the tests.

They favour obviousness over speed: plain Python loops, exact summation via
``math.fsum`` and no shared code with the package.
"""
from __future__ import annotations

import math


# ---------------------------------------------------------------------------
# split search by direct enumeration
# ---------------------------------------------------------------------------


def gain_of(GL, HL, GR, HR, lam, gamma):
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)) - gamma


def candidate_thresholds(values):
    distinct = sorted(set(values))
    out = []
    for lo, hi in zip(distinct, distinct[1:]):
        mid = (lo + hi) / 2.0
        out.append(hi if mid <= lo else mid)
    return out


def enumerate_splits(rows, g, h, lam, gamma, min_child_weight):
    """All admissible (gain, feature, threshold) for the sample subset ``rows``."""
    out = []
    n_features = len(rows[0][0]) if rows else 0
    for f in range(n_features):
        for thr in candidate_thresholds([x[f] for x, _ in rows]):
            left = [i for x, i in rows if x[f] < thr]
            right = [i for x, i in rows if not x[f] < thr]
            GL = math.fsum(g[i] for i in left)
            HL = math.fsum(h[i] for i in left)
            GR = math.fsum(g[i] for i in right)
            HR = math.fsum(h[i] for i in right)
            if HL < min_child_weight or HR < min_child_weight:
                continue
            out.append((gain_of(GL, HL, GR, HR, lam, gamma), f, thr))
    return out


def best_split(rows, g, h, lam, gamma, min_child_weight):
    """Max gain; ties broken by lowest feature, then lowest threshold."""
    cands = enumerate_splits(rows, g, h, lam, gamma, min_child_weight)
    if not cands:
        return None
    return max(cands, key=lambda c: (c[0], -c[1], -c[2]))


# ---------------------------------------------------------------------------
# ADWIN over an explicit list of values
# ---------------------------------------------------------------------------


class NaiveAdwin:
    """Stores every retained value; bucket capacities mirror the histogram.

    ``caps`` lists bucket capacities oldest first.  Compression merges the two
    oldest buckets of any capacity that occurs more than ``m`` times.
    """

    def __init__(self, delta=0.002, m=5):
        self.delta = delta
        self.m = m
        self.values = []
        self.caps = []

    def _compress(self):
        size = 1
        while True:
            idx = [k for k, c in enumerate(self.caps) if c == size]
            if len(idx) <= self.m:
                return
            a, b = idx[0], idx[1]
            self.caps[a:b + 1] = [2 * size]
            size *= 2

    def add(self, value):
        self.values.append(value)
        self.caps.append(1)
        self._compress()
        n = len(self.values)
        if n < 2:
            return False
        n0 = 0
        for k in range(len(self.caps) - 1):
            n0 += self.caps[k]
            n1 = n - n0
            mu0 = math.fsum(self.values[:n0]) / n0
            mu1 = math.fsum(self.values[n0:]) / n1
            m = 1.0 / (1.0 / n0 + 1.0 / n1)
            eps = math.sqrt(math.log(4.0 * n / self.delta) / (2.0 * m))
            if abs(mu0 - mu1) >= eps:
                del self.values[:n0]
                del self.caps[:k + 1]
                return True
        return False


# ---------------------------------------------------------------------------
# Agrawal classification functions, one sample at a time
# ---------------------------------------------------------------------------


def agrawal_is_group_a(fid, salary, commission, age, elevel, car, zipcode, hvalue, hyears, loan):
    if fid == 1:
        return age < 40 or age >= 60
    if fid == 2:
        if age < 40:
            return 50000 <= salary <= 100000
        if age < 60:
            return 75000 <= salary <= 125000
        return 25000 <= salary <= 75000
    if fid == 3:
        if age < 40:
            return elevel in (0, 1)
        if age < 60:
            return elevel in (1, 2, 3)
        return elevel in (2, 3, 4)
    if fid == 4:
        if age < 40:
            return 25000 <= salary <= 75000 if elevel in (0, 1) else 50000 <= salary <= 100000
        if age < 60:
            return 50000 <= salary <= 100000 if elevel in (1, 2, 3) else 75000 <= salary <= 125000
        return 50000 <= salary <= 100000 if elevel in (2, 3, 4) else 25000 <= salary <= 75000
    if fid == 5:
        if age < 40:
            if 50000 <= salary <= 100000:
                return 100000 <= loan <= 300000
            return 200000 <= loan <= 400000
        if age < 60:
            if 75000 <= salary <= 125000:
                return 200000 <= loan <= 400000
            return 300000 <= loan <= 500000
        if 25000 <= salary <= 75000:
            return 300000 <= loan <= 500000
        return 100000 <= loan <= 300000
    total = salary + commission
    if fid == 6:
        if age < 40:
            return 50000 <= total <= 100000
        if age < 60:
            return 75000 <= total <= 125000
        return 25000 <= total <= 75000
    if fid == 7:
        return 2 * total / 3 - loan / 5 - 20000 > 0
    if fid == 8:
        return 2 * total / 3 - 5000 * elevel - 20000 > 0
    if fid == 9:
        return 2 * total / 3 - 5000 * elevel - loan / 5 - 10000 > 0
    if fid == 10:
        equity = hvalue * (hyears - 20) / 10 if hyears >= 20 else 0.0
        return 2 * total / 3 - 5000 * elevel + equity / 5 - 10000 > 0
    raise ValueError(fid)
