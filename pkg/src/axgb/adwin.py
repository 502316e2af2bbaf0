"""ADWIN change detector over a bounded signal.

The window is kept as an exponential histogram: row ``j`` holds buckets that
each summarize ``2**j`` consecutive values, at most ``max_buckets`` per row.
After each insertion every bucket boundary splits the window into an older
part ``W0`` and a newer part ``W1``; the older part is dropped at the first
boundary (oldest first) where the sub-window means differ by at least

    eps_cut = sqrt(1 / (2 m) * ln(4 / delta'))
    m = 1 / (1/n0 + 1/n1),   delta' = delta / n
"""
from __future__ import annotations

import numpy as np

from . import _adwin_kernels
from ._adwin_kernels import MAX_ROWS, _COUNT, _ROWS, _SUM, _VAR
from ._backend import BACKEND, compiled_copy

_KERNELS = {"numpy": _adwin_kernels}
_compiled = compiled_copy(_adwin_kernels, ("_insert", "_drop_oldest", "_scan_cut", "_add_many"))
if _compiled is not None:
    _KERNELS["numba"] = _compiled


class AdwinDetector:
    """Adaptive-windowing detector for a signal in ``[0, 1]``.

    ``add`` returns True when the window was cut.  At most one cut is made per
    insertion unless ``repeat_cut`` is set, in which case the scan repeats
    until no boundary qualifies.
    """

    def __init__(self, delta: float = 0.002, max_buckets: int = 5, repeat_cut: bool = False, backend=None):
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if max_buckets < 2:
            raise ValueError("max_buckets must be >= 2")
        self.delta = float(delta)
        self.max_buckets = int(max_buckets)
        self.repeat_cut = bool(repeat_cut)
        self.backend = backend or BACKEND
        self.n_detections = 0
        self.reset()

    def _fn(self, name):
        return getattr(_KERNELS.get(self.backend, _adwin_kernels), name)

    def reset(self):
        self._bsum = np.zeros((MAX_ROWS, self.max_buckets + 1))
        self._bvar = np.zeros((MAX_ROWS, self.max_buckets + 1))
        self._rowlen = np.zeros(MAX_ROWS, dtype=np.int64)
        self._state = np.zeros(4)
        return self

    def add(self, value: float) -> bool:
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"ADWIN input must lie in [0, 1], got {value}")
        _, drifts = self.add_many(np.array([value]), stop_on_drift=True)
        return drifts > 0

    def add_many(self, values, stop_on_drift: bool = True) -> tuple[int, int]:
        """Feed several values; stops right after the first cut if asked.

        Returns ``(consumed, n_drifts)``.
        """
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("ADWIN input must lie in [0, 1]")
        consumed, drifts = self._fn("_add_many")(
            self._bsum, self._bvar, self._rowlen, self._state, values,
            self.delta, self.max_buckets, self.repeat_cut, stop_on_drift,
        )
        self.n_detections += drifts
        return int(consumed), int(drifts)

    @property
    def width(self) -> int:
        return int(self._state[_COUNT])

    @property
    def total(self) -> float:
        return float(self._state[_SUM])

    @property
    def mean(self) -> float:
        n = self._state[_COUNT]
        return float(self._state[_SUM] / n) if n > 0 else 0.0

    @property
    def variance(self) -> float:
        n = self._state[_COUNT]
        return float(self._state[_VAR] / n) if n > 0 else 0.0

    @property
    def bucket_count(self) -> int:
        return int(self._rowlen.sum())

    def bucket_sizes(self) -> list[int]:
        """Bucket capacities ordered oldest to newest."""
        rows = int(self._state[_ROWS])
        return [2 ** j for j in range(rows - 1, -1, -1) for _ in range(int(self._rowlen[j]))]

    def bucket_sums(self) -> list[float]:
        rows = int(self._state[_ROWS])
        return [float(self._bsum[j, k]) for j in range(rows - 1, -1, -1) for k in range(int(self._rowlen[j]))]

    def __repr__(self):
        return f"AdwinDetector(delta={self.delta}, width={self.width}, mean={self.mean:.4f})"


def adwin_add(detector: AdwinDetector, value: float) -> bool:
    return detector.add(value)


def adwin_width(detector: AdwinDetector) -> int:
    return detector.width


def adwin_mean(detector: AdwinDetector) -> float:
    return detector.mean


def adwin_reset(detector: AdwinDetector) -> AdwinDetector:
    return detector.reset()
