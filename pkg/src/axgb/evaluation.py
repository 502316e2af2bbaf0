"""Prequential (test-then-train) evaluation, grid-search tuning and timing."""
from __future__ import annotations

import csv
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .boosting import TreeParams
from .ensemble import make_model
from .streams import SampleStream

CHUNK = 4096


class EvaluationError(ValueError):
    pass


class ArrayStream(SampleStream):
    """Finite stream over in-memory arrays."""

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.length = len(self.y)
        self.n_features = self.X.shape[1] if self.X.ndim == 2 else 0
        self._pos = 0

    def take(self, n):
        a, b = self._pos, min(self._pos + n, self.length)
        self._pos = b
        return self.X[a:b], self.y[a:b]


def materialize(stream: SampleStream, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    n = stream.length if n is None else n
    if n is None:
        raise EvaluationError("cannot materialize an infinite stream without a length")
    X, y = stream.take(n)
    return X, y


@dataclass
class WindowRecord:
    sample_index: int
    window_accuracy: float
    cumulative_accuracy: float
    members: int
    nodes: int
    drifts: int
    elapsed_seconds: float


@dataclass
class PrequentialReport:
    model: str
    params: dict
    records: list[WindowRecord] = field(default_factory=list)
    n_samples: int = 0
    n_correct: int = 0
    drift_count: int = 0
    peak_nodes: int = 0
    train_seconds: float = 0.0
    drift_indices: list[int] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.n_correct / self.n_samples if self.n_samples else 0.0

    @property
    def throughput_sps(self) -> float:
        return self.n_samples / self.train_seconds if self.train_seconds > 0 else float("inf")

    def accuracy_series(self) -> list[float]:
        return [r.window_accuracy for r in self.records]

    def summary(self, stream=None, seed=None) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "stream": stream,
            "final_accuracy": self.final_accuracy,
            "drift_count": self.drift_count,
            "peak_nodes": self.peak_nodes,
            "train_seconds": self.train_seconds,
            "throughput_sps": self.throughput_sps,
            "seed": seed,
        }

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_index", "window_accuracy", "cumulative_accuracy", "members", "nodes",
                        "drifts", "elapsed_seconds"])
            for r in self.records:
                w.writerow([r.sample_index, repr(r.window_accuracy), repr(r.cumulative_accuracy), r.members,
                            r.nodes, r.drifts, repr(r.elapsed_seconds)])

    def write_json(self, path, stream=None, seed=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(stream, seed), fh, indent=2)
            fh.write("\n")


def _learn_with_detector(model, X, y, correct) -> tuple[int, bool]:
    """Feed outcomes to the model's detector, then learn; returns (processed, drifted).

    Processing stops right after the sample that triggered a drift so the
    reset lands between that sample's outcome and its training step.
    """
    consumed, drifts = model.detector.add_many(correct.astype(np.float64), stop_on_drift=True)
    if not drifts:
        model.learn_many(X, y)
        return len(y), False
    model.learn_many(X[:consumed - 1], y[:consumed - 1])
    model.on_drift()
    model.learn_many(X[consumed - 1:consumed], y[consumed - 1:consumed])
    return consumed, True


def prequential_run(model, stream: SampleStream, report_every: int = 1000, max_samples: int | None = None,
                    checkpoints: Sequence[int] = (), on_checkpoint: Callable | None = None) -> PrequentialReport:
    """Predict each sample, score it, feed the detector, then train on it.

    The model only changes when a window fills, so all samples up to the next
    training event are predicted in one vectorized call; detector outcomes
    are replayed in order and a drift truncates the chunk.

    ``on_checkpoint(t, model)`` is called after exactly ``t`` samples for each
    ``t`` in ``checkpoints``.
    """
    if report_every < 1:
        raise EvaluationError("report_every must be >= 1")
    limit = stream.length if max_samples is None else max_samples
    if stream.length is not None and limit is not None:
        limit = min(limit, stream.length)
    report = PrequentialReport(model=getattr(model, "name", type(model).__name__),
                               params=model.get_params() if hasattr(model, "get_params") else {})
    has_detector = getattr(model, "has_detector", False)
    checkpoints = sorted(set(int(c) for c in checkpoints))
    next_cp = 0
    while next_cp < len(checkpoints) and checkpoints[next_cp] <= 0:
        if checkpoints[next_cp] == 0 and on_checkpoint:
            on_checkpoint(0, model)
        next_cp += 1

    t = 0
    window_correct = 0
    window_start = 0
    Xp, yp = np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    p = 0
    start = time.perf_counter()
    while limit is None or t < limit:
        if p == len(yp):
            want = CHUNK if limit is None else min(CHUNK, limit - t)
            Xp, yp = stream.take(want)
            p = 0
            if len(yp) == 0:
                break
        k = min(model.steps_until_update(), len(yp) - p, report_every - (t - window_start))
        if next_cp < len(checkpoints):
            k = min(k, checkpoints[next_cp] - t)
        Xc, yc = Xp[p:p + k], yp[p:p + k]
        pred, _ = model.predict_many(Xc)
        correct = pred == yc
        if has_detector:
            k, drifted = _learn_with_detector(model, Xc, yc, correct)
            correct = correct[:k]
            if drifted:
                report.drift_count += 1
                report.drift_indices.append(t + k - 1)
        else:
            model.learn_many(Xc, yc)
        n_ok = int(correct.sum())
        report.n_correct += n_ok
        window_correct += n_ok
        t += k
        p += k
        report.n_samples = t
        nodes = model.node_count()
        if nodes > report.peak_nodes:
            report.peak_nodes = nodes
        if t - window_start == report_every:
            report.records.append(WindowRecord(
                t, window_correct / report_every, report.n_correct / t, model.n_members, nodes,
                report.drift_count, time.perf_counter() - start,
            ))
            window_correct = 0
            window_start = t
        if next_cp < len(checkpoints) and t == checkpoints[next_cp]:
            if on_checkpoint:
                on_checkpoint(t, model)
            next_cp += 1
    if t > window_start:
        report.records.append(WindowRecord(
            t, window_correct / (t - window_start), report.n_correct / t, model.n_members,
            model.node_count(), report.drift_count, time.perf_counter() - start,
        ))
    report.train_seconds = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamGrid:
    max_depth: tuple = (1, 5, 10, 15)
    learning_rate: tuple = (0.01, 0.05, 0.1, 0.5)
    ensemble_size: tuple = (5, 10, 25, 50, 100)
    max_window: tuple = (512, 1024, 2048, 4096, 8192)
    min_window: tuple = (4, 8, 16)

    def __post_init__(self):
        for name in ("max_depth", "learning_rate", "ensemble_size", "max_window", "min_window"):
            values = tuple(getattr(self, name))
            if not values:
                raise EvaluationError(f"grid axis {name} is empty")
            object.__setattr__(self, name, values)

    @property
    def size(self) -> int:
        return (len(self.max_depth) * len(self.learning_rate) * len(self.ensemble_size)
                * len(self.max_window) * len(self.min_window))

    def points(self) -> list[dict]:
        out = []
        for d, lr, k, wmax, wmin in itertools.product(self.max_depth, self.learning_rate, self.ensemble_size,
                                                      self.max_window, self.min_window):
            out.append(dict(max_depth=d, learning_rate=lr, ensemble_size=k, max_window=wmax, min_window=wmin))
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "ParamGrid":
        return cls(**{k: tuple(v) for k, v in doc.items()})


def _tie_key(point: dict):
    return (point["ensemble_size"], point["max_depth"], point["learning_rate"],
            point["max_window"], point["min_window"])


def build_model(kind: str, point: dict, base_params: TreeParams | None = None, delta: float = 0.002,
                sub_ensemble_size: int = 30, backend=None):
    base = base_params or TreeParams()
    tp = TreeParams(max_depth=point["max_depth"], lam=base.lam, gamma=base.gamma,
                    learning_rate=point["learning_rate"], min_child_weight=base.min_child_weight)
    w_min = min(point["min_window"], point["max_window"])
    return make_model(kind, n_estimators=point["ensemble_size"], w_min=w_min, w_max=point["max_window"],
                      tree_params=tp, delta=delta, sub_ensemble_size=sub_ensemble_size, backend=backend)


def _evaluate_point(args):
    kind, point, X, y, base, delta, sub = args
    model = build_model(kind, point, base, delta, sub)
    return prequential_run(model, ArrayStream(X, y), report_every=max(1, len(y))).final_accuracy


@dataclass
class GridResult:
    best_params: dict
    validation_accuracy: float
    test_accuracy: float
    evaluations: list[tuple[dict, float]]
    test_report: PrequentialReport

    def to_dict(self) -> dict:
        return {
            "best_params": self.best_params,
            "validation_accuracy": self.validation_accuracy,
            "test_accuracy": self.test_accuracy,
            "n_evaluations": len(self.evaluations),
        }


def grid_search(grid: ParamGrid, X, y, split: float = 0.3, model: str = "axgb_push", jobs: int = 1,
                base_params: TreeParams | None = None, delta: float = 0.002, sub_ensemble_size: int = 30,
                log: Callable[[dict, float], None] | None = None) -> GridResult:
    """Tune on the first ``split`` of the data, then retrain from scratch on the rest.

    Ties on validation accuracy go to the smaller ensemble, then the shallower
    tree, then the lower learning rate (then smaller windows).
    """
    if not 0.0 < split < 1.0:
        raise EvaluationError("split must be in (0, 1)")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    cut = int(round(split * len(y)))
    if cut < 10 or len(y) - cut < 10:
        raise EvaluationError("each phase needs at least 10 samples")
    points = grid.points()
    Xv, yv = X[:cut], y[:cut]
    tasks = [(model, pt, Xv, yv, base_params, delta, sub_ensemble_size) for pt in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(_evaluate_point, tasks))
    else:
        scores = [_evaluate_point(t) for t in tasks]
    evaluations = list(zip(points, scores))
    if log:
        for pt, acc in evaluations:
            log(pt, acc)
    best_point, best_acc = min(evaluations, key=lambda e: (-e[1], _tie_key(e[0])))
    winner = build_model(model, best_point, base_params, delta, sub_ensemble_size)
    test_report = prequential_run(winner, ArrayStream(X[cut:], y[cut:]), report_every=1000)
    return GridResult(best_point, best_acc, test_report.final_accuracy, evaluations, test_report)


# ---------------------------------------------------------------------------
# complexity and timing
# ---------------------------------------------------------------------------


def measure_complexity(model, stream: SampleStream, sample_points: Iterable[int]) -> dict:
    """Node and member counts of ``model`` after each of ``sample_points`` samples."""
    points = list(sample_points)
    if any(b <= a for a, b in zip(points, points[1:])):
        raise EvaluationError("sample points must be strictly increasing")
    out = {"index": [], "nodes": [], "members": []}

    def grab(t, m):
        out["index"].append(t)
        out["nodes"].append(m.node_count())
        out["members"].append(m.n_members)

    report = prequential_run(model, stream, report_every=max(points[-1], 1) if points else 1000,
                             max_samples=points[-1] if points else None,
                             checkpoints=points, on_checkpoint=grab)
    out["report"] = report
    return out


@dataclass
class TimingRow:
    model: str
    size: int
    repeats: int
    mean_seconds: float
    std_seconds: float | None
    throughput_sps: float

    def as_dict(self):
        d = asdict(self)
        if self.std_seconds is None:
            d.pop("std_seconds")
        return d


def benchmark_time(model_factory: Callable[[], object], stream_factory: Callable[[int], SampleStream],
                   sizes: Sequence[int], repeats: int = 10, name: str | None = None) -> list[TimingRow]:
    """Mean wall time of a full prequential run from scratch for each size.

    Streams are materialized before the clock starts, so only the learner
    (prediction, detector and training) is timed.
    """
    if repeats < 1:
        raise EvaluationError("repeats must be >= 1")
    rows = []
    # short untimed run so kernel compilation or cache loading is not charged to the first size
    X, y = materialize(stream_factory(64), 64)
    prequential_run(model_factory(), ArrayStream(X, y), report_every=64)
    for size in sizes:
        X, y = materialize(stream_factory(size), size)
        times = []
        label = name
        for _ in range(repeats):
            model = model_factory()
            label = label or getattr(model, "name", type(model).__name__)
            rep = prequential_run(model, ArrayStream(X, y), report_every=max(size, 1))
            times.append(rep.train_seconds)
        mean = float(np.mean(times))
        std = float(np.std(times, ddof=1)) if repeats > 1 else None
        rows.append(TimingRow(label, int(size), repeats, mean, std, size / mean if mean > 0 else float("inf")))
    return rows
