"""Adaptive XGBoost ensemble and the batch-incremental BXGB baseline."""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import asdict
from typing import NamedTuple

import numpy as np

from . import _kernels
from .adwin import AdwinDetector
from .boosting import (
    PredictionError,
    RegressionTree,
    TreeParams,
    boost,
    fit_tree,
    logistic_grad_hess_array,
    pack_forest,
    sigmoid,
)


class StateError(RuntimeError):
    """Operation not available in the model's current configuration."""


class Strategy(str, enum.Enum):
    PUSH = "push"
    REPLACE = "replace"


class TrainEvent(enum.Enum):
    NONE = "none"
    TREE_TRAINED = "tree_trained"
    DRIFT_AND_TREE_TRAINED = "drift_detected+tree_trained"


class TrainRecord(NamedTuple):
    n_seen: int  # samples observed when the window closed
    slot: int  # member slot the new tree went into
    margin_slots: tuple  # slots whose outputs formed the training margin
    window: int  # samples in the window
    n_nodes: int


def window_size(i: int, w_min: int, w_max: int) -> int:
    """Dynamic window ``min(w_min * 2**i, w_max)``."""
    if i < 0 or w_min < 1 or w_max < w_min:
        raise ValueError("window_size needs i >= 0 and 1 <= w_min <= w_max")
    if i >= w_max.bit_length():
        return w_max
    return min(w_min << i, w_max)


def iterations_to_max(w_min: int, w_max: int) -> int:
    return math.ceil(math.log2(w_max / w_min))


def _check_row(x, n_features):
    x = np.asarray(x, dtype=np.float64)
    if n_features is not None and x.shape[-1] != n_features:
        raise PredictionError(f"expected {n_features} features, got {x.shape[-1]}")
    return x


class _WindowBuffer:
    """Fixed-capacity tumbling window."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.X = None
        self.y = np.empty(capacity, dtype=np.float64)
        self.count = 0

    def ensure(self, n_features):
        if self.X is None:
            self.X = np.empty((self.capacity, n_features))

    def extend(self, X, y):
        k = len(y)
        self.X[self.count:self.count + k] = X
        self.y[self.count:self.count + k] = y
        self.count += k

    def contents(self):
        return self.X[:self.count].copy(), self.y[:self.count].copy()

    def clear(self):
        self.count = 0


class AxgbModel:
    """Streaming boosted ensemble trained one tree per tumbling window.

    Parameters
    ----------
    n_estimators : int
        Ensemble capacity ``K``.
    strategy : {"push", "replace"}
        How a new tree enters a full ensemble.
    w_min, w_max : int
        Bounds of the doubling window schedule.
    tree_params : TreeParams
        Base-learner settings.
    detect_drift : bool
        Attach an ADWIN detector fed with prequential correctness.
    delta : float
        ADWIN confidence.
    """

    kind = "axgb"

    def __init__(self, n_estimators: int = 30, strategy="replace", w_min: int = 1, w_max: int = 1000,
                 tree_params: TreeParams | None = None, detect_drift: bool = False, delta: float = 0.002,
                 backend: str | None = None):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if w_min < 1 or w_max < w_min:
            raise ValueError("need 1 <= w_min <= w_max")
        self.n_estimators = int(n_estimators)
        self.strategy = Strategy(strategy)
        self.w_min = int(w_min)
        self.w_max = int(w_max)
        self.tree_params = tree_params or TreeParams()
        self.backend = backend
        self.delta = delta
        self.detector = AdwinDetector(delta, backend=backend) if detect_drift else None
        self.members: list[RegressionTree] = []
        self.window_exponent = 0
        self.replace_cursor = 0
        self.n_features: int | None = None
        self.n_seen = 0
        self.history: list[TrainRecord] = []
        self.drift_log: list[tuple[int, int]] = []  # (n_seen at detection, cursor after reset)
        self._buffer = _WindowBuffer(self.w_max)
        self._packed = None

    # -- configuration ----------------------------------------------------

    @property
    def has_detector(self) -> bool:
        return self.detector is not None

    @property
    def name(self) -> str:
        tag = "p" if self.strategy is Strategy.PUSH else "r"
        return f"AXGB_A[{tag}]" if self.has_detector else f"AXGB[{tag}]"

    def get_params(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "strategy": self.strategy.value,
            "w_min": self.w_min,
            "w_max": self.w_max,
            "detect_drift": self.has_detector,
            "delta": self.delta,
            **asdict(self.tree_params),
        }

    # -- window schedule ----------------------------------------------------

    @property
    def current_window(self) -> int:
        return window_size(self.window_exponent, self.w_min, self.w_max)

    @property
    def buffer_count(self) -> int:
        return self._buffer.count

    def steps_until_update(self) -> int:
        """Samples that can be observed before the ensemble changes (>= 1)."""
        return self.current_window - self._buffer.count

    # -- prediction ---------------------------------------------------------

    def _forest(self):
        if self._packed is None:
            self._packed = pack_forest(self.members)
        return self._packed

    def margins(self, X) -> np.ndarray:
        X = np.atleast_2d(_check_row(X, self.n_features))
        if not self.members:
            return np.zeros(X.shape[0])
        return _kernels.predict_groups(X, self._forest(), backend=self.backend)[:, 0]

    def predict_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        prob = sigmoid(self.margins(X))
        return (prob >= 0.5).astype(np.int64), prob

    def predict(self, x) -> tuple[int, float]:
        cls, prob = self.predict_many(np.asarray(x, dtype=np.float64)[None, :])
        return int(cls[0]), float(prob[0])

    def training_margin_slots(self) -> tuple:
        if self.strategy is Strategy.PUSH:
            return tuple(range(len(self.members)))
        return tuple(range(min(self.replace_cursor, len(self.members))))

    def training_margins(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        slots = self.training_margin_slots()
        if not slots:
            return np.zeros(X.shape[0])
        trees = [self.members[s] for s in slots]
        return _kernels.predict_groups(X, pack_forest(trees), backend=self.backend)[:, 0]

    def training_margin(self, x) -> float:
        return float(self.training_margins(np.asarray(x, dtype=np.float64)[None, :])[0])

    # -- ensemble updates ---------------------------------------------------

    def insert_push(self, tree: RegressionTree) -> int:
        if len(self.members) == self.n_estimators:
            self.members.pop(0)
        self.members.append(tree)
        self._packed = None
        return len(self.members) - 1

    def insert_replace(self, tree: RegressionTree) -> int:
        # cursor == len(members) during the fill phase, so this appends;
        # after a drift reset the cursor points at an existing slot
        slot = self.replace_cursor
        if slot < len(self.members):
            self.members[slot] = tree
        else:
            self.members.append(tree)
            slot = len(self.members) - 1
        self.replace_cursor = (slot + 1) % self.n_estimators
        self._packed = None
        return slot

    def _train_window(self):
        X, y = self._buffer.contents()
        slots = self.training_margin_slots()
        margin = self.training_margins(X)
        g, h = logistic_grad_hess_array(margin, y)
        tree = fit_tree(X, g, h, self.tree_params, backend=self.backend)
        if self.strategy is Strategy.PUSH:
            slot = self.insert_push(tree)
        else:
            slot = self.insert_replace(tree)
        self.history.append(TrainRecord(self.n_seen, slot, slots, len(y), tree.n_nodes))
        self._buffer.clear()
        self.window_exponent += 1
        return tree

    def learn_many(self, X, y) -> int:
        """Observe rows in order; returns the number of trees trained."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if self.n_features is None:
            self.n_features = X.shape[1]
            self._buffer.ensure(self.n_features)
        _check_row(X, self.n_features)
        trained = 0
        pos = 0
        while pos < len(y):
            k = min(self.steps_until_update(), len(y) - pos)
            self._buffer.extend(X[pos:pos + k], y[pos:pos + k])
            self.n_seen += k
            pos += k
            if self._buffer.count == self.current_window:
                self._train_window()
                trained += 1
        return trained

    def observe(self, x, label: int) -> TrainEvent:
        trained = self.learn_many(np.asarray(x, dtype=np.float64)[None, :], [label])
        return TrainEvent.TREE_TRAINED if trained else TrainEvent.NONE

    # -- drift handling -----------------------------------------------------

    def on_drift(self):
        if self.detector is None:
            raise StateError("on_drift needs a drift detector (detect_drift=True)")
        self.window_exponent = 0
        self._buffer.clear()
        if self.strategy is Strategy.REPLACE:
            self.replace_cursor = 0
        self.drift_log.append((self.n_seen, self.replace_cursor))
        return self

    def record_outcome(self, correct: int) -> bool:
        if self.detector is None:
            raise StateError("record_outcome needs a drift detector (detect_drift=True)")
        if self.detector.add(float(correct)):
            self.on_drift()
            return True
        return False

    def record_outcomes(self, correct) -> tuple[int, bool]:
        """Feed correctness values until the first drift.

        Returns ``(consumed, drifted)``; on drift the reset has already been
        applied and the caller must resume after ``consumed`` values.
        """
        if self.detector is None:
            raise StateError("record_outcomes needs a drift detector (detect_drift=True)")
        consumed, drifts = self.detector.add_many(np.asarray(correct, dtype=np.float64), stop_on_drift=True)
        if drifts:
            self.on_drift()
        return consumed, bool(drifts)

    # -- introspection ------------------------------------------------------

    @property
    def n_members(self) -> int:
        return len(self.members)

    def node_count(self) -> int:
        return sum(t.n_nodes for t in self.members)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.get_params(),
            "n_features": self.n_features,
            "window_exponent": self.window_exponent,
            "replace_cursor": self.replace_cursor,
            "n_seen": self.n_seen,
            "members": [t.to_dict() for t in self.members],
        }

    @classmethod
    def from_dict(cls, doc: dict, backend: str | None = None) -> "AxgbModel":
        """Rebuild a dumped model; the partially filled window is not restored."""
        p = dict(doc["params"])
        tree_params = TreeParams(
            max_depth=p.pop("max_depth"), lam=p.pop("lam"), gamma=p.pop("gamma"),
            learning_rate=p.pop("learning_rate"), min_child_weight=p.pop("min_child_weight"),
        )
        model = cls(tree_params=tree_params, backend=backend, **p)
        model.members = [RegressionTree.from_dict(t) for t in doc["members"]]
        model.window_exponent = int(doc["window_exponent"])
        model.replace_cursor = int(doc["replace_cursor"])
        model.n_seen = int(doc.get("n_seen", 0))
        if doc.get("n_features") is not None:
            model.n_features = int(doc["n_features"])
            model._buffer.ensure(model.n_features)
        return model


class BxgbModel:
    """Queue of independently boosted sub-ensembles combined by majority vote."""

    kind = "bxgb"
    name = "BXGB"
    has_detector = False

    def __init__(self, n_estimators: int = 30, sub_ensemble_size: int = 30, window_size: int = 1000,
                 tree_params: TreeParams | None = None, backend: str | None = None):
        if n_estimators < 1 or sub_ensemble_size < 1 or window_size < 1:
            raise ValueError("n_estimators, sub_ensemble_size and window_size must be >= 1")
        self.n_estimators = int(n_estimators)
        self.sub_ensemble_size = int(sub_ensemble_size)
        self.window_size = int(window_size)
        self.tree_params = tree_params or TreeParams()
        self.backend = backend
        self.sub_ensembles: deque[list[RegressionTree]] = deque()
        self.n_features: int | None = None
        self.n_seen = 0
        self.history: list[TrainRecord] = []
        self._buffer = _WindowBuffer(self.window_size)
        self._packed = None

    def get_params(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "sub_ensemble_size": self.sub_ensemble_size,
            "window_size": self.window_size,
            **asdict(self.tree_params),
        }

    def steps_until_update(self) -> int:
        return self.window_size - self._buffer.count

    def _forest(self):
        if self._packed is None:
            trees, groups = [], []
            for k, sub in enumerate(self.sub_ensembles):
                trees.extend(sub)
                groups.extend([k] * len(sub))
            self._packed = pack_forest(trees, groups, len(self.sub_ensembles))
        return self._packed

    def votes(self, X) -> np.ndarray:
        """Per-sub-ensemble class votes, shape ``(n_samples, n_sub_ensembles)``."""
        X = np.atleast_2d(_check_row(X, self.n_features))
        if not self.sub_ensembles:
            return np.zeros((X.shape[0], 0), dtype=np.int64)
        margins = _kernels.predict_groups(X, self._forest(), backend=self.backend)
        return (margins >= 0.0).astype(np.int64)

    def predict_many(self, X):
        v = self.votes(X)
        if v.shape[1] == 0:
            n = v.shape[0]
            return np.ones(n, dtype=np.int64), np.full(n, 0.5)
        ones = v.sum(axis=1)
        frac = ones / v.shape[1]
        return (2 * ones >= v.shape[1]).astype(np.int64), frac

    def predict(self, x):
        cls, prob = self.predict_many(np.asarray(x, dtype=np.float64)[None, :])
        return int(cls[0]), float(prob[0])

    def learn_many(self, X, y) -> int:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if self.n_features is None:
            self.n_features = X.shape[1]
            self._buffer.ensure(self.n_features)
        _check_row(X, self.n_features)
        trained = 0
        pos = 0
        while pos < len(y):
            k = min(self.steps_until_update(), len(y) - pos)
            self._buffer.extend(X[pos:pos + k], y[pos:pos + k])
            self.n_seen += k
            pos += k
            if self._buffer.count == self.window_size:
                Xw, yw = self._buffer.contents()
                sub = boost(Xw, yw, self.sub_ensemble_size, self.tree_params, backend=self.backend)
                self.sub_ensembles.append(sub)
                if len(self.sub_ensembles) > self.n_estimators:
                    self.sub_ensembles.popleft()
                self._packed = None
                self.history.append(
                    TrainRecord(self.n_seen, len(self.sub_ensembles) - 1, (), len(yw), sum(t.n_nodes for t in sub))
                )
                self._buffer.clear()
                trained += 1
        return trained

    def observe(self, x, label: int) -> TrainEvent:
        trained = self.learn_many(np.asarray(x, dtype=np.float64)[None, :], [label])
        return TrainEvent.TREE_TRAINED if trained else TrainEvent.NONE

    @property
    def n_members(self) -> int:
        return len(self.sub_ensembles)

    @property
    def n_trees(self) -> int:
        return sum(len(s) for s in self.sub_ensembles)

    def node_count(self) -> int:
        return sum(t.n_nodes for sub in self.sub_ensembles for t in sub)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.get_params(),
            "n_features": self.n_features,
            "n_seen": self.n_seen,
            "sub_ensembles": [[t.to_dict() for t in sub] for sub in self.sub_ensembles],
        }

    @classmethod
    def from_dict(cls, doc: dict, backend: str | None = None) -> "BxgbModel":
        p = dict(doc["params"])
        tree_params = TreeParams(
            max_depth=p.pop("max_depth"), lam=p.pop("lam"), gamma=p.pop("gamma"),
            learning_rate=p.pop("learning_rate"), min_child_weight=p.pop("min_child_weight"),
        )
        model = cls(tree_params=tree_params, backend=backend, **p)
        model.sub_ensembles = deque([RegressionTree.from_dict(t) for t in sub] for sub in doc["sub_ensembles"])
        model.n_seen = int(doc.get("n_seen", 0))
        if doc.get("n_features") is not None:
            model.n_features = int(doc["n_features"])
            model._buffer.ensure(model.n_features)
        return model


def ensemble_node_count(model) -> int:
    return model.node_count()


def model_from_dict(doc: dict, backend: str | None = None):
    if doc.get("kind") == "bxgb":
        return BxgbModel.from_dict(doc, backend)
    return AxgbModel.from_dict(doc, backend)


MODEL_NAMES = ("axgb_push", "axgb_replace", "axgb_adwin_push", "axgb_adwin_replace", "bxgb")


def make_model(name: str, n_estimators: int = 30, w_min: int = 1, w_max: int = 1000,
               tree_params: TreeParams | None = None, delta: float = 0.002,
               sub_ensemble_size: int = 30, backend: str | None = None):
    """Build one of the named model variants."""
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    if name == "bxgb":
        return BxgbModel(n_estimators, sub_ensemble_size, w_max, tree_params, backend)
    strategy = Strategy.PUSH if name.endswith("push") else Strategy.REPLACE
    return AxgbModel(n_estimators, strategy, w_min, w_max, tree_params,
                     detect_drift="adwin" in name, delta=delta, backend=backend)
