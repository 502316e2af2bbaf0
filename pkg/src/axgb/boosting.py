"""Binary logistic loss and the regularized regression-tree base learner."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from . import _kernels


class FitError(ValueError):
    """Raised when a tree cannot be fitted (empty data, degenerate leaf)."""


class PredictionError(ValueError):
    """Raised when a feature vector does not match the fitted dimension."""


class GradientPair(NamedTuple):
    g: float
    h: float


def sigmoid(margin):
    """Overflow-safe logistic function; works on scalars and arrays."""
    if np.ndim(margin) == 0:
        return float(expit(float(margin)))
    return expit(np.asarray(margin, dtype=np.float64))


def logistic_grad_hess(margin: float, label: int) -> GradientPair:
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    p = sigmoid(margin)
    return GradientPair(p - label, p * (1.0 - p))


def logistic_grad_hess_array(margins: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = expit(np.asarray(margins, dtype=np.float64))
    return p - labels, p * (1.0 - p)


def logistic_loss(margin: float, label: int) -> float:
    # log(1 + e^m) - y*m, written to avoid overflow
    return float(np.logaddexp(0.0, margin) - label * margin)


def leaf_weight(G: float, H: float, lam: float) -> float:
    """Optimal leaf value ``-G / (H + lambda)`` of the second-order objective."""
    denom = H + lam
    if denom <= 0.0:
        raise FitError("degenerate leaf: hessian sum + lambda must be positive")
    return -G / denom


def split_gain(GL: float, HL: float, GR: float, HR: float, lam: float, gamma: float) -> float:
    def score(G, H):
        return G * G / (H + lam)

    return 0.5 * (score(GL, HL) + score(GR, HR) - score(GL + GR, HL + HR)) - gamma


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    lam: float = 1.0
    gamma: float = 0.0
    learning_rate: float = 0.3
    min_child_weight: float = 1.0

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.lam < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValueError("lam, gamma and min_child_weight must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")


@dataclass(eq=False)
class RegressionTree:
    """Array-backed binary regression tree.

    Node 0 is the root.  ``feature[k] == -1`` marks a leaf whose output is
    ``value[k]`` (learning-rate shrinkage already applied).  Internal nodes send
    ``x`` left iff ``x[feature] < threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    gain: np.ndarray = field(default=None)
    hess_sum: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.feature)
        if self.gain is None:
            self.gain = np.zeros(n)
        if self.hess_sum is None:
            self.hess_sum = np.full(n, np.nan)

    @classmethod
    def leaf(cls, weight: float, n_features: int) -> "RegressionTree":
        return cls(
            feature=np.array([-1], dtype=np.int64),
            threshold=np.zeros(1),
            left=np.array([-1], dtype=np.int64),
            right=np.array([-1], dtype=np.int64),
            value=np.array([float(weight)]),
            n_features=n_features,
        )

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] < 0:
                best = max(best, d)
            else:
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
        return best

    def leaf_index(self, x) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise PredictionError(f"expected {self.n_features} features, got shape {x.shape}")
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] < self.threshold[node] else self.right[node]
        return int(node)

    def path(self, x) -> list[int]:
        x = np.asarray(x, dtype=np.float64)
        node, out = 0, [0]
        while self.feature[node] >= 0:
            node = int(self.left[node] if x[self.feature[node]] < self.threshold[node] else self.right[node])
            out.append(node)
        return out

    def predict(self, x) -> float:
        return float(self.value[self.leaf_index(x)])

    def to_dict(self) -> dict:
        nodes = []
        for k in range(self.n_nodes):
            if self.feature[k] < 0:
                nodes.append({"id": k, "leaf": float(self.value[k])})
            else:
                nodes.append(
                    {
                        "id": k,
                        "feature": int(self.feature[k]),
                        "threshold": float(self.threshold[k]),
                        "left": int(self.left[k]),
                        "right": int(self.right[k]),
                        "gain": float(self.gain[k]),
                    }
                )
        return {"n_features": self.n_features, "nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict) -> "RegressionTree":
        nodes = sorted(doc["nodes"], key=lambda nd: nd["id"])
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros(n)
        gain = np.zeros(n)
        for k, nd in enumerate(nodes):
            if nd["id"] != k:
                raise ValueError("tree node ids must be contiguous from 0")
            if "leaf" in nd:
                value[k] = nd["leaf"]
            else:
                feature[k] = nd["feature"]
                threshold[k] = nd["threshold"]
                left[k] = nd["left"]
                right[k] = nd["right"]
                gain[k] = nd.get("gain", 0.0)
        return cls(feature, threshold, left, right, value, int(doc["n_features"]), gain)

    def same_structure(self, other: "RegressionTree") -> bool:
        return (
            self.n_features == other.n_features
            and np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.value, other.value)
        )


def tree_predict(tree: RegressionTree, x) -> float:
    return tree.predict(x)


def count_nodes(tree: RegressionTree) -> int:
    return tree.n_nodes


def fit_tree(X, g, h, params: TreeParams = TreeParams(), backend: str | None = None) -> RegressionTree:
    """Grow a regression tree on gradient pairs with exact greedy split search.

    Every feature and every midpoint between consecutive distinct values is a
    candidate.  Candidates whose children fall below ``min_child_weight``
    hessian mass are skipped; a node becomes a leaf at ``max_depth``, with a
    single sample, or when the best gain is not positive.  Ties go to the
    lowest feature index, then the lowest threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise FitError("fit_tree needs a non-empty 2-D feature matrix")
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.shape != (X.shape[0],) or h.shape != (X.shape[0],):
        raise FitError("gradient arrays must have one entry per sample")
    try:
        arrays = _kernels.grow_tree(
            X, g, h, params.max_depth, params.lam, params.gamma,
            params.learning_rate, params.min_child_weight, backend=backend,
        )
    except ValueError as exc:
        raise FitError(str(exc)) from exc
    feature, threshold, left, right, value, gain, hess_sum = arrays
    return RegressionTree(feature, threshold, left, right, value, X.shape[1], gain, hess_sum)


def pack_forest(trees: list[RegressionTree], groups: list[int] | None = None, n_groups: int | None = None):
    """Flatten trees into shared node arrays for the batch routing kernel."""
    if groups is None:
        groups = [0] * len(trees)
        n_groups = 1
    elif n_groups is None:
        n_groups = (max(groups) + 1) if groups else 1
    if not trees:
        empty_i = np.zeros(0, dtype=np.int64)
        return (empty_i, np.zeros(0), empty_i, empty_i, np.zeros(0), empty_i, empty_i, n_groups)
    offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]])
    feature = np.concatenate([t.feature for t in trees])
    threshold = np.concatenate([t.threshold for t in trees])
    value = np.concatenate([t.value for t in trees])
    left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(trees, offsets)])
    right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(trees, offsets)])
    return (
        feature.astype(np.int64),
        threshold,
        left.astype(np.int64),
        right.astype(np.int64),
        value,
        offsets.astype(np.int64),
        np.asarray(groups, dtype=np.int64),
        int(n_groups),
    )


def forest_margins(trees: list[RegressionTree], X, backend: str | None = None) -> np.ndarray:
    """Sum of tree outputs for each row of ``X`` (0 for an empty forest)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not trees:
        return np.zeros(X.shape[0])
    return _kernels.predict_groups(X, pack_forest(trees), backend=backend)[:, 0]


def boost(X, y, n_trees: int, params: TreeParams, margin=None, backend: str | None = None) -> list[RegressionTree]:
    """Plain batch gradient boosting: ``n_trees`` rounds of residual chaining."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    margin = np.zeros(X.shape[0]) if margin is None else np.array(margin, dtype=np.float64)
    trees = []
    for _ in range(n_trees):
        g, h = logistic_grad_hess_array(margin, y)
        tree = fit_tree(X, g, h, params, backend=backend)
        trees.append(tree)
        margin += forest_margins([tree], X, backend=backend)
    return trees


__all__ = [
    "FitError",
    "GradientPair",
    "PredictionError",
    "RegressionTree",
    "TreeParams",
    "boost",
    "count_nodes",
    "fit_tree",
    "forest_margins",
    "leaf_weight",
    "logistic_grad_hess",
    "logistic_grad_hess_array",
    "logistic_loss",
    "pack_forest",
    "sigmoid",
    "split_gain",
    "tree_predict",
]
