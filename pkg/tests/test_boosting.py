import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from axgb._backend import HAVE_NUMBA
from axgb.boosting import (
    FitError,
    PredictionError,
    RegressionTree,
    TreeParams,
    boost,
    count_nodes,
    fit_tree,
    forest_margins,
    leaf_weight,
    logistic_grad_hess,
    logistic_grad_hess_array,
    split_gain,
    tree_predict,
)
from oracles import best_split, enumerate_splits


def softplus(z):
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def ref_loss(m, y):
    return softplus(-m) if y == 1 else softplus(m)


def ref_grad(m, y):
    # written per label to keep full relative precision in the tails
    return -1.0 / (1.0 + math.exp(m)) if y == 1 else 1.0 / (1.0 + math.exp(-m))


# ---------------------------------------------------------------------------
# loss derivatives
# ---------------------------------------------------------------------------


def test_grad_hess_examples():
    assert logistic_grad_hess(0.0, 1) == (-0.5, 0.25)
    assert logistic_grad_hess(0.0, 0) == (0.5, 0.25)
    g, h = logistic_grad_hess(2.0, 1)
    assert g == pytest.approx(-0.1192029, abs=1e-6)
    assert h == pytest.approx(0.1049936, abs=1e-6)


def test_grad_hess_match_finite_differences():
    rng = np.random.default_rng(7)
    eps = 1e-6
    for m, y in zip(rng.uniform(-8, 8, 1000), rng.integers(0, 2, 1000)):
        m, y = float(m), int(y)
        g, h = logistic_grad_hess(m, y)
        fd_g = (ref_loss(m + eps, y) - ref_loss(m - eps, y)) / (2 * eps)
        fd_h = (ref_grad(m + eps, y) - ref_grad(m - eps, y)) / (2 * eps)
        assert g == pytest.approx(fd_g, rel=1e-6)
        assert h == pytest.approx(fd_h, rel=1e-5)


@given(st.floats(-1e6, 1e6), st.integers(0, 1))
def test_grad_hess_bounds_and_overflow(m, y):
    g, h = logistic_grad_hess(m, y)
    assert math.isfinite(g) and math.isfinite(h)
    assert abs(g) <= 1.0
    assert 0.0 <= h <= 0.25


def test_grad_hess_array_matches_scalar():
    rng = np.random.default_rng(1)
    m = rng.normal(0, 5, 200)
    y = rng.integers(0, 2, 200)
    g, h = logistic_grad_hess_array(m, y)
    for k in range(200):
        assert (g[k], h[k]) == pytest.approx(logistic_grad_hess(m[k], int(y[k])))


def test_label_must_be_binary():
    with pytest.raises(ValueError):
        logistic_grad_hess(0.0, 2)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def test_leaf_weight_examples():
    assert leaf_weight(0.0, 3.0, 1.0) == 0.0
    assert leaf_weight(-0.5, 0.25, 1.0) == pytest.approx(0.4)
    weights = [abs(leaf_weight(-2.0, 1.0, lam)) for lam in (0.1, 1, 10, 100, 1e4)]
    assert all(a > b for a, b in zip(weights, weights[1:]))
    with pytest.raises(FitError):
        leaf_weight(1.0, 0.0, 0.0)


def test_split_gain_examples():
    assert split_gain(0, 1, 0, 2, 1.0, 0.3) == pytest.approx(-0.3)
    assert split_gain(-1, 0.5, 1, 0.5, 1.0, 0.0) == pytest.approx(2 / 3)


def test_split_gain_symmetric_children_never_positive():
    for g in np.linspace(-1, 1, 41):
        for h in np.linspace(0, 0.25, 11):
            assert split_gain(g, h, g, h, 1.0, 0.0) <= 1e-15


# ---------------------------------------------------------------------------
# tree induction against brute force
# ---------------------------------------------------------------------------


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 501))
    d = int(rng.integers(1, 11))
    X = rng.normal(size=(n, d))
    # some integer-coded columns so repeated values and midpoints get exercised
    for f in range(d):
        if rng.random() < 0.4:
            X[:, f] = rng.integers(0, 6, n)
    margin = rng.normal(0, 1, n)
    y = rng.integers(0, 2, n)
    g, h = logistic_grad_hess_array(margin, y)
    params = TreeParams(max_depth=int(rng.integers(0, 4)), lam=float(rng.choice([0.0, 0.5, 1.0])),
                        gamma=float(rng.choice([0.0, 0.1])), learning_rate=float(rng.choice([0.1, 0.3, 1.0])),
                        min_child_weight=float(rng.choice([0.0, 1.0, 3.0])))
    return X, g, h, params


def check_against_oracle(tree, X, g, h, params):
    """Walk the tree; compare each node with direct enumeration over its samples."""
    rows_all = [(tuple(X[i]), i) for i in range(len(g))]
    stats = {"splits": 0, "leaves": 0, "near_ties": 0}

    def walk(node, rows, depth):
        G = math.fsum(g[i] for _, i in rows)
        H = math.fsum(h[i] for _, i in rows)
        if tree.feature[node] < 0:
            stats["leaves"] += 1
            expected = params.learning_rate * (-G / (H + params.lam))
            assert abs(tree.value[node] - expected) <= 1e-12
            if depth < params.max_depth and len(rows) > 1:
                best = best_split(rows, g, h, params.lam, params.gamma, params.min_child_weight)
                assert best is None or best[0] <= 1e-9
            return
        stats["splits"] += 1
        assert depth < params.max_depth
        best = best_split(rows, g, h, params.lam, params.gamma, params.min_child_weight)
        assert best is not None and best[0] > 0
        f, thr = int(tree.feature[node]), float(tree.threshold[node])
        if (f, thr) != (best[1], best[2]):
            # accepted only when the two candidates are equal up to rounding
            cands = {(c[1], c[2]): c[0] for c in enumerate_splits(rows, g, h, params.lam, params.gamma,
                                                                 params.min_child_weight)}
            assert (f, thr) in cands
            assert abs(cands[(f, thr)] - best[0]) <= 1e-12 * max(1.0, abs(best[0]))
            stats["near_ties"] += 1
        assert tree.gain[node] == pytest.approx(best[0], rel=1e-9, abs=1e-12)
        left = [r for r in rows if r[0][f] < thr]
        right = [r for r in rows if not r[0][f] < thr]
        walk(int(tree.left[node]), left, depth + 1)
        walk(int(tree.right[node]), right, depth + 1)

    walk(0, rows_all, 0)
    return stats


@pytest.mark.parametrize("seed", range(50))
def test_fit_tree_matches_brute_force(seed):
    X, g, h, params = random_instance(seed)
    tree = fit_tree(X, g, h, params)
    check_against_oracle(tree, X, g, h, params)


def test_tie_break_prefers_lowest_feature_then_threshold():
    # duplicated columns give bit-identical candidate gains
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    h = np.ones(4)
    tree = fit_tree(X, g, h, TreeParams(max_depth=1, min_child_weight=0.0))
    assert (tree.feature[0], tree.threshold[0]) == (0, 1.5)
    # symmetric gradients: thresholds 0.5 and 2.5 score the same, lowest wins
    g = np.array([-1.0, 1.0, 1.0, -1.0])
    h = np.array([1.0, 0.5, 0.5, 1.0])
    tree = fit_tree(X[:, :1], g, h, TreeParams(max_depth=1, min_child_weight=0.0))
    assert tree.threshold[0] == 0.5


def test_trivial_trees():
    X = np.random.default_rng(0).normal(size=(30, 3))
    tree = fit_tree(X, np.zeros(30), np.full(30, 0.25))
    assert tree.n_nodes == 1 and tree.value[0] == 0.0
    g = np.random.default_rng(1).normal(size=30)
    h = np.full(30, 0.2)
    p = TreeParams(max_depth=0, learning_rate=0.3)
    tree = fit_tree(X, g, h, p)
    assert tree.n_nodes == 1
    assert tree.value[0] == pytest.approx(0.3 * -g.sum() / (h.sum() + 1.0), abs=1e-12)
    single = fit_tree(X[:1], g[:1], h[:1])
    assert single.n_nodes == 1


def test_fit_errors():
    with pytest.raises(FitError):
        fit_tree(np.zeros((0, 2)), [], [])
    with pytest.raises(FitError):
        fit_tree(np.zeros((3, 2)), [1.0, 2.0], [1.0, 1.0])


@given(st.integers(0, 10_000), st.integers(0, 6))
def test_tree_invariants(seed, depth):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 200))
    X = rng.normal(size=(n, 4))
    g, h = logistic_grad_hess_array(rng.normal(size=n), rng.integers(0, 2, n))
    p = TreeParams(max_depth=depth)
    tree = fit_tree(X, g, h, p)
    internal = int((tree.feature >= 0).sum())
    assert tree.n_leaves == internal + 1
    assert tree.depth() <= depth
    assert np.all(tree.gain[tree.feature >= 0] > 0)
    leaves = tree.feature < 0
    if tree.n_nodes > 1:
        assert np.all(tree.hess_sum[leaves] >= p.min_child_weight)
    assert tree.n_nodes <= 2 ** (depth + 1) - 1
    assert fit_tree(X, g, h, p).same_structure(tree)


# ---------------------------------------------------------------------------
# prediction and node counts
# ---------------------------------------------------------------------------


def stump(f=0, thr=5.0, lv=-1.0, rv=2.0, d=3):
    return RegressionTree(np.array([f, -1, -1]), np.array([thr, 0.0, 0.0]), np.array([1, -1, -1]),
                          np.array([2, -1, -1]), np.array([0.0, lv, rv]), d)


def test_tree_predict_examples():
    assert tree_predict(RegressionTree.leaf(0.4, 2), [7.0, -3.0]) == 0.4
    t = stump()
    assert tree_predict(t, [4.9, 0, 0]) == -1.0
    assert tree_predict(t, [5.0, 0, 0]) == 2.0
    with pytest.raises(PredictionError):
        tree_predict(t, [1.0, 2.0])


def test_count_nodes_examples():
    assert count_nodes(RegressionTree.leaf(0.0, 1)) == 1
    assert count_nodes(stump()) == 3
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(4000, 6))
    g = np.where(X[:, 0] + 3 * X[:, 1] - X[:, 2] * X[:, 3] > 1.5, -1.0, 1.0) * rng.uniform(0.5, 1, 4000)
    tree = fit_tree(X, g, np.ones(4000), TreeParams(max_depth=6, lam=0.0, min_child_weight=0.0))
    assert count_nodes(tree) <= 127


@given(st.integers(0, 10_000))
def test_prediction_is_piecewise_constant(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(100, 3))
    g, h = logistic_grad_hess_array(rng.normal(size=100), rng.integers(0, 2, 100))
    tree = fit_tree(X, g, h, TreeParams(max_depth=4))
    x = rng.normal(size=3)
    out = tree.predict(x)
    path = tree.path(x)
    for f in range(3):
        thresholds = sorted(tree.threshold[k] for k in path if tree.feature[k] == f)
        lo = max([t for t in thresholds if t <= x[f]], default=-np.inf)
        hi = min([t for t in thresholds if t > x[f]], default=np.inf)
        lo = max(lo, x[f] - 10.0)
        hi = min(hi, x[f] + 10.0)
        for v in rng.uniform(lo, hi, 5):
            if lo <= v < hi:
                z = x.copy()
                z[f] = v
                assert tree.predict(z) == out


def test_forest_margin_is_sum_of_trees():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 4))
    y = (X[:, 0] > 0).astype(float)
    trees = boost(X, y, 5, TreeParams(max_depth=3))
    Z = rng.normal(size=(50, 4))
    brute = np.array([math.fsum(t.predict(z) for t in trees) for z in Z])
    assert np.allclose(forest_margins(trees, Z), brute, rtol=0, atol=1e-12)


def test_json_round_trip_is_lossless():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(500, 5))
    g, h = logistic_grad_hess_array(rng.normal(size=500), rng.integers(0, 2, 500))
    tree = fit_tree(X, g, h, TreeParams(max_depth=5))
    doc = json.loads(json.dumps(tree.to_dict()))
    back = RegressionTree.from_dict(doc)
    assert back.same_structure(tree)
    assert [back.predict(x) for x in X] == [tree.predict(x) for x in X]


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("seed", range(10))
def test_backends_build_identical_trees(seed):
    X, g, h, params = random_instance(seed + 100)
    a = fit_tree(X, g, h, params, backend="numba")
    b = fit_tree(X, g, h, params, backend="numpy")
    assert a.same_structure(b)
    assert np.array_equal(a.gain, b.gain)
    Z = np.random.default_rng(seed).normal(size=(64, X.shape[1]))
    assert np.array_equal(forest_margins([a, b], Z, backend="numba"), forest_margins([a, b], Z, backend="numpy"))
