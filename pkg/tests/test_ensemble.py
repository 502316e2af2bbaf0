import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from axgb.boosting import RegressionTree, TreeParams, boost, forest_margins
from axgb.ensemble import (
    AxgbModel,
    BxgbModel,
    StateError,
    Strategy,
    TrainEvent,
    ensemble_node_count,
    iterations_to_max,
    make_model,
    model_from_dict,
    window_size,
)
from axgb.streams import compose_drift, preset_spec


def leaf(w, d=2):
    return RegressionTree.leaf(w, d)


def sea(n, seed=0):
    return compose_drift(preset_spec("SEA_a", n, seed)).take(n)


# ---------------------------------------------------------------------------
# window schedule
# ---------------------------------------------------------------------------


def test_window_schedule_examples():
    assert window_size(0, 1, 1000) == 1
    assert window_size(10, 1, 1000) == 1000
    assert iterations_to_max(1, 1000) == 10
    assert sum(window_size(i, 1, 1000) for i in range(10)) == 1023


@given(st.integers(0, 40), st.integers(1, 64), st.integers(1, 10_000))
def test_window_schedule_property(i, w_min, extra):
    w_max = w_min + extra
    assert window_size(i, w_min, w_max) == min(w_min * 2 ** i, w_max)


def test_training_follows_schedule():
    X, y = sea(3000)
    m = AxgbModel(n_estimators=5, strategy="push", w_min=2, w_max=64)
    for k in range(3000):
        m.observe(X[k], y[k])
        assert m.buffer_count < m.current_window
        assert m.current_window == min(2 * 2 ** m.window_exponent, 64)
    consumed = [r.window for r in m.history]
    assert consumed[:6] == [2, 4, 8, 16, 32, 64]
    assert all(w == 64 for w in consumed[6:])
    assert m.window_exponent == len(m.history)
    assert sum(consumed) + m.buffer_count == 3000
    assert m.n_members == 5


def test_first_sample_trains_first_tree():
    m = AxgbModel(w_min=1)
    assert m.observe([1.0, 2.0, 3.0], 1) is TrainEvent.TREE_TRAINED
    assert m.n_members == 1
    assert m.observe([1.0, 2.0, 3.0], 1) is TrainEvent.NONE


def test_dimension_mismatch_rejected():
    m = AxgbModel()
    m.observe([1.0, 2.0], 0)
    with pytest.raises(ValueError):
        m.observe([1.0, 2.0, 3.0], 0)
    with pytest.raises(ValueError):
        m.predict([1.0])


# ---------------------------------------------------------------------------
# insertion strategies and training margins
# ---------------------------------------------------------------------------


def test_push_examples():
    m = AxgbModel(n_estimators=3, strategy="push")
    f = [leaf(k) for k in range(1, 5)]
    for t in f[:3]:
        m.insert_push(t)
    m.insert_push(f[3])
    assert m.members == [f[1], f[2], f[3]]
    one = AxgbModel(n_estimators=1, strategy="push")
    for t in f:
        one.insert_push(t)
        assert one.members == [t]


def test_replace_examples():
    m = AxgbModel(n_estimators=3, strategy="replace")
    f = [leaf(k) for k in range(1, 6)]
    for k, t in enumerate(f[:3]):
        assert m.insert_replace(t) == k
    assert m.replace_cursor == 0
    m.insert_replace(f[3])
    assert m.members == [f[3], f[1], f[2]] and m.replace_cursor == 1
    m.replace_cursor = 2
    m.insert_replace(f[4])
    assert m.members[2] is f[4] and m.replace_cursor == 0


def test_training_margin_examples():
    x = np.zeros(2)
    m = AxgbModel(n_estimators=3, strategy="push")
    assert m.training_margin(x) == 0.0
    for w in (0.2, -0.1, 0.3):
        m.insert_push(leaf(w))
    assert m.training_margin(x) == pytest.approx(0.4)
    r = AxgbModel(n_estimators=3, strategy="replace")
    for w in (0.2, -0.1, 0.3):
        r.insert_replace(leaf(w))
    assert r.replace_cursor == 0
    assert r.training_margin(x) == 0.0
    r.replace_cursor = 2
    assert r.training_margin(x) == pytest.approx(0.1)


def test_predict_examples():
    m = AxgbModel()
    assert m.predict([0.0, 0.0]) == (1, 0.5)
    m.insert_push(leaf(math.log(1.5)))
    cls, p = m.predict([0.0, 0.0])
    assert cls == 1 and p == pytest.approx(0.6)
    m2 = AxgbModel()
    m2.insert_push(leaf(-3.0))
    assert m2.predict([0.0, 0.0])[0] == 0


def test_prediction_is_sum_of_members():
    X, y = sea(5000)
    m = AxgbModel(n_estimators=8, strategy="replace", w_max=256)
    m.learn_many(X, y)
    Z = X[:200]
    brute = np.array([math.fsum(t.predict(z) for t in m.members) for z in Z])
    assert np.allclose(m.margins(Z), brute, rtol=0, atol=1e-12)


def test_push_residuals_use_all_members_before_eviction():
    X, y = sea(6000, seed=2)
    m = AxgbModel(n_estimators=4, strategy="push", w_min=4, w_max=128)
    m.learn_many(X, y)
    full = [r for r in m.history if len(r.margin_slots) == 4]
    assert full, "ensemble never reached capacity"
    for rec in m.history:
        assert rec.margin_slots == tuple(range(len(rec.margin_slots)))


def test_replace_chaining_uses_prefix_slots():
    X, y = sea(8000, seed=3)
    m = AxgbModel(n_estimators=5, strategy="replace", w_min=1, w_max=200)
    m.learn_many(X, y)
    assert len(m.history) > 15
    for rec in m.history:
        assert rec.margin_slots == tuple(range(rec.slot))
    assert [r.slot for r in m.history][:12] == [0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1]


def test_replace_new_tree_fits_prefix_residuals():
    # retrain the tree at a slot from its recorded inputs and compare
    X, y = sea(2000, seed=4)
    m = AxgbModel(n_estimators=3, strategy="replace", w_min=16, w_max=16, tree_params=TreeParams(max_depth=3))
    start = 0
    for _ in range(7):
        before = list(m.members)
        cursor = m.replace_cursor
        m.learn_many(X[start:start + 16], y[start:start + 16])
        rec = m.history[-1]
        margin = forest_margins(before[:cursor], X[start:start + 16])
        expected = boost(X[start:start + 16], y[start:start + 16], 1, m.tree_params, margin=margin)[0]
        assert m.members[rec.slot].same_structure(expected)
        start += 16


def test_capacity_never_exceeded():
    X, y = sea(20_000, seed=5)
    for strategy in ("push", "replace"):
        m = AxgbModel(n_estimators=6, strategy=strategy, w_max=500)
        for a in range(0, 20_000, 997):
            m.learn_many(X[a:a + 997], y[a:a + 997])
            assert m.n_members <= 6
            assert m.replace_cursor < 6


# ---------------------------------------------------------------------------
# drift handling
# ---------------------------------------------------------------------------


def test_on_drift_replace():
    X, y = sea(3000)
    m = AxgbModel(n_estimators=10, strategy="replace", w_max=64, detect_drift=True)
    m.learn_many(X[:1500], y[:1500])
    m.replace_cursor = 7
    m.learn_many(X[1500:1510], y[1500:1510])
    m.on_drift()
    assert m.replace_cursor == 0 and m.window_exponent == 0 and m.buffer_count == 0
    # the next training event consumes exactly w_min samples
    n = len(m.history)
    m.observe(X[2000], y[2000])
    assert len(m.history) == n + 1 and m.history[-1].window == 1 and m.history[-1].slot == 0


def test_on_drift_push_keeps_members():
    X, y = sea(3000)
    m = AxgbModel(n_estimators=10, strategy="push", w_min=4, w_max=64, detect_drift=True)
    m.learn_many(X[:1000], y[:1000])
    members = list(m.members)
    m.on_drift()
    assert m.members == members and m.window_exponent == 0 and m.buffer_count == 0
    m.learn_many(X[1000:1003], y[1000:1003])
    assert m.members == members
    m.observe(X[1003], y[1003])
    assert m.history[-1].window == 4
    m2 = AxgbModel(detect_drift=True)
    m2.on_drift()
    assert m2.window_exponent == 0 and m2.buffer_count == 0 and m2.n_members == 0


def test_on_drift_needs_detector():
    with pytest.raises(StateError):
        AxgbModel().on_drift()
    with pytest.raises(StateError):
        AxgbModel().record_outcome(1)


def test_record_outcome():
    m = AxgbModel(strategy="replace", detect_drift=True)
    assert not any(m.record_outcome(1) for _ in range(10_000))
    rng = np.random.default_rng(0)
    for v in rng.random(2000) < 0.9:
        m.record_outcome(int(v))
    m.replace_cursor = 3
    hits = [m.record_outcome(int(v)) for v in rng.random(500) < 0.1]
    assert any(hits)
    assert m.drift_log[-1][1] == 0


# ---------------------------------------------------------------------------
# BXGB baseline
# ---------------------------------------------------------------------------


def test_bxgb_queue():
    X, y = sea(31_000)
    m = BxgbModel(n_estimators=30, sub_ensemble_size=30, window_size=1000, tree_params=TreeParams(max_depth=2))
    m.learn_many(X[:999], y[:999])
    assert m.n_members == 0
    assert m.predict(X[0]) == (1, 0.5)
    m.learn_many(X[999:30_000], y[999:30_000])
    assert m.n_members == 30 and m.n_trees == 900
    first = m.sub_ensembles[0]
    m.learn_many(X[30_000:31_000], y[30_000:31_000])
    assert m.n_members == 30 and m.sub_ensembles[0] is not first


def test_bxgb_vote_rules():
    m = BxgbModel(n_estimators=3, sub_ensemble_size=1)
    m.n_features = 2
    m.sub_ensembles.extend([[leaf(1.0)], [leaf(2.0)], [leaf(-1.0)]])
    cls, p = m.predict([0.0, 0.0])
    assert cls == 1 and p == pytest.approx(2 / 3)
    m.sub_ensembles.pop()
    m.sub_ensembles[1] = [leaf(-1.0)]
    m._packed = None
    assert m.predict([0.0, 0.0]) == (1, 0.5)


def test_bxgb_sub_ensembles_depend_only_on_their_window():
    X, y = sea(4000, seed=6)
    p = TreeParams(max_depth=3)
    m = BxgbModel(n_estimators=4, sub_ensemble_size=5, window_size=1000, tree_params=p)
    m.learn_many(X, y)
    for k in range(4):
        alone = boost(X[k * 1000:(k + 1) * 1000], y[k * 1000:(k + 1) * 1000], 5, p)
        assert all(a.same_structure(b) for a, b in zip(m.sub_ensembles[k], alone))


# ---------------------------------------------------------------------------
# node counts, factory and serialization
# ---------------------------------------------------------------------------


def test_node_count_examples():
    assert ensemble_node_count(AxgbModel()) == 0
    m = AxgbModel()
    m.insert_push(leaf(0.1))
    assert ensemble_node_count(m) == 1
    X, y = sea(40_000)
    m = AxgbModel(n_estimators=30)
    m.learn_many(X, y)
    assert ensemble_node_count(m) <= 30 * 127


def test_make_model_names():
    assert make_model("axgb_push").name == "AXGB[p]"
    assert make_model("axgb_adwin_replace").name == "AXGB_A[r]"
    assert make_model("bxgb").name == "BXGB"
    with pytest.raises(ValueError):
        make_model("xgb")


@pytest.mark.parametrize("name", ["axgb_push", "axgb_adwin_replace", "bxgb"])
def test_dump_restore(name):
    X, y = sea(6000, seed=8)
    m = make_model(name, n_estimators=5, w_max=500, tree_params=TreeParams(max_depth=3), sub_ensemble_size=3)
    m.learn_many(X[:5200], y[:5200])
    doc = json.loads(json.dumps(m.to_dict()))
    back = model_from_dict(doc)
    assert np.array_equal(back.predict_many(X[5200:])[1], m.predict_many(X[5200:])[1])
    if name != "bxgb":
        assert back.replace_cursor == m.replace_cursor
        assert back.window_exponent == m.window_exponent
        assert back.strategy == m.strategy
        assert back.buffer_count == 0
        assert back.has_detector == m.has_detector


def test_strategy_enum():
    assert Strategy("push") is Strategy.PUSH
    with pytest.raises(ValueError):
        AxgbModel(strategy="shuffle")
