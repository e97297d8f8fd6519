import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jellybench.evaluation import (
    Evaluation,
    MetricsError,
    classification_metrics,
    confusion_matrix,
    evaluate,
    roc_auc,
    roc_curve,
)
from oracles import auc_by_pairs, auc_by_trapezoids, confusion_loops, metrics_loops, roc_points_by_thresholds

labels = st.lists(st.integers(0, 5), min_size=1, max_size=50)


def test_hand_example():
    m = classification_metrics([0, 0, 1, 1], [0, 1, 1, 1], n_classes=2)
    assert m.accuracy == 0.75
    assert m.per_class[0].precision == 1.0 and m.per_class[0].recall == 0.5
    assert m.per_class[1].precision == pytest.approx(2 / 3) and m.per_class[1].recall == 1.0
    assert m.f1_macro == pytest.approx((2 / 3 + 4 / 5) / 2)


def test_perfect_predictions():
    y = [0, 1, 2, 3, 4, 5, 5]
    m = classification_metrics(y, y)
    assert (m.accuracy, m.precision_macro, m.recall_macro, m.f1_macro) == (1.0, 1.0, 1.0, 1.0)


def test_empty_input():
    with pytest.raises(MetricsError, match="metrics undefined for empty input"):
        classification_metrics([], [])


def test_length_mismatch_and_range():
    with pytest.raises(MetricsError):
        confusion_matrix([0, 1], [0])
    with pytest.raises(MetricsError):
        confusion_matrix([0, 6], [0, 1])


def test_macro_can_differ_from_accuracy():
    # recall above accuracy happens under macro averaging with unbalanced errors
    m = classification_metrics([0, 0, 0, 0, 1], [0, 0, 0, 1, 1], n_classes=2)
    assert m.recall_macro == pytest.approx((0.75 + 1.0) / 2)
    assert m.accuracy == 0.8


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_metrics_match_loop_oracle(data):
    y_true = data.draw(labels)
    y_pred = data.draw(st.lists(st.integers(0, 5), min_size=len(y_true), max_size=len(y_true)))
    m = classification_metrics(y_true, y_pred)
    oracle = metrics_loops(y_true, y_pred, 6)
    for key, value in oracle.items():
        assert getattr(m, key) == pytest.approx(value, abs=1e-12)
    assert confusion_matrix(y_true, y_pred).counts.tolist() == confusion_loops(y_true, y_pred, 6)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8))
def test_balanced_micro_equals_accuracy(per_class):
    rng = np.random.default_rng(per_class)
    y_true = np.repeat(np.arange(6), per_class)
    y_pred = rng.integers(0, 6, len(y_true))
    m = classification_metrics(y_true, y_pred)
    assert m.precision_micro == pytest.approx(m.accuracy)
    assert m.recall_micro == pytest.approx(m.accuracy)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 6)), min_size=2, max_size=40))
def test_roc_matches_threshold_enumeration(pairs):
    positive = [p for p, _ in pairs]
    scores = [s / 6 for _, s in pairs]
    if all(positive) or not any(positive):
        assert not roc_curve(np.array(positive), np.array(scores)).defined
        return
    curve = roc_curve(np.array(positive), np.array(scores))
    points = roc_points_by_thresholds(positive, scores)
    assert np.allclose(curve.fpr, [x for x, _ in points], atol=1e-12)
    assert np.allclose(curve.tpr, [y for _, y in points], atol=1e-12)
    assert curve.auc == pytest.approx(auc_by_trapezoids(points), abs=1e-9)
    assert curve.auc == pytest.approx(auc_by_pairs(positive, scores), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_auc_invariances(seed):
    rng = np.random.default_rng(seed)
    positive = np.arange(30) % 3 == 0
    scores = rng.random(30)
    auc = roc_curve(positive, scores).auc
    assert roc_curve(positive, np.exp(3 * scores) - 7).auc == pytest.approx(auc, abs=1e-12)
    assert roc_curve(positive, -scores).auc == pytest.approx(1 - auc, abs=1e-12)


def test_roc_report_skips_absent_classes():
    y = np.array([0, 0, 1, 1])
    proba = np.full((4, 6), 1 / 6)
    rep = roc_auc(y, proba)
    assert [c.defined for c in rep.per_class] == [True, True, False, False, False, False]
    assert rep.macro_auc == pytest.approx(0.5)
    assert rep.to_json()["per_class"][3]["auc"] is None


def test_roc_shape_check():
    with pytest.raises(MetricsError):
        roc_auc([0, 1], np.ones((3, 6)) / 6)


def test_evaluation_json_round_trip():
    rng = np.random.default_rng(0)
    y = np.arange(30) % 6
    proba = rng.dirichlet(np.ones(6), 30)
    ev = evaluate(y, proba)
    back = Evaluation.from_json(ev.to_json())
    assert back.to_json() == ev.to_json()
    assert np.array_equal(back.confusion.counts, ev.confusion.counts)
