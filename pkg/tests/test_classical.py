import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jellybench.classical import CLASSICAL_KINDS, SHORT_NAMES, ClassifierKind, fit, predict, predict_proba
from jellybench.classifier_base import ClassifierError, load_classifier


def _blobs(n=100, seed=0, k=2, spread=0.3):
    rng = np.random.default_rng(seed)
    centres = np.array([[-4.0, 0.0], [4.0, 0.0], [0.0, 5.0], [0.0, -5.0], [5.0, 5.0], [-5.0, -5.0]])[:k]
    y = np.arange(n) % k
    X = centres[y] + rng.normal(scale=spread, size=(n, 2))
    return X, y, centres


def _centroid_oracle(X, centres):
    return np.argmin(((X[:, None, :] - centres[None]) ** 2).sum(-1), axis=1)


def test_exactly_seven_kinds():
    assert len(CLASSICAL_KINDS) == 7
    assert set(SHORT_NAMES.values()) == {"SVM", "RF", "DT", "LR", "GB", "XGB", "LGBM"}


@pytest.mark.parametrize("kind", ["SVM", "LogisticRegression"])
def test_separable_blobs_perfect(kind):
    X, y, _ = _blobs(100, seed=0)
    Xt, yt, _ = _blobs(100, seed=1)
    model = fit(ClassifierKind(kind, seed=0), X, y, n_classes=2)
    assert np.mean(predict(model, Xt) == yt) == 1.0


@pytest.mark.parametrize("kind", CLASSICAL_KINDS)
def test_labels_match_centroid_oracle(kind):
    X, y, centres = _blobs(300, seed=2, k=3)
    Xt, _, _ = _blobs(60, seed=3, k=3)
    hp = {"min_child_samples": 5} if kind == "LightGBM" else {}
    model = fit(ClassifierKind(kind, hp, seed=0), X, y, n_classes=3)
    assert np.array_equal(predict(model, Xt), _centroid_oracle(Xt, centres))


def test_logistic_probability_mass_on_oracle_side():
    X, y, centres = _blobs(200, seed=4, spread=1.5)
    model = fit("LR", X, y, n_classes=2)
    Xt, _, _ = _blobs(500, seed=5, spread=1.5)
    oracle = _centroid_oracle(Xt, centres)
    p = predict_proba(model, Xt)
    assert np.mean(p[np.arange(len(Xt)), oracle] > 0.5) >= 0.99


@pytest.mark.parametrize("kind", CLASSICAL_KINDS)
def test_probability_contract_and_argmax(kind):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 5))
    y = np.arange(60) % 6
    hp = {"min_child_samples": 2} if kind == "LightGBM" else {}
    model = fit(ClassifierKind(kind, hp, seed=1), X, y)
    Xq = rng.normal(size=(40, 5)) * 3
    p = model.predict_proba(Xq)
    assert p.shape == (40, 6)
    assert np.all(p >= 0) and np.allclose(p.sum(1), 1.0, atol=1e-6)
    assert np.array_equal(model.predict(Xq), p.argmax(1))
    again = fit(ClassifierKind(kind, hp, seed=1), X, y)
    assert np.array_equal(again.predict_proba(Xq), p)


def test_memorising_tree():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    y = np.arange(30) % 6
    model = fit("DecisionTree", X, y)
    assert np.array_equal(model.predict(X), y)
    assert np.all(model.predict_proba(X)[np.arange(30), y] == 1.0)


def test_empty_prediction():
    X, y, _ = _blobs(20)
    model = fit("SVM", X, y, n_classes=2)
    assert model.predict(np.empty((0, 2))).shape == (0,)


def test_dimension_mismatch():
    X, y, _ = _blobs(20)
    model = fit("RF", X, y, n_classes=2)
    with pytest.raises(ClassifierError, match="features per row"):
        model.predict(np.zeros((3, 5)))


def test_constant_labels_relaxed_path():
    X = np.random.default_rng(0).normal(size=(10, 3))
    y = np.full(10, 4)
    with pytest.raises(ClassifierError, match="missing"):
        fit("SVM", X, y)
    model = fit("SVM", X, y, strict=False)
    assert np.all(model.predict(X * 10) == 4)


def test_non_finite_row_named():
    X = np.zeros((12, 2))
    X[7, 1] = np.inf
    with pytest.raises(ClassifierError, match="row 7"):
        fit("LR", X, np.arange(12) % 6)


@pytest.mark.parametrize("bad", [{"C": "big"}, {"depth": 3}, {"C": True}])
def test_hyperparameter_schema(bad):
    with pytest.raises(ClassifierError):
        ClassifierKind("SVM", bad)


def test_unknown_kind():
    with pytest.raises(ClassifierError):
        ClassifierKind("KNN")


def test_standardization_defaults():
    assert ClassifierKind("SVM").scaled and ClassifierKind("LR").scaled
    assert not ClassifierKind("RF").scaled
    assert ClassifierKind("RF", standardize=True).scaled


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_row_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(36, 3))
    y = np.arange(36) % 6
    Xq = rng.normal(size=(10, 3))
    perm = rng.permutation(36)
    model = fit("LogisticRegression", X, y)
    permuted = fit("LogisticRegression", X[perm], y[perm])
    assert np.array_equal(model.predict(Xq), permuted.predict(Xq))


def test_persistence_round_trip(tmp_path):
    X, y, _ = _blobs(40, k=2)
    model = fit(ClassifierKind("RF", seed=3), X, y, n_classes=2)
    model.save(tmp_path)
    meta = json.loads((tmp_path / "model.json").read_text())
    assert {"kind", "hyperparams", "seed", "feature_dim", "training_digest"} <= set(meta)
    loaded = load_classifier(tmp_path)
    assert np.array_equal(loaded.predict_proba(X), model.predict_proba(X))
