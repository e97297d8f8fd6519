import json

import numpy as np
import pytest
from sklearn.datasets import make_circles
from sklearn.linear_model import LogisticRegression

from jellybench import mlp
from jellybench.classifier_base import ClassifierError, load_classifier
from jellybench.fnn import (
    FNN_KINDS,
    FnnKind,
    fit_ann,
    fit_autoencoder_classifier,
    fit_fnn,
    fit_rbfnn,
    pretrain_autoencoder,
)

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def _six_class(n=60, d=8, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 6
    X = rng.normal(size=(n, d)) + np.eye(6, d)[y] * 4
    return X, y


def test_kind_aliases():
    assert FnnKind("autoencoder").kind == "AutoencoderClassifier"
    assert FnnKind("mlp").kind == "ANN"
    assert set(FNN_KINDS) == {"ANN", "RBFNN", "AutoencoderClassifier"}


def test_defaults():
    assert FnnKind("ANN").arch == (512, 256) and FnnKind("ANN").epochs == 50
    ae = FnnKind("AutoencoderClassifier")
    assert ae.epochs == 30 and ae.pretrain_epochs == 30


def test_ann_needs_hidden_layer():
    with pytest.raises(ClassifierError, match="hidden"):
        FnnKind("ANN", arch=())


def test_xor_solved():
    model = fit_ann(XOR_X, XOR_Y, FnnKind("ANN", arch=(16,), epochs=1000, batch_size=4, seed=0), n_classes=2)
    assert np.array_equal(model.predict(XOR_X), XOR_Y)


def test_linear_model_cannot_solve_xor():
    assert LogisticRegression().fit(XOR_X, XOR_Y).score(XOR_X, XOR_Y) < 1.0


def test_rbfnn_solves_circles_where_linear_fails():
    X, y = make_circles(n_samples=200, factor=0.4, noise=0.05, random_state=0)
    rbf = fit_rbfnn(X, y, FnnKind("RBFNN", epochs=300, seed=0), n_classes=2)
    assert np.mean(rbf.predict(X) == y) >= 0.95
    linear = LogisticRegression().fit(X, y).score(X, y)
    assert linear < 0.65


def test_rbfnn_centre_count_validation():
    X, y = _six_class(12, 3)
    with pytest.raises(ClassifierError, match="centres"):
        fit_rbfnn(X[:4], np.array([0, 1, 0, 1]), FnnKind("RBFNN", arch=(1,)), n_classes=2)
    with pytest.raises(ClassifierError):
        fit_rbfnn(X, y, FnnKind("RBFNN", arch=(20,)))


@pytest.mark.filterwarnings("ignore::sklearn.exceptions.ConvergenceWarning")
def test_rbfnn_collapsed_centres_fatal():
    y = np.array([0, 1] * 4)
    with pytest.raises(ClassifierError):
        fit_rbfnn(np.zeros((8, 3)), y, FnnKind("RBFNN", arch=(4,)), n_classes=2)


def test_rbfnn_svm_alias():
    X, y = _six_class()
    model = fit_rbfnn(X, y, FnnKind("RBFNN", rbfnn_mode="svm_alias"))
    assert model.kind == "SVM"


def test_rank2_reconstruction_matches_pca_oracle():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(200, 2)) @ rng.normal(size=(2, 10))
    Z -= Z.mean(0)
    # exact rank-2 projection: the best any bottleneck-2 linear map can do
    _, _, vt = np.linalg.svd(Z, full_matrices=False)
    oracle = Z @ vt[:2].T @ vt[:2]
    oracle_mse = np.mean((oracle - Z) ** 2)
    cfg = FnnKind("AutoencoderClassifier", arch=(), learning_rate=1e-2, batch_size=32, seed=0)
    enc, dec, losses = pretrain_autoencoder(Z, cfg, bottleneck=2, epochs=400)
    recon, _ = mlp.forward(enc + dec, Z)
    mse = np.mean((recon - Z) ** 2)
    assert oracle_mse < 1e-20
    assert mse < 1e-3
    assert losses[-1] < losses[0]


def test_pretraining_reduces_held_out_reconstruction():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(120, 3)) @ rng.normal(size=(3, 12))
    train, held = Z[:90], Z[90:]
    cfg = FnnKind("AutoencoderClassifier", arch=(8,), seed=3)
    enc0, dec0, _ = pretrain_autoencoder(train, cfg, 3, epochs=0)
    enc1, dec1, _ = pretrain_autoencoder(train, cfg, 3, epochs=60)
    before = np.mean((mlp.forward(enc0 + dec0, held)[0] - held) ** 2)
    after = np.mean((mlp.forward(enc1 + dec1, held)[0] - held) ** 2)
    assert after < before


def test_phase_one_never_sees_labels():
    X, y = _six_class(48, 16)
    cfg = FnnKind("AutoencoderClassifier", arch=(8,), epochs=3, pretrain_epochs=5, seed=4)
    a = fit_autoencoder_classifier(X, y, cfg)
    b = fit_autoencoder_classifier(X, np.random.default_rng(0).permutation(y), cfg)
    for la, lb in zip(a.pretrained_encoder, b.pretrained_encoder):
        assert la.W.tobytes() == lb.W.tobytes() and la.b.tobytes() == lb.b.tobytes()
    assert a.history["reconstruction_loss"] == b.history["reconstruction_loss"]


def test_bottleneck_must_be_smaller_than_input():
    X, y = _six_class(30, 4)
    with pytest.raises(ClassifierError, match="bottleneck"):
        fit_autoencoder_classifier(X, y, FnnKind("AutoencoderClassifier", bottleneck=4))


def test_autoencoder_default_bottleneck():
    X, y = _six_class(30, 16)
    model = fit_autoencoder_classifier(X, y, FnnKind("AutoencoderClassifier", arch=(8,), epochs=2,
                                                     pretrain_epochs=2))
    assert model.hyperparams["bottleneck"] == 2
    assert model.reconstruct(X).shape == X.shape


@pytest.mark.parametrize("kind", FNN_KINDS)
def test_shared_prediction_contract(kind):
    X, y = _six_class(60, 8)
    cfg = FnnKind(kind, arch=(16,) if kind != "RBFNN" else (12,), epochs=5, pretrain_epochs=3, seed=2)
    model = fit_fnn(cfg, X, y)
    Xq = np.random.default_rng(9).normal(size=(25, 8)) * 5
    p = model.predict_proba(Xq)
    assert p.shape == (25, 6)
    assert np.all(p >= 0) and np.allclose(p.sum(1), 1.0, atol=1e-6)
    assert np.array_equal(model.predict(Xq), p.argmax(1))
    assert np.array_equal(fit_fnn(cfg, X, y).predict_proba(Xq), p)
    with pytest.raises(ClassifierError):
        model.predict(np.zeros((2, 3)))


def test_missing_class_rejected():
    X, y = _six_class(30)
    y[y == 5] = 0
    with pytest.raises(ClassifierError, match="missing"):
        fit_ann(X, y, FnnKind("ANN", epochs=1))


def test_divergence_reports_epoch_and_batch():
    X, y = _six_class(30)
    layers = mlp.build([8, 4, 6], np.random.default_rng(0))
    calls = []

    def exploding(layers, Xb, yb):
        calls.append(1)
        loss, grads = mlp.cross_entropy(layers, Xb, yb)
        return (float("nan") if len(calls) == 3 else loss), grads

    with pytest.raises(mlp.TrainingDivergedError, match="epoch 2, batch 0"):
        mlp.train(layers, X, y, exploding, epochs=3, batch_size=16, lr=1e-3, rng=np.random.default_rng(0))


def test_persistence_manifest(tmp_path):
    X, y = _six_class()
    model = fit_ann(X, y, FnnKind("ANN", arch=(8, 4), epochs=2))
    model.save(tmp_path)
    meta = json.loads((tmp_path / "model.json").read_text())
    assert meta["arch"] == [8, 4, 6] and len(meta["history"]["train_loss"]) == 2
    assert np.array_equal(load_classifier(tmp_path).predict_proba(X), model.predict_proba(X))
