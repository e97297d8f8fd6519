"""Feedforward-network classifiers on extracted features: ANN, RBF network, autoencoder classifier.

All three standardise their inputs with statistics from the training rows,
train with minibatch Adam for a fixed number of epochs (no early stopping)
and are deterministic given ``FnnKind.seed``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist
from sklearn.cluster import KMeans

from . import mlp
from .classifier_base import ClassifierError, FittedClassifier, training_digest, validate_training_data
from .dataset_io import NUM_CLASSES

FNN_KINDS: tuple[str, ...] = ("ANN", "RBFNN", "AutoencoderClassifier")
_ALIASES = {"ann": "ANN", "mlp": "ANN", "rbfnn": "RBFNN", "rbf": "RBFNN",
            "autoencoder": "AutoencoderClassifier", "autoencoderclassifier": "AutoencoderClassifier"}
_DEFAULT_LR = {"ANN": 1e-3, "RBFNN": 1e-2, "AutoencoderClassifier": 1e-3}


@dataclass(frozen=True)
class FnnKind:
    """Configuration of one feedforward classifier.

    ``arch`` means: hidden widths for ANN; ``[n_centers]`` for RBFNN (empty
    picks ``min(10 * classes, n)``); encoder hidden widths for the
    autoencoder, whose bottleneck is ``bottleneck`` (default ``d // 8``).
    """

    kind: str
    arch: tuple[int, ...] | None = None
    epochs: int | None = None
    batch_size: int = 32
    seed: int = 0
    learning_rate: float | None = None
    bottleneck: int | None = None
    pretrain_epochs: int = 30
    rbfnn_mode: str = "rbf_layer"  # or "svm_alias"

    def __post_init__(self) -> None:
        kind = _ALIASES.get(self.kind.lower().replace("_", "").replace("-", ""))
        if kind is None:
            raise ClassifierError(f"unknown FNN kind {self.kind!r}; choose from {', '.join(FNN_KINDS)}")
        object.__setattr__(self, "kind", kind)
        if self.arch is None:
            default = {"ANN": (512, 256), "RBFNN": (), "AutoencoderClassifier": (256,)}[kind]
            object.__setattr__(self, "arch", default)
        object.__setattr__(self, "arch", tuple(int(a) for a in self.arch))
        if self.epochs is None:
            object.__setattr__(self, "epochs", 30 if kind == "AutoencoderClassifier" else 50)
        if kind == "ANN" and len(self.arch) < 1:
            raise ClassifierError("ANN needs at least one hidden layer")
        if kind == "RBFNN" and len(self.arch) > 1:
            raise ClassifierError("RBFNN arch is a single entry: the number of centres")
        if any(a < 1 for a in self.arch):
            raise ClassifierError(f"layer widths must be positive, got {self.arch}")
        if self.epochs < 1 or self.batch_size < 1 or self.pretrain_epochs < 0:
            raise ClassifierError("epochs and batch_size must be >= 1")
        if self.rbfnn_mode not in ("rbf_layer", "svm_alias"):
            raise ClassifierError(f"rbfnn_mode must be 'rbf_layer' or 'svm_alias', got {self.rbfnn_mode!r}")

    @property
    def lr(self) -> float:
        return self.learning_rate if self.learning_rate is not None else _DEFAULT_LR[self.kind]

    def to_json(self) -> dict:
        d = asdict(self)
        d["arch"] = list(self.arch)
        d["learning_rate"] = self.lr
        return d


class _Scaler:
    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.std + self.mean


class FnnClassifier(FittedClassifier):
    def __init__(self, cfg: FnnKind, layers: list[mlp.Dense], scaler: _Scaler, feature_dim: int,
                 class_count: int, digest: str, history: dict):
        self.cfg = cfg
        self.kind = cfg.kind
        self.hyperparams = cfg.to_json()
        self.seed = cfg.seed
        self.layers = layers
        self.scaler = scaler
        self.feature_dim = feature_dim
        self.class_count = class_count
        self.training_digest = digest
        self.history = history

    def _hidden(self, X: np.ndarray) -> np.ndarray:
        return self.scaler(X)

    def _raw_proba(self, X: np.ndarray) -> np.ndarray:
        z, _ = mlp.forward(self.layers, self._hidden(X))
        return mlp.softmax(z)

    def manifest(self) -> dict:
        return super().manifest() | {"arch": [l.W.shape[1] for l in self.layers], "history": self.history}


class RbfClassifier(FnnClassifier):
    def __init__(self, *args, centers: np.ndarray, sigma: float, **kw):
        super().__init__(*args, **kw)
        self.centers = centers
        self.sigma = sigma

    def _hidden(self, X: np.ndarray) -> np.ndarray:
        return rbf_activations(self.scaler(X), self.centers, self.sigma)

    def manifest(self) -> dict:
        return super().manifest() | {"n_centers": len(self.centers), "sigma": self.sigma}


class AutoencoderClassifier(FnnClassifier):
    def __init__(self, *args, pretrained_encoder: list[mlp.Dense], decoder: list[mlp.Dense], **kw):
        super().__init__(*args, **kw)
        self.pretrained_encoder = pretrained_encoder
        self.decoder = decoder

    def reconstruct(self, X) -> np.ndarray:
        """Reconstruction through the phase-1 encoder and decoder, in input units."""
        X = self._check_input(X)
        return self.scaler.inverse(mlp.forward(self.pretrained_encoder + self.decoder, self.scaler(X))[0])


def _prepare(X, y, cfg: FnnKind, n_classes: int, strict: bool):
    X, y = validate_training_data(X, y, n_classes, strict)
    scaler = _Scaler(X)
    digest = training_digest(X, y, cfg.to_json(), cfg.seed)
    return X, y, scaler, digest


def build_ann(d: int, cfg: FnnKind, n_classes: int, rng: np.random.Generator) -> list[mlp.Dense]:
    return mlp.build([d, *cfg.arch, n_classes], rng, hidden="relu", last="linear")


def fit_ann(X, y, cfg: FnnKind | None = None, n_classes: int = NUM_CLASSES, strict: bool = True) -> FnnClassifier:
    """ReLU hidden layers, softmax output, cross-entropy, Adam."""
    cfg = cfg or FnnKind("ANN")
    if cfg.kind != "ANN":
        raise ClassifierError(f"fit_ann got a {cfg.kind} config")
    X, y, scaler, digest = _prepare(X, y, cfg, n_classes, strict)
    layers = build_ann(X.shape[1], cfg, n_classes, np.random.default_rng([cfg.seed, 0]))
    losses = mlp.train(layers, scaler(X), y, mlp.cross_entropy, cfg.epochs, cfg.batch_size, cfg.lr,
                       np.random.default_rng([cfg.seed, 1]))
    return FnnClassifier(cfg, layers, scaler, X.shape[1], n_classes, digest, {"train_loss": losses})


def rbf_activations(Z: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    sq = (Z**2).sum(1)[:, None] - 2.0 * Z @ centers.T + (centers**2).sum(1)[None, :]
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma**2))


def fit_rbfnn(X, y, cfg: FnnKind | None = None, n_classes: int = NUM_CLASSES, strict: bool = True) -> FittedClassifier:
    """k-means centres, one shared Gaussian width (median pairwise centre distance), softmax output layer."""
    cfg = cfg or FnnKind("RBFNN")
    if cfg.kind != "RBFNN":
        raise ClassifierError(f"fit_rbfnn got a {cfg.kind} config")
    if cfg.rbfnn_mode == "svm_alias":
        from .classical import ClassifierKind, fit
        return fit(ClassifierKind("SVM", seed=cfg.seed), X, y, n_classes, strict)

    X, y, scaler, digest = _prepare(X, y, cfg, n_classes, strict)
    n_centers = cfg.arch[0] if cfg.arch else min(10 * n_classes, len(X))
    if n_centers < n_classes:
        raise ClassifierError(f"{n_centers} RBF centres cannot serve {n_classes} classes")
    if len(X) < n_centers:
        raise ClassifierError(f"need at least {n_centers} samples for {n_centers} centres, got {len(X)}")
    Z = scaler(X)
    km = KMeans(n_clusters=n_centers, n_init=10, random_state=cfg.seed).fit(Z)
    centers = np.unique(np.round(km.cluster_centers_, 12), axis=0)
    if len(centers) < 2:
        raise ClassifierError("k-means collapsed to fewer than 2 distinct centres")
    sigma = float(np.median(pdist(centers)))
    if not sigma > 0:
        raise ClassifierError("degenerate RBF width")
    H = rbf_activations(Z, centers, sigma)
    out = mlp.build([len(centers), n_classes], np.random.default_rng([cfg.seed, 0]), last="linear")
    losses = mlp.train(out, H, y, mlp.cross_entropy, cfg.epochs, cfg.batch_size, cfg.lr,
                       np.random.default_rng([cfg.seed, 1]))
    return RbfClassifier(cfg, out, scaler, X.shape[1], n_classes, digest, {"train_loss": losses},
                         centers=centers, sigma=sigma)


def pretrain_autoencoder(Z: np.ndarray, cfg: FnnKind, bottleneck: int, epochs: int | None = None):
    """Phase 1: symmetric encoder/decoder minimising reconstruction MSE of ``Z``. Labels are never seen."""
    d = Z.shape[1]
    rng = np.random.default_rng([cfg.seed, 10])
    enc = mlp.build([d, *cfg.arch, bottleneck], rng, hidden="relu", last="linear")
    dec = mlp.build([bottleneck, *reversed(cfg.arch), d], rng, hidden="relu", last="linear")
    net = enc + dec
    epochs = cfg.pretrain_epochs if epochs is None else epochs
    losses = mlp.train(net, Z, Z, mlp.mean_squared, epochs, cfg.batch_size, cfg.lr,
                       np.random.default_rng([cfg.seed, 11])) if epochs else []
    return net[: len(enc)], net[len(enc):], losses


def fit_autoencoder_classifier(X, y, cfg: FnnKind | None = None, n_classes: int = NUM_CLASSES,
                               strict: bool = True) -> AutoencoderClassifier:
    """Phase 1 unsupervised reconstruction, phase 2 encoder + softmax head fine-tuned on labels."""
    cfg = cfg or FnnKind("AutoencoderClassifier")
    if cfg.kind != "AutoencoderClassifier":
        raise ClassifierError(f"fit_autoencoder_classifier got a {cfg.kind} config")
    X, y, scaler, digest = _prepare(X, y, cfg, n_classes, strict)
    d = X.shape[1]
    bottleneck = cfg.bottleneck if cfg.bottleneck is not None else max(1, d // 8)
    if not 1 <= bottleneck < d:
        raise ClassifierError(f"bottleneck {bottleneck} must be smaller than the input width {d}")
    Z = scaler(X)
    enc, dec, recon = pretrain_autoencoder(Z, cfg, bottleneck)
    pretrained = [l.copy() for l in enc]
    head = mlp.build([bottleneck, n_classes], np.random.default_rng([cfg.seed, 20]), last="linear")
    layers = [l.copy() for l in enc] + head
    losses = mlp.train(layers, Z, y, mlp.cross_entropy, cfg.epochs, cfg.batch_size, cfg.lr,
                       np.random.default_rng([cfg.seed, 21]))
    model = AutoencoderClassifier(cfg, layers, scaler, d, n_classes, digest,
                                  {"reconstruction_loss": recon, "train_loss": losses},
                                  pretrained_encoder=pretrained, decoder=dec)
    model.hyperparams["bottleneck"] = bottleneck
    return model


def fit_fnn(cfg: FnnKind, X, y, n_classes: int = NUM_CLASSES, strict: bool = True) -> FittedClassifier:
    fitter = {"ANN": fit_ann, "RBFNN": fit_rbfnn, "AutoencoderClassifier": fit_autoencoder_classifier}[cfg.kind]
    return fitter(X, y, cfg, n_classes, strict)
