"""Prediction contract shared by every feature-based classifier."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .dataset_io import NUM_CLASSES


class ClassifierError(ValueError):
    pass


def validate_training_data(X: np.ndarray, y: np.ndarray, n_classes: int, strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2:
        raise ClassifierError(f"features must be 2-D, got shape {X.shape}")
    if len(X) != len(y):
        raise ClassifierError(f"{len(X)} feature rows but {len(y)} labels")
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
    if len(bad):
        raise ClassifierError(f"non-finite feature in row {int(bad[0])}")
    if len(y) and (y.min() < 0 or y.max() >= n_classes):
        raise ClassifierError(f"labels must lie in 0..{n_classes - 1}")
    if strict:
        if len(y) < n_classes:
            raise ClassifierError(f"need at least {n_classes} samples, got {len(y)}")
        missing = sorted(set(range(n_classes)) - set(y.tolist()))
        if missing:
            raise ClassifierError(f"classes missing from training labels: {missing}")
    return X, y


def training_digest(X: np.ndarray, y: np.ndarray, hyperparams: dict, seed: int) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    h.update(json.dumps(hyperparams, sort_keys=True, default=str).encode())
    h.update(str(seed).encode())
    return h.hexdigest()


class FittedClassifier:
    """Base for fitted models: ``predict`` is the row argmax of ``predict_proba``, ties to the lowest id."""

    kind: str
    hyperparams: dict
    seed: int
    feature_dim: int
    class_count: int = NUM_CLASSES
    training_digest: str = ""

    def _raw_proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, self.feature_dim)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise ClassifierError(f"expected {self.feature_dim} features per row, got shape {X.shape}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_input(X)
        if len(X) == 0:
            return np.empty((0, self.class_count))
        p = np.clip(np.asarray(self._raw_proba(X), dtype=np.float64), 0.0, None)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1).astype(np.int64)

    def manifest(self) -> dict:
        return {
            "kind": self.kind,
            "hyperparams": self.hyperparams,
            "seed": self.seed,
            "feature_dim": self.feature_dim,
            "class_count": self.class_count,
            "training_digest": self.training_digest,
        }

    def save(self, directory: str | Path) -> Path:
        import joblib

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        joblib.dump(self, directory / "model.joblib")
        (directory / "model.json").write_text(json.dumps(self.manifest(), indent=2, default=str))
        return directory


def load_classifier(directory: str | Path) -> FittedClassifier:
    import joblib

    model = joblib.load(Path(directory) / "model.joblib")
    if not isinstance(model, FittedClassifier):
        raise ClassifierError(f"{directory} does not hold a fitted classifier")
    return model
