"""The seven classical classifiers, fitted on extracted feature vectors.

SVM probabilities come from libsvm's pairwise coupling of Platt-scaled
one-vs-one scores (``SVC(probability=True)``), seeded for reproducibility.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .classifier_base import (
    ClassifierError,
    FittedClassifier,
    training_digest,
    validate_training_data,
)
from .dataset_io import NUM_CLASSES

CLASSICAL_KINDS: tuple[str, ...] = (
    "SVM", "RandomForest", "DecisionTree", "LogisticRegression", "GradientBoosting", "XGBoost", "LightGBM",
)
SHORT_NAMES = {
    "SVM": "SVM", "RandomForest": "RF", "DecisionTree": "DT", "LogisticRegression": "LR",
    "GradientBoosting": "GB", "XGBoost": "XGB", "LightGBM": "LGBM",
}
_ALIASES = {k.lower(): k for k in CLASSICAL_KINDS} | {v.lower(): k for k, v in SHORT_NAMES.items()}

# (default value, accepted types) per hyperparameter
_SCHEMA: dict[str, dict[str, tuple]] = {
    "SVM": {"C": (1.0, (int, float)), "kernel": ("rbf", (str,)), "gamma": ("scale", (str, float))},
    "RandomForest": {"n_estimators": (100, (int,)), "max_depth": (None, (int, type(None)))},
    "DecisionTree": {"max_depth": (None, (int, type(None))), "criterion": ("gini", (str,))},
    "LogisticRegression": {"C": (1.0, (int, float)), "max_iter": (1000, (int,))},
    "GradientBoosting": {"n_estimators": (100, (int,)), "learning_rate": (0.1, (float,)),
                         "max_depth": (3, (int,))},
    "XGBoost": {"n_estimators": (100, (int,)), "learning_rate": (0.1, (float,)), "max_depth": (6, (int,))},
    "LightGBM": {"n_estimators": (100, (int,)), "learning_rate": (0.1, (float,)),
                 "num_leaves": (31, (int,)), "min_child_samples": (20, (int,))},
}
STANDARDIZE_BY_DEFAULT = {"SVM", "LogisticRegression"}


def canonical_kind(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise ClassifierError(f"unknown classifier {name!r}; choose from {', '.join(CLASSICAL_KINDS)}") from None


@dataclass(frozen=True)
class ClassifierKind:
    kind: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0
    standardize: bool | None = None  # None: on for SVM and LR only

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        schema = _SCHEMA[self.kind]
        unknown = set(self.hyperparams) - set(schema)
        if unknown:
            raise ClassifierError(f"unknown {self.kind} hyperparameters: {sorted(unknown)}")
        for key, value in self.hyperparams.items():
            if not isinstance(value, schema[key][1]) or isinstance(value, bool):
                raise ClassifierError(f"{self.kind}.{key}: bad value {value!r}")
        full = {k: v[0] for k, v in schema.items()} | dict(self.hyperparams)
        object.__setattr__(self, "hyperparams", full)

    @property
    def scaled(self) -> bool:
        return self.kind in STANDARDIZE_BY_DEFAULT if self.standardize is None else self.standardize


def _make_estimator(spec: ClassifierKind):
    hp, seed = spec.hyperparams, spec.seed
    if spec.kind == "SVM":
        from sklearn.svm import SVC
        est = SVC(probability=True, random_state=seed, **hp)
    elif spec.kind == "RandomForest":
        from sklearn.ensemble import RandomForestClassifier
        est = RandomForestClassifier(random_state=seed, n_jobs=1, **hp)
    elif spec.kind == "DecisionTree":
        from sklearn.tree import DecisionTreeClassifier
        est = DecisionTreeClassifier(random_state=seed, **hp)
    elif spec.kind == "LogisticRegression":
        from sklearn.linear_model import LogisticRegression
        est = LogisticRegression(random_state=seed, **hp)  # L2 is the default penalty
    elif spec.kind == "GradientBoosting":
        from sklearn.ensemble import GradientBoostingClassifier
        est = GradientBoostingClassifier(random_state=seed, **hp)
    elif spec.kind == "XGBoost":
        from xgboost import XGBClassifier
        est = XGBClassifier(random_state=seed, n_jobs=1, tree_method="hist", verbosity=0, **hp)
    else:
        from lightgbm import LGBMClassifier
        est = LGBMClassifier(random_state=seed, n_jobs=1, deterministic=True, force_row_wise=True,
                             verbose=-1, **hp)
    return make_pipeline(StandardScaler(), est) if spec.scaled else est


class _ConstantModel:
    def __init__(self, label: int):
        self.classes_ = np.array([label])

    def predict_proba(self, X):
        return np.ones((len(X), 1))


class ClassicalClassifier(FittedClassifier):
    def __init__(self, spec: ClassifierKind, estimator, feature_dim: int, class_count: int, digest: str):
        self.spec = spec
        self.kind = spec.kind
        self.hyperparams = dict(spec.hyperparams, standardize=spec.scaled)
        self.seed = spec.seed
        self.estimator = estimator
        self.feature_dim = feature_dim
        self.class_count = class_count
        self.training_digest = digest

    def _raw_proba(self, X: np.ndarray) -> np.ndarray:
        p = self.estimator.predict_proba(X)
        classes = getattr(self.estimator, "classes_", None)
        out = np.zeros((len(X), self.class_count))
        out[:, np.asarray(classes, dtype=np.int64)] = p
        return out


def fit(kind: ClassifierKind | str, X, y, n_classes: int = NUM_CLASSES, strict: bool = True) -> ClassicalClassifier:
    """Fit one classifier. ``strict=False`` admits training labels that miss some classes."""
    spec = kind if isinstance(kind, ClassifierKind) else ClassifierKind(kind)
    X, y = validate_training_data(X, y, n_classes, strict)
    present = np.unique(y)
    if len(present) == 1:
        est = _ConstantModel(int(present[0]))
    else:
        est = clone(_make_estimator(spec))
        if spec.kind in ("XGBoost", "LightGBM") and len(present) != present.max() + 1:
            raise ClassifierError(f"{spec.kind} needs contiguous labels 0..k-1")
        est.fit(X, y)
    digest = training_digest(X, y, spec.hyperparams, spec.seed)
    return ClassicalClassifier(spec, est, X.shape[1], n_classes, digest)


def predict(model: FittedClassifier, X) -> np.ndarray:
    return model.predict(X)


def predict_proba(model: FittedClassifier, X) -> np.ndarray:
    return model.predict_proba(X)
