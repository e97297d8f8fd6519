"""Accuracy, per-class and averaged precision/recall/F1, confusion matrices and one-vs-rest ROC."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset_io import NUM_CLASSES


class MetricsError(ValueError):
    pass


def _labels(y, name: str, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64).ravel()
    if len(y) and (y.min() < 0 or y.max() >= n_classes):
        raise MetricsError(f"{name} labels must lie in 0..{n_classes - 1}")
    return y


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_json(self) -> list[list[int]]:
        return self.counts.tolist()


def confusion_matrix(y_true, y_pred, n_classes: int = NUM_CLASSES) -> ConfusionMatrix:
    y_true = _labels(y_true, "true", n_classes)
    y_pred = _labels(y_pred, "predicted", n_classes)
    if len(y_true) != len(y_pred):
        raise MetricsError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted labels")
    counts = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes).astype(np.int64))


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    per_class: tuple[ClassScores, ...]
    precision_weighted: float = 0.0
    recall_weighted: float = 0.0
    f1_weighted: float = 0.0
    precision_micro: float = 0.0
    recall_micro: float = 0.0
    f1_micro: float = 0.0
    n: int = 0

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "accuracy", "precision_macro", "recall_macro", "f1_macro",
            "precision_weighted", "recall_weighted", "f1_weighted",
            "precision_micro", "recall_micro", "f1_micro", "n")}
        out["per_class"] = [asdict(c) for c in self.per_class]
        return out

    @classmethod
    def from_json(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        per_class = tuple(ClassScores(**c) for c in d.pop("per_class"))
        return cls(per_class=per_class, **d)


def classification_metrics(y_true, y_pred, n_classes: int = NUM_CLASSES) -> MetricsReport:
    """Macro averages run over classes with nonzero support; 0/0 counts as 0."""
    cm = confusion_matrix(y_true, y_pred, n_classes)
    n = cm.total
    if n == 0:
        raise MetricsError("metrics undefined for empty input")
    tp = np.diag(cm.counts)
    pred_count = cm.counts.sum(axis=0)
    support = cm.support
    per_class = []
    for c in range(n_classes):
        p = _ratio(int(tp[c]), int(pred_count[c]))
        r = _ratio(int(tp[c]), int(support[c]))
        per_class.append(ClassScores(p, r, _f1(p, r), int(support[c])))
    present = [s for s in per_class if s.support > 0]

    def macro(attr: str) -> float:
        vals = [getattr(s, attr) for s in present]
        return sum(vals) / len(vals)

    def weighted(attr: str) -> float:
        return sum(getattr(s, attr) * s.support for s in present) / n

    correct = int(tp.sum())
    micro_p = _ratio(correct, int(pred_count.sum()))
    micro_r = _ratio(correct, int(support.sum()))
    return MetricsReport(
        accuracy=correct / n,
        precision_macro=macro("precision"), recall_macro=macro("recall"), f1_macro=macro("f1"),
        per_class=tuple(per_class),
        precision_weighted=weighted("precision"), recall_weighted=weighted("recall"),
        f1_weighted=weighted("f1"),
        precision_micro=micro_p, recall_micro=micro_r, f1_micro=_f1(micro_p, micro_r),
        n=n,
    )


@dataclass(frozen=True)
class ClassRoc:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    defined: bool = True


@dataclass(frozen=True)
class ROCReport:
    per_class: tuple[ClassRoc, ...]
    strategy: str = "one-vs-rest"
    macro_auc: float = float("nan")

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "macro_auc": None if np.isnan(self.macro_auc) else self.macro_auc,
            "per_class": [
                {"defined": c.defined, "auc": c.auc if c.defined else None,
                 "fpr": c.fpr.tolist(), "tpr": c.tpr.tolist()}
                for c in self.per_class
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ROCReport":
        curves = tuple(
            ClassRoc(np.asarray(c["fpr"], dtype=np.float64), np.asarray(c["tpr"], dtype=np.float64), np.empty(0),
                     float("nan") if c["auc"] is None else c["auc"], c["defined"])
            for c in d["per_class"])
        macro = d.get("macro_auc")
        return cls(curves, d.get("strategy", "one-vs-rest"), float("nan") if macro is None else macro)


def trapezoid_area(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def roc_curve(positive: np.ndarray, scores: np.ndarray) -> ClassRoc:
    """ROC points at every distinct score (descending), plus the (0, 0) origin.

    Samples sharing a score enter the positive side together, giving a single
    (possibly diagonal) step.
    """
    positive = np.asarray(positive, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return ClassRoc(np.empty(0), np.empty(0), np.empty(0), float("nan"), defined=False)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = positive[order]
    last_of_group = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tps = np.cumsum(pos)[last_of_group]
    fps = (last_of_group + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thresholds = np.r_[np.inf, s[last_of_group]]
    return ClassRoc(fpr, tpr, thresholds, trapezoid_area(fpr, tpr))


def roc_auc(y_true, proba, n_classes: int | None = None) -> ROCReport:
    proba = np.asarray(proba, dtype=np.float64)
    n_classes = n_classes or (proba.shape[1] if proba.ndim == 2 else NUM_CLASSES)
    y_true = _labels(y_true, "true", n_classes)
    if proba.ndim != 2 or proba.shape[0] != len(y_true) or proba.shape[1] != n_classes:
        raise MetricsError(f"probability matrix shape {proba.shape} does not match {len(y_true)} labels")
    curves = tuple(roc_curve(y_true == c, proba[:, c]) for c in range(n_classes))
    aucs = [c.auc for c in curves if c.defined]
    return ROCReport(curves, macro_auc=sum(aucs) / len(aucs) if aucs else float("nan"))


@dataclass
class Evaluation:
    """Everything computed for one set of predictions."""

    metrics: MetricsReport
    confusion: ConfusionMatrix
    roc: ROCReport | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"metrics": self.metrics.to_json(), "confusion": self.confusion.to_json(),
                "roc": self.roc.to_json() if self.roc is not None else None} | self.extra

    @classmethod
    def from_json(cls, d: dict) -> "Evaluation":
        d = dict(d)
        metrics = MetricsReport.from_json(d.pop("metrics"))
        confusion = ConfusionMatrix(np.asarray(d.pop("confusion"), dtype=np.int64))
        roc = d.pop("roc", None)
        return cls(metrics, confusion, ROCReport.from_json(roc) if roc else None, d)


def evaluate(y_true, proba, n_classes: int = NUM_CLASSES) -> Evaluation:
    proba = np.asarray(proba, dtype=np.float64)
    y_pred = proba.argmax(axis=1)
    return Evaluation(classification_metrics(y_true, y_pred, n_classes),
                      confusion_matrix(y_true, y_pred, n_classes),
                      roc_auc(y_true, proba, n_classes))
