from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dataset_io import SPECIES  # noqa: E402
from .evaluation import ConfusionMatrix, ROCReport  # noqa: E402


def plot_confusion(cm: ConfusionMatrix, path: str | Path, title: str = "") -> Path:
    counts = np.asarray(cm.counts)
    k = counts.shape[0]
    names = SPECIES[:k] if k <= len(SPECIES) else [str(i) for i in range(k)]
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(k), names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(k), names, fontsize=8)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    thresh = counts.max() / 2.0 if counts.size else 0
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center", fontsize=8,
                    color="white" if counts[i, j] > thresh else "black")
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def plot_roc(roc: ROCReport, path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4.6))
    for c, curve in enumerate(roc.per_class):
        if curve.defined:
            ax.plot(curve.fpr, curve.tpr, lw=1.4, label=f"class {c} (AUC = {curve.auc:.2f})")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.legend(loc="lower right", fontsize=7)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)
