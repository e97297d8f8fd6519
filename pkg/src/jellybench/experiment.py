"""End-to-end benchmark grid: every backbone x (softmax head, classical classifiers, FNNs).

All feature-based models of one run share one train/test index split. Each
backbone's features are extracted once per dataset and cached on disk.
"""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
from filelock import FileLock

from . import __version__
from .backbones import (
    Backbone,
    build_softmax_classifier,
    canonical_backbone,
    extract_features,
    load_backbone,
    train_softmax_classifier,
    train_softmax_head,
)
from .classical import SHORT_NAMES, ClassifierKind
from .classical import fit as fit_classical
from .classifier_base import FittedClassifier
from .config import ExperimentConfig, derive_seed
from .dataset_io import (
    DatasetManifest,
    LabeledImageSet,
    LazyImages,
    SplitAssignment,
    declared_split,
    scan_dataset,
    stratified_split,
)
from .evaluation import Evaluation, evaluate
from .feature_cache import CacheError, FeatureMatrix, load_feature_cache, save_feature_cache
from .fnn import FnnKind, fit_fnn
from .image_pipeline import PreprocessedImages, generate_augmented_set, save_augmented_set

log = logging.getLogger(__name__)

SOFTMAX = "Softmax"
FNN_NAMES = {"ANN": "ANN", "RBFNN": "RBFNN", "AutoencoderClassifier": "Autoencoder"}
METHODOLOGIES = ("softmax", "ml", "fnn")


def plan_cells(cfg: ExperimentConfig) -> list[tuple[str, str, str]]:
    """(backbone, model name, methodology) for every cell the config will produce."""
    cells = []
    for b in cfg.backbones:
        cells.append((b, SOFTMAX, "softmax"))
        cells += [(b, c.kind, "ml") for c in cfg.classifiers]
        cells += [(b, FNN_NAMES[f.kind], "fnn") for f in cfg.fnns]
    return cells


@dataclass
class Cell:
    backbone: str
    model_name: str
    methodology: str
    seed: int
    evaluation: Evaluation | None = None
    wall_time: float = 0.0
    error: str | None = None
    extra_evaluations: dict = field(default_factory=dict)
    deterministic: bool = True
    n_train: int = 0
    n_test: int = 0
    proba: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None and self.evaluation is not None

    @property
    def display_name(self) -> str:
        return SHORT_NAMES.get(self.model_name, self.model_name)

    def to_json(self) -> dict:
        return {
            "backbone": self.backbone,
            "model": self.model_name,
            "methodology": self.methodology,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "error": self.error,
            "deterministic": self.deterministic,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "evaluation": self.evaluation.to_json() if self.evaluation else None,
            "extra_evaluations": self.extra_evaluations,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Cell":
        return cls(
            backbone=d["backbone"], model_name=d["model"], methodology=d["methodology"], seed=d["seed"],
            evaluation=Evaluation.from_json(d["evaluation"]) if d.get("evaluation") else None,
            wall_time=d.get("wall_time", 0.0), error=d.get("error"),
            extra_evaluations=d.get("extra_evaluations", {}), deterministic=d.get("deterministic", True),
            n_train=d.get("n_train", 0), n_test=d.get("n_test", 0),
        )


@dataclass
class ResultGrid:
    cells: list[Cell] = field(default_factory=list)

    def __post_init__(self) -> None:
        keys = [(c.backbone, c.model_name) for c in self.cells]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (backbone, model) cells")

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[Cell]:
        return iter(self.cells)

    def add(self, cell: Cell) -> None:
        if self.get(cell.backbone, cell.model_name) is not None:
            raise ValueError(f"duplicate cell {cell.backbone}/{cell.model_name}")
        self.cells.append(cell)

    def get(self, backbone: str, model_name: str) -> Cell | None:
        for c in self.cells:
            if c.backbone == backbone and c.model_name == model_name:
                return c
        return None

    def to_json(self) -> dict:
        return {"cells": [c.to_json() for c in self.cells]}

    def save(self, path: str | Path) -> Path:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))
        return Path(path)

    @classmethod
    def load(cls, path: str | Path) -> "ResultGrid":
        return cls([Cell.from_json(c) for c in json.loads(Path(path).read_text())["cells"]])


class ConcatImages(Sequence):
    def __init__(self, *parts: Sequence[np.ndarray]):
        self._parts = [p for p in parts if len(p)]
        self._offsets = np.cumsum([0] + [len(p) for p in self._parts])

    def __len__(self) -> int:
        return int(self._offsets[-1])

    def __getitem__(self, i):  # type: ignore[override]
        if i < 0:
            i += len(self)
        k = int(np.searchsorted(self._offsets, i, side="right")) - 1
        return self._parts[k][i - int(self._offsets[k])]


class Workspace:
    """Shared state of one run: manifest, split, backbones, feature caches."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cache_events: list[dict] = []
        self._backbones: dict[str, Backbone] = {}

    @cached_property
    def manifest(self) -> DatasetManifest:
        m = scan_dataset(self.cfg.dataset_root, self.cfg.split_dirs)
        m.save(self.out / "manifest.json")
        log.info("dataset: %d images, %d excluded", len(m), len(m.excluded))
        return m

    @cached_property
    def split(self) -> SplitAssignment:
        if self.cfg.split_mode == "declared":
            s = declared_split(self.manifest)
        else:
            s = stratified_split(self.manifest, self.cfg.ratio, derive_seed(self.cfg.seed, "split"))
        (self.out / "split.json").write_text(json.dumps(s.to_json()))
        return s

    def images(self, indices) -> PreprocessedImages:
        return PreprocessedImages(LazyImages(self.manifest, indices))

    @cached_property
    def augmented(self) -> LabeledImageSet | None:
        aug = self.cfg.augmentation
        if aug.target_count == 0 or aug.augment_for == "none":
            return None
        idx = self.split.train_indices
        train = LabeledImageSet(LazyImages(self.manifest, idx), self.manifest.labels[idx],
                                tuple(self.manifest.entries[int(i)].path for i in idx))
        out = generate_augmented_set(train, aug.target_count, aug.policy, derive_seed(self.cfg.seed, "augment"))
        if aug.materialize:
            save_augmented_set(out, self.out)
        return out

    def augmentation_digest(self) -> str:
        aug = self.cfg.augmentation
        payload = {"sources": self.manifest.order_digest(self.split.train_indices), "policy": aug.policy.to_json(),
                   "count": aug.target_count, "seed": derive_seed(self.cfg.seed, "augment")}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def backbone(self, name: str) -> Backbone:
        name = canonical_backbone(name)
        if name not in self._backbones:
            self._backbones[name] = load_backbone(
                name, self.cfg.weights, self.cfg.mobilenetv3_variant, self.cfg.backbone_preprocess,
                seed=derive_seed(self.cfg.seed, "weights", name))
        return self._backbones[name]

    def _cached(self, backbone: Backbone, order_digest: str, tag: str, make) -> tuple[FeatureMatrix, bool]:
        key = hashlib.sha256(f"{backbone.cache_tag()}|{tag}|{order_digest}".encode()).hexdigest()[:16]
        root = self.cfg.cache_root
        root.mkdir(parents=True, exist_ok=True)
        directory = root / f"{backbone.id.name}-{tag}-{key}"
        with FileLock(str(directory) + ".lock"):
            if directory.is_dir():
                try:
                    fm = load_feature_cache(directory)
                    self.cache_events.append({"cache": directory.name, "hit": True})
                    log.info("feature cache hit: %s", directory)
                    return fm, True
                except CacheError as exc:
                    log.warning("discarding unusable cache %s: %s", directory, exc)
            t0 = time.perf_counter()
            fm = make()
            fm.sample_order_digest = order_digest
            save_feature_cache(fm, directory)
            self.cache_events.append({"cache": directory.name, "hit": False,
                                      "seconds": round(time.perf_counter() - t0, 3)})
            log.info("extracted %d x %d features -> %s", len(fm), fm.feature_dim, directory)
            return fm, False

    def features(self, name: str) -> tuple[FeatureMatrix, bool]:
        """Features for every manifest entry, in manifest order."""
        name = canonical_backbone(name)
        bb = self.backbone(name)
        m = self.manifest
        all_idx = np.arange(len(m))
        return self._cached(bb, m.order_digest(), "dataset", lambda: extract_features(
            bb, self.images(all_idx), m.labels, self.cfg.extract_batch_size,
            names=[e.path for e in m.entries]))

    def augmented_features(self, name: str) -> tuple[FeatureMatrix | None, bool]:
        aug = self.augmented
        if aug is None:
            return None, False
        bb = self.backbone(name)
        return self._cached(bb, self.augmentation_digest(), "augmented", lambda: extract_features(
            bb, aug.images, aug.labels, self.cfg.extract_batch_size, names=list(aug.paths)))

    # -------------------------------------------------------------- cells

    def _training_rows(self, fm: FeatureMatrix, aug_fm: FeatureMatrix | None, path: str):
        idx = self.split.train_indices
        X, y = fm.data[idx], fm.labels[idx]
        if aug_fm is not None and self.cfg.augmentation.applies_to(path):
            X = np.concatenate([X, aug_fm.data])
            y = np.concatenate([y, aug_fm.labels])
        return X, y

    def cell_dir(self, backbone: str, model: str) -> Path:
        d = self.out / "cells" / backbone / model
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _finish(self, cell: Cell, y_test: np.ndarray, proba: np.ndarray, model_manifest: dict) -> Cell:
        cell.proba = proba
        cell.evaluation = evaluate(y_test, proba)
        cell.n_test = len(y_test)
        d = self.cell_dir(cell.backbone, cell.model_name)
        np.save(d / "test_proba.npy", proba)
        model_manifest = model_manifest | {"metric_summary": {
            k: getattr(cell.evaluation.metrics, k) for k in ("accuracy", "precision_macro", "recall_macro", "f1_macro")}}
        (d / "model.json").write_text(json.dumps(model_manifest, indent=2, default=str))
        (d / "metrics.json").write_text(json.dumps(cell.to_json(), indent=1))
        return cell

    def softmax_cell(self, name: str, fm: FeatureMatrix, aug_fm: FeatureMatrix | None) -> Cell:
        cfg, split, m = self.cfg, self.split, self.manifest
        seed = derive_seed(cfg.seed, "softmax", name)
        schedule = replace(cfg.schedule, seed=seed)
        cell = Cell(name, SOFTMAX, "softmax", seed, deterministic=cfg.finetune == "head_only")
        bb = self.backbone(name)
        net = build_softmax_classifier(bb, seed=seed)
        val_idx = m.indices("val") if cfg.split_mode == "declared" else split.test_indices
        test_idx = split.test_indices
        if cfg.finetune == "head_only":
            X, y = self._training_rows(fm, aug_fm, "direct")
            net, history = train_softmax_head(net, X, y, fm.data[val_idx], fm.labels[val_idx], schedule)
            proba_of = lambda idx: net.head_proba(fm.data[idx])  # noqa: E731
        else:
            parts = [self.images(split.train_indices)]
            labels = [m.labels[split.train_indices]]
            if self.augmented is not None and cfg.augmentation.applies_to("direct"):
                parts.append(self.augmented.images)
                labels.append(self.augmented.labels)
            train = LabeledImageSet(ConcatImages(*parts), np.concatenate(labels))
            val = LabeledImageSet(self.images(val_idx), m.labels[val_idx])
            net, history = train_softmax_classifier(net, train, val, schedule, "full", cfg.extract_batch_size)
            proba_of = lambda idx: net.predict_proba(self.images(idx), cfg.extract_batch_size)  # noqa: E731
        cell.n_train = int(len(split.train_indices) + (len(aug_fm) if aug_fm is not None
                                                        and cfg.augmentation.applies_to("direct") else 0))
        # also score the dataset's own test and val folders, labelled as such
        for split_name in ("test", "val"):
            idx = m.indices(split_name)
            if len(idx):
                ev = evaluate(m.labels[idx], proba_of(idx))
                cell.extra_evaluations[f"declared_{split_name}"] = {
                    "n": len(idx),
                    "overlaps_training": bool(np.intersect1d(idx, split.train_indices).size),
                    "metrics": ev.metrics.to_json(),
                    "confusion": ev.confusion.to_json(),
                }
        d = self.cell_dir(name, SOFTMAX)
        torch.save(net.head.state_dict() if cfg.finetune == "head_only" else net.state_dict(), d / "weights.pt")
        manifest = {"backbone": name, "mode": f"softmax/{cfg.finetune}", "schedule": schedule.to_json(),
                    "seed": seed, "weights": cfg.weights, "pretrained_init": cfg.weights == "imagenet",
                    "backbone_sha256": bb.checksum, "history": history}
        return self._finish(cell, m.labels[test_idx], proba_of(test_idx), manifest)

    def classical_cell(self, name: str, spec: ClassifierKind, fm: FeatureMatrix, aug_fm: FeatureMatrix | None) -> Cell:
        seed = derive_seed(self.cfg.seed, "ml", name, spec.kind)
        cell = Cell(name, spec.kind, "ml", seed)
        X, y = self._training_rows(fm, aug_fm, "features")
        cell.n_train = len(y)
        model = fit_classical(replace(spec, seed=seed), X, y)
        return self._save_fitted(cell, model, fm)

    def fnn_cell(self, name: str, spec: FnnKind, fm: FeatureMatrix, aug_fm: FeatureMatrix | None) -> Cell:
        seed = derive_seed(self.cfg.seed, "fnn", name, spec.kind)
        cell = Cell(name, FNN_NAMES[spec.kind], "fnn", seed)
        X, y = self._training_rows(fm, aug_fm, "features")
        cell.n_train = len(y)
        model = fit_fnn(replace(spec, seed=seed), X, y)
        return self._save_fitted(cell, model, fm)

    def _save_fitted(self, cell: Cell, model: FittedClassifier, fm: FeatureMatrix) -> Cell:
        idx = self.split.test_indices
        model.save(self.cell_dir(cell.backbone, cell.model_name))
        return self._finish(cell, fm.labels[idx], model.predict_proba(fm.data[idx]),
                            model.manifest() | {"backbone": cell.backbone})


def _guarded(cfg: ExperimentConfig, planned: tuple[str, str, str], seed: int, fn) -> Cell:
    t0 = time.perf_counter()
    try:
        cell = fn()
    except Exception as exc:
        if cfg.fail_fast:
            raise
        log.exception("cell %s/%s failed", planned[0], planned[1])
        cell = Cell(planned[0], planned[1], planned[2], seed, error=f"{type(exc).__name__}: {exc}")
    cell.wall_time = round(time.perf_counter() - t0, 3)
    log.info("cell %-16s %-20s %s", cell.backbone, cell.model_name,
             f"acc={cell.evaluation.metrics.accuracy:.3f}" if cell.ok else f"ERROR {cell.error}")
    return cell


def _versions() -> dict:
    import sklearn

    out = {"jellybench": __version__, "python": platform.python_version(), "numpy": np.__version__,
           "torch": torch.__version__, "scikit-learn": sklearn.__version__}
    for mod in ("torchvision", "timm", "xgboost", "lightgbm"):
        try:
            out[mod] = __import__(mod).__version__
        except ImportError:
            pass
    return out


def run_experiment(cfg: ExperimentConfig, workspace: Workspace | None = None) -> ResultGrid:
    ws = workspace or Workspace(cfg)
    t_start = time.perf_counter()
    grid = ResultGrid()
    _ = ws.split  # scan + split up front so dataset errors surface before any cell
    weight_sums: dict[str, str] = {}

    for name in cfg.backbones:
        planned = [p for p in plan_cells(cfg) if p[0] == name]
        try:
            fm, _hit = ws.features(name)
            aug_fm = None
            if cfg.augmentation.target_count and cfg.augmentation.augment_for != "none":
                aug_fm, _ = ws.augmented_features(name)
            weight_sums[name] = ws.backbone(name).checksum
        except Exception as exc:
            if cfg.fail_fast:
                raise
            log.exception("backbone %s unavailable", name)
            for p in planned:
                grid.add(Cell(p[0], p[1], p[2], 0, error=f"{type(exc).__name__}: {exc}"))
            continue

        grid.add(_guarded(cfg, planned[0], derive_seed(cfg.seed, "softmax", name),
                          lambda: ws.softmax_cell(name, fm, aug_fm)))
        for spec in cfg.classifiers:
            grid.add(_guarded(cfg, (name, spec.kind, "ml"), derive_seed(cfg.seed, "ml", name, spec.kind),
                              lambda spec=spec: ws.classical_cell(name, spec, fm, aug_fm)))
        for spec in cfg.fnns:
            grid.add(_guarded(cfg, (name, FNN_NAMES[spec.kind], "fnn"), derive_seed(cfg.seed, "fnn", name, spec.kind),
                              lambda spec=spec: ws.fnn_cell(name, spec, fm, aug_fm)))
        ws._backbones.pop(name, None)  # free backbone memory before the next one

    grid.save(ws.out / "grid.json")
    write_run_manifest(ws, grid, weight_sums, time.perf_counter() - t_start)
    return grid


def write_run_manifest(ws: Workspace, grid: ResultGrid, weight_sums: dict, seconds: float) -> Path:
    cfg = ws.cfg
    manifest = {
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config_sha256": cfg.digest(),
        "config": cfg.to_json(),
        "versions": _versions(),
        "torch_threads": torch.get_num_threads(),
        "learning_rate": cfg.schedule.learning_rate,
        "pretrained_init": cfg.weights == "imagenet",
        "weights_sha256": weight_sums,
        "dataset": {"root": ws.manifest.root, "n": len(ws.manifest), "excluded": list(ws.manifest.excluded),
                    "order_sha256": ws.manifest.order_digest()},
        "split": {"mode": ws.split.mode, "seed": ws.split.seed, "ratio": ws.split.ratio,
                  "n_train": len(ws.split.train_indices), "n_test": len(ws.split.test_indices)},
        "cache_events": ws.cache_events,
        "n_cells": len(grid),
        "cells": [{"backbone": c.backbone, "model": c.model_name, "methodology": c.methodology,
                   "seed": c.seed, "wall_time": c.wall_time, "deterministic": c.deterministic,
                   "error": c.error} for c in grid],
        "total_wall_time": round(seconds, 3),
    }
    path = ws.out / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str))
    return path
