"""Experiment configuration, loaded from a single JSON document.

Every key is optional except ``dataset_root``; see ``configs/repro.json``
for the full reproduction grid.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .backbones import BACKBONE_NAMES, FINETUNE_MODES, PREPROCESS_MODES, WEIGHT_MODES, TrainSchedule, canonical_backbone
from .classical import CLASSICAL_KINDS, ClassifierKind
from .dataset_io import DEFAULT_SPLIT_DIRS
from .fnn import FNN_KINDS, FnnKind
from .image_pipeline import AugmentationPolicy

SPLIT_MODES = ("declared", "restratify")
AUGMENT_FOR = ("none", "direct", "features", "both")
CACHE_ENV = "SPECIES_BENCH_CACHE"


class ConfigError(ValueError):
    pass


def derive_seed(seed: int, *tags: str) -> int:
    """Per-component seed from the global seed and a component tag path.

    Tags are hashed, so the seed of one cell does not depend on which other
    cells are configured.
    """
    words = [int(seed)] + [int.from_bytes(hashlib.sha256(t.encode()).digest()[:4], "little") for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


@dataclass(frozen=True)
class AugmentationConfig:
    policy: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    target_count: int = 10_000
    augment_for: str = "both"
    materialize: bool = False

    def __post_init__(self) -> None:
        if self.augment_for not in AUGMENT_FOR:
            raise ConfigError(f"augment_for must be one of {AUGMENT_FOR}")
        if self.target_count < 0:
            raise ConfigError("target_count must be >= 0")

    def applies_to(self, path: str) -> bool:
        return self.target_count > 0 and self.augment_for in (path, "both")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_root: str
    output_dir: str = "runs/latest"
    split_mode: str = "restratify"
    ratio: float = 0.7
    seed: int = 42
    split_dirs: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_SPLIT_DIRS.items()})
    backbones: tuple[str, ...] = BACKBONE_NAMES
    weights: str = "imagenet"
    mobilenetv3_variant: str = "large"
    backbone_preprocess: str = "paper"
    finetune: str = "head_only"
    classifiers: tuple[ClassifierKind, ...] = tuple(ClassifierKind(k) for k in CLASSICAL_KINDS)
    fnns: tuple[FnnKind, ...] = tuple(FnnKind(k) for k in FNN_KINDS)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    extract_batch_size: int = 32
    fail_fast: bool = False
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split_mode must be one of {SPLIT_MODES}")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError("ratio must lie in (0, 1]")
        if self.weights not in WEIGHT_MODES:
            raise ConfigError(f"weights must be one of {WEIGHT_MODES}")
        if self.backbone_preprocess not in PREPROCESS_MODES:
            raise ConfigError(f"backbone_preprocess must be one of {PREPROCESS_MODES}")
        if self.finetune not in FINETUNE_MODES:
            raise ConfigError(f"finetune must be one of {FINETUNE_MODES}")
        if self.mobilenetv3_variant not in ("large", "small"):
            raise ConfigError("mobilenetv3_variant must be 'large' or 'small'")
        if not self.backbones:
            raise ConfigError("backbones must not be empty")
        if not self.classifiers and not self.fnns:
            raise ConfigError("configure at least one classifier or FNN")
        try:
            object.__setattr__(self, "backbones", tuple(canonical_backbone(b) for b in self.backbones))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        names = list(self.backbones)
        models = [c.kind for c in self.classifiers] + [f.kind for f in self.fnns]
        for label, seq in (("backbone", names), ("model", models)):
            dupes = sorted({x for x in seq if seq.count(x) > 1})
            if dupes:
                raise ConfigError(f"duplicate {label} entries: {dupes}")

    @property
    def cache_root(self) -> Path:
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        return Path(self.cache_dir) if self.cache_dir else Path(self.output_dir) / "cache"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "dataset_root" not in data:
            raise ConfigError("config needs a dataset_root")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "backbones" in data:
                data["backbones"] = tuple(data["backbones"])
            if "classifiers" in data:
                data["classifiers"] = tuple(
                    ClassifierKind(c) if isinstance(c, str) else ClassifierKind(**c) for c in data["classifiers"]
                )
            if "fnns" in data:
                data["fnns"] = tuple(
                    FnnKind(f) if isinstance(f, str) else FnnKind(**f)
                    for f in data["fnns"]
                )
            if "augmentation" in data:
                aug = dict(data["augmentation"])
                policy = AugmentationPolicy(**aug.pop("policy", {}))
                data["augmentation"] = AugmentationConfig(policy=policy, **aug)
            if "schedule" in data:
                data["schedule"] = TrainSchedule(**data["schedule"])
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def to_json(self) -> dict:
        d = asdict(self)
        d["backbones"] = list(self.backbones)
        d["classifiers"] = [{"kind": c.kind, "hyperparams": c.hyperparams, "seed": c.seed,
                             "standardize": c.standardize} for c in self.classifiers]
        d["fnns"] = [f.to_json() for f in self.fnns]
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True, default=str).encode()).hexdigest()
