"""On-disk feature cache: ``meta.json`` + ``features.f32le`` + ``labels.u8``."""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dataset_io import SPECIES

FEATURES_FILE = "features.f32le"
LABELS_FILE = "labels.u8"
META_FILE = "meta.json"


class CacheError(RuntimeError):
    pass


@dataclass
class FeatureMatrix:
    data: np.ndarray
    labels: np.ndarray
    backbone: str
    feature_dim: int
    sample_order_digest: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32).reshape(-1, self.feature_dim)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.shape[0] != len(self.labels):
            raise ValueError(f"{self.data.shape[0]} rows but {len(self.labels)} labels")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature matrix has non-finite entries")

    def __len__(self) -> int:
        return len(self.labels)

    def rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureMatrix(self.data[idx], self.labels[idx], self.backbone, self.feature_dim,
                             self.sample_order_digest, dict(self.extra, subset=True))


def _sha256(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def save_feature_cache(fm: FeatureMatrix, directory: str | Path) -> Path:
    """Write the three cache files. The directory appears atomically once complete."""
    directory = Path(directory)
    payload = np.ascontiguousarray(fm.data, dtype="<f4").tobytes()
    labels = np.asarray(fm.labels, dtype=np.uint8).tobytes()
    meta = {
        "backbone": fm.backbone,
        "feature_dim": fm.feature_dim,
        "n": len(fm),
        "label_names": list(SPECIES),
        "sample_order_digest": fm.sample_order_digest,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "payload_sha256": _sha256(payload),
        "labels_sha256": _sha256(labels),
        **{k: v for k, v in fm.extra.items() if k not in ("subset",)},
    }
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
    try:
        (tmp / FEATURES_FILE).write_bytes(payload)
        (tmp / LABELS_FILE).write_bytes(labels)
        (tmp / META_FILE).write_text(json.dumps(meta, indent=2))
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def load_feature_cache(directory: str | Path) -> FeatureMatrix:
    directory = Path(directory)
    for name in (META_FILE, FEATURES_FILE, LABELS_FILE):
        if not (directory / name).is_file():
            raise CacheError(f"cache file {directory / name} missing")
    meta = json.loads((directory / META_FILE).read_text())
    n, d = int(meta["n"]), int(meta["feature_dim"])
    payload = (directory / FEATURES_FILE).read_bytes()
    labels = (directory / LABELS_FILE).read_bytes()
    if len(payload) != n * d * 4:
        raise CacheError(f"payload size mismatch: expected {n * d * 4} bytes, found {len(payload)}")
    if len(labels) != n:
        raise CacheError(f"labels size mismatch: expected {n} bytes, found {len(labels)}")
    if _sha256(payload) != meta["payload_sha256"] or _sha256(labels) != meta["labels_sha256"]:
        raise CacheError(f"digest mismatch in {directory}")
    extra = {k: v for k, v in meta.items()
             if k not in ("backbone", "feature_dim", "n", "label_names", "sample_order_digest",
                          "payload_sha256", "labels_sha256")}
    return FeatureMatrix(
        data=np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float32),
        labels=np.frombuffer(labels, dtype=np.uint8).astype(np.int64),
        backbone=meta["backbone"], feature_dim=d,
        sample_order_digest=meta["sample_order_digest"], extra=extra,
    )
