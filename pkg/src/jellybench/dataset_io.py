"""Dataset discovery, validation and stratified splitting.

Expected layout is ``root/<split>/<class>/<image>``. Split directory names are
matched case-insensitively against ``split_dirs``; class directory names are
normalised (lowercase, punctuation and a trailing "jellyfish" stripped) before
being matched to one of the six species.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

SPECIES: tuple[str, ...] = ("Barrel", "Blue", "Compass", "LionsMane", "MauveStinger", "Moon")
NUM_CLASSES = len(SPECIES)
SPLITS: tuple[str, ...] = ("train", "test", "val")
IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp", ".tif", ".tiff"}

DEFAULT_SPLIT_DIRS: dict[str, tuple[str, ...]] = {
    "train": ("train", "training"),
    "test": ("test", "testing"),
    "val": ("valid", "val", "validation"),
}

_ALIASES = {
    "barrel": "Barrel",
    "blue": "Blue",
    "compass": "Compass",
    "lionsmane": "LionsMane",
    "lionmane": "LionsMane",
    "mauvestinger": "MauveStinger",
    "moon": "Moon",
}


class DatasetError(ValueError):
    """Raised for layout or content problems that make a dataset unusable."""


@dataclass(frozen=True)
class SpeciesLabel:
    id: int
    name: str

    @classmethod
    def from_id(cls, label_id: int) -> "SpeciesLabel":
        if not 0 <= label_id < NUM_CLASSES:
            raise DatasetError(f"label id {label_id} out of range 0..{NUM_CLASSES - 1}")
        return cls(label_id, SPECIES[label_id])

    @classmethod
    def from_name(cls, name: str) -> "SpeciesLabel":
        canonical = canonical_species(name)
        if canonical is None:
            raise DatasetError(f"unknown class directory {name!r}")
        return cls(SPECIES.index(canonical), canonical)


def canonical_species(name: str) -> str | None:
    key = re.sub(r"[^a-z]", "", name.lower())
    if key.endswith("jellyfish"):
        key = key[: -len("jellyfish")]
    return _ALIASES.get(key)


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the manifest root, posix separators
    label: int
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    entries: tuple[ManifestEntry, ...]
    excluded: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise DatasetError("duplicate paths in manifest")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    @property
    def counts(self) -> dict[tuple[str, str], int]:
        c = Counter((SPECIES[e.label], e.split) for e in self.entries)
        return dict(sorted(c.items()))

    def indices(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}")
        return np.array([i for i, e in enumerate(self.entries) if e.split == split], dtype=np.int64)

    def abspath(self, i: int) -> Path:
        return Path(self.root) / self.entries[i].path

    def order_digest(self, indices: Sequence[int] | None = None) -> str:
        """sha256 over the relative paths (in order) of the selected entries."""
        idx = range(len(self.entries)) if indices is None else indices
        h = hashlib.sha256()
        for i in idx:
            h.update(self.entries[int(i)].path.encode())
            h.update(b"\0")
        return h.hexdigest()

    def to_json(self) -> dict:
        return {
            "root": self.root,
            "label_names": list(SPECIES),
            "entries": [{"path": e.path, "label": e.label, "split": e.split} for e in self.entries],
            "counts": [
                {"label": label, "split": split, "count": n} for (label, split), n in self.counts.items()
            ],
            "excluded": list(self.excluded),
        }

    @classmethod
    def from_json(cls, data: dict) -> "DatasetManifest":
        entries = tuple(ManifestEntry(e["path"], int(e["label"]), e["split"]) for e in data["entries"])
        return cls(root=data["root"], entries=entries, excluded=tuple(data.get("excluded", ())))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SplitAssignment:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    ratio: float
    mode: str = "restratify"

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "ratio": self.ratio,
            "train_indices": self.train_indices.tolist(),
            "test_indices": self.test_indices.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SplitAssignment":
        return cls(
            train_indices=np.asarray(data["train_indices"], dtype=np.int64),
            test_indices=np.asarray(data["test_indices"], dtype=np.int64),
            seed=int(data["seed"]),
            ratio=float(data["ratio"]),
            mode=data.get("mode", "restratify"),
        )


@dataclass
class LabeledImageSet:
    """Images (raw arrays or preprocessed tensors) with aligned integer labels.

    ``images`` may be any sequence, including the lazy ones used to keep large
    augmented sets out of memory.
    """

    images: Sequence[np.ndarray]
    labels: np.ndarray
    paths: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)


def decode_image(path: str | Path) -> np.ndarray:
    """Decode to a uint8 array of shape (H, W) or (H, W, C)."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "LA", "RGB", "RGBA"):
                im = im.convert("RGBA" if "A" in im.getbands() else "RGB")
            return np.asarray(im, dtype=np.uint8).copy()
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc


def _is_decodable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except Exception:  # PIL raises a grab-bag of exception types on corrupt input
        return False


def _match_split(dirname: str, split_dirs: dict[str, Sequence[str]]) -> str | None:
    low = dirname.lower()
    for split, names in split_dirs.items():
        if low in {n.lower() for n in names}:
            return split
    return None


def _find_split_root(root: Path, split_dirs: dict[str, Sequence[str]]) -> Path:
    # Kaggle archives wrap the split dirs in one extra folder (e.g. Train_Test_Valid)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if any(_match_split(p.name, split_dirs) for p in subdirs):
        return root
    if len(subdirs) == 1:
        inner = sorted(p for p in subdirs[0].iterdir() if p.is_dir())
        if any(_match_split(p.name, split_dirs) for p in inner):
            return subdirs[0]
    return root


def scan_dataset(
    root: str | Path,
    split_dirs: dict[str, Sequence[str]] | None = None,
    verify_images: bool = True,
) -> DatasetManifest:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    split_dirs = dict(split_dirs or DEFAULT_SPLIT_DIRS)
    base = _find_split_root(root, split_dirs)

    entries: list[ManifestEntry] = []
    excluded: list[str] = []
    n_class_dirs = 0
    for split_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        split = _match_split(split_dir.name, split_dirs)
        if split is None:
            log.warning("ignoring directory %s: not a recognised split name", split_dir)
            continue
        for class_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            n_class_dirs += 1
            canonical = canonical_species(class_dir.name)
            if canonical is None:
                raise DatasetError(f"unknown class directory {class_dir}")
            label = SPECIES.index(canonical)
            for f in sorted(class_dir.rglob("*")):
                if not f.is_file() or f.suffix.lower() not in IMAGE_SUFFIXES:
                    continue
                rel = f.relative_to(base).as_posix()
                if verify_images and not _is_decodable(f):
                    log.warning("excluding unreadable image %s", f)
                    excluded.append(rel)
                    continue
                entries.append(ManifestEntry(rel, label, split))
    if n_class_dirs == 0:
        raise DatasetError(f"no class directories found under {root}")
    entries.sort(key=lambda e: e.path)
    return DatasetManifest(root=str(base.resolve()), entries=tuple(entries), excluded=tuple(excluded))


def _train_count(n: int, ratio: float) -> int:
    # round first: 0.7 * 10 is 7.000000000000001 in binary floating point
    return min(n, math.ceil(round(ratio * n, 9)))


def stratified_split(manifest: DatasetManifest, ratio: float, seed: int) -> SplitAssignment:
    """Per-class seeded shuffle; the first ceil(ratio * n_c) of each class go to train."""
    if not 0.0 < ratio <= 1.0:
        raise DatasetError(f"ratio must lie in (0, 1], got {ratio}")
    labels = manifest.labels
    counts = Counter(labels.tolist())
    small = sorted(SPECIES[c] for c, n in counts.items() if n < 2)
    if small:
        raise DatasetError(f"classes with fewer than 2 samples: {', '.join(small)}")
    train, test = [], []
    for c in sorted(counts):
        members = np.flatnonzero(labels == c)
        order = np.random.default_rng([seed, c]).permutation(members)
        k = _train_count(len(members), ratio)
        train.append(order[:k])
        test.append(order[k:])
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)  # noqa: E731
    return SplitAssignment(cat(train), cat(test), seed=int(seed), ratio=float(ratio))


def declared_split(manifest: DatasetManifest) -> SplitAssignment:
    """Use the on-disk train/test directories as the split; val stays out of both."""
    return SplitAssignment(
        manifest.indices("train"), manifest.indices("test"), seed=0, ratio=1.0, mode="declared"
    )


class LazyImages(Sequence):
    """Decode manifest images on access, so a full dataset never sits in memory."""

    def __init__(self, manifest: DatasetManifest, indices: Sequence[int]):
        self._manifest = manifest
        self._indices = np.asarray(indices, dtype=np.int64)

    def __len__(self) -> int:
        return len(self._indices)

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return decode_image(self._manifest.abspath(int(self._indices[i])))

    def __iter__(self) -> Iterator[np.ndarray]:
        return (self[i] for i in range(len(self)))


def _resolve_selector(manifest: DatasetManifest, selector) -> np.ndarray:
    if isinstance(selector, str):
        return manifest.indices(selector)
    if isinstance(selector, tuple) and len(selector) == 2 and isinstance(selector[0], SplitAssignment):
        assignment, side = selector
        if side not in ("train", "test"):
            raise DatasetError(f"assignment side must be 'train' or 'test', got {side!r}")
        idx = assignment.train_indices if side == "train" else assignment.test_indices
        if len(idx) and idx.max() >= len(manifest):
            raise DatasetError("split assignment does not match this manifest")
        return idx
    return np.asarray(selector, dtype=np.int64)


def load_split(manifest: DatasetManifest, selector, lazy: bool = False) -> LabeledImageSet:
    """Load a split by name ('train'/'test'/'val'), by ``(assignment, side)`` or by index array.

    Raw images keep their original size and channel count.
    """
    idx = _resolve_selector(manifest, selector)
    images: Sequence[np.ndarray] = LazyImages(manifest, idx)
    if not lazy:
        images = list(images)
    return LabeledImageSet(
        images=images,
        labels=manifest.labels[idx] if len(idx) else np.empty(0, dtype=np.int64),
        paths=tuple(manifest.entries[int(i)].path for i in idx),
    )
