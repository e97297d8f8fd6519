"""Preprocessing (resize + rescale) and seeded random augmentation.

Tensors are float32 arrays of shape (H, W, 3) with values in [0, 1].
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .dataset_io import SPECIES, LabeledImageSet

IMAGE_SIZE = 224
FILL_MODES = ("reflect", "nearest", "constant")


class ImageError(ValueError):
    pass


def check_tensor(t: np.ndarray, size: int = IMAGE_SIZE) -> None:
    if t.shape != (size, size, 3):
        raise ImageError(f"expected shape ({size}, {size}, 3), got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ImageError("tensor has non-finite values")
    if t.min() < 0.0 or t.max() > 1.0:
        raise ImageError(f"tensor values outside [0, 1]: [{t.min()}, {t.max()}]")


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres, edge-clamped (same convention as tf.image.resize bilinear)
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) float array, no antialiasing."""
    y0, y1, wy = _axis_weights(img.shape[0], height)
    x0, x1, wx = _axis_weights(img.shape[1], width)
    rows = img[y0] * (1.0 - wy)[:, None, None] + img[y1] * wy[:, None, None]
    return rows[:, x0] * (1.0 - wx)[None, :, None] + rows[:, x1] * wx[None, :, None]


def preprocess(raw: np.ndarray, size: int = IMAGE_SIZE) -> np.ndarray:
    """Resize to ``size`` x ``size`` RGB and rescale 0..255 to 0..1.

    Grayscale input is replicated to three channels and alpha is dropped.
    """
    raw = np.asarray(raw)
    if raw.ndim == 2:
        raw = raw[:, :, None]
    if raw.ndim != 3 or not 1 <= raw.shape[2] <= 4:
        raise ImageError(f"unsupported image shape {raw.shape}")
    if raw.shape[0] == 0 or raw.shape[1] == 0:
        raise ImageError("zero-area image")
    if raw.shape[2] in (1, 2):
        raw = np.repeat(raw[:, :, :1], 3, axis=2)
    else:
        raw = raw[:, :, :3]
    out = resize_bilinear(raw.astype(np.float64), size, size) / 255.0
    return np.clip(out, 0.0, 1.0).astype(np.float32)


@dataclass(frozen=True)
class AugmentationPolicy:
    flip_horizontal: float = 0.5
    rotation_fraction: float = 0.1
    zoom_range: float = 0.2
    width_factor: float = 0.1
    height_factor: float = 0.1
    fill_mode: str = "reflect"

    def __post_init__(self) -> None:
        for name in ("flip_horizontal", "rotation_fraction", "zoom_range", "width_factor", "height_factor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.fill_mode not in FILL_MODES:
            raise ValueError(f"fill_mode must be one of {FILL_MODES}, got {self.fill_mode!r}")

    @property
    def enabled(self) -> bool:
        return any(
            (self.flip_horizontal, self.rotation_fraction, self.zoom_range, self.width_factor, self.height_factor)
        )

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    def to_json(self) -> dict:
        return asdict(self)


def apply_augmentation(t: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    """Flip, then rotate, zoom, stretch width and stretch height, all about the image centre.

    Only enabled transforms consume random draws. The geometric steps are
    composed into a single affine map so the image is resampled once.
    """
    out = t
    if policy.flip_horizontal > 0 and rng.random() < policy.flip_horizontal:
        out = out[:, ::-1, :]

    # forward map in (row, col) coordinates, built in application order
    fwd = np.eye(2)
    if policy.rotation_fraction > 0:
        theta = rng.uniform(-policy.rotation_fraction, policy.rotation_fraction) * 2.0 * math.pi
        c, s = math.cos(theta), math.sin(theta)
        fwd = np.array([[c, -s], [s, c]]) @ fwd
    if policy.zoom_range > 0:
        z = 1.0 + rng.uniform(-policy.zoom_range, policy.zoom_range)
        fwd = np.diag([z, z]) @ fwd
    if policy.width_factor > 0:
        fwd = np.diag([1.0, 1.0 + rng.uniform(-policy.width_factor, policy.width_factor)]) @ fwd
    if policy.height_factor > 0:
        fwd = np.diag([1.0 + rng.uniform(-policy.height_factor, policy.height_factor), 1.0]) @ fwd

    if np.array_equal(fwd, np.eye(2)):
        return np.ascontiguousarray(out)

    inv = np.linalg.inv(fwd)
    h, w = out.shape[:2]
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    matrix = np.eye(3)
    matrix[:2, :2] = inv
    offset = np.zeros(3)
    offset[:2] = centre - inv @ centre
    mode = "grid-constant" if policy.fill_mode == "constant" else policy.fill_mode
    warped = ndimage.affine_transform(
        np.asarray(out, dtype=np.float64), matrix, offset=offset, order=1, mode=mode, cval=0.0
    )
    return np.clip(warped, 0.0, 1.0).astype(np.float32)


class PreprocessedImages(Sequence):
    """Lazy view applying :func:`preprocess` on access."""

    def __init__(self, raw: Sequence[np.ndarray], size: int = IMAGE_SIZE):
        self._raw = raw
        self._size = size

    def __len__(self) -> int:
        return len(self._raw)

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return preprocess(self._raw[i], self._size)

    def __iter__(self) -> Iterator[np.ndarray]:
        return (self[i] for i in range(len(self)))


class AugmentedImages(Sequence):
    """Sample ``i`` is source ``sources[i]`` preprocessed and augmented with rng ``(seed, i)``.

    Nothing is stored besides the source view, so 10k samples cost no memory
    and any single sample can be regenerated in isolation.
    """

    def __init__(self, source: Sequence[np.ndarray], sources: np.ndarray, policy: AugmentationPolicy,
                 seed: int, size: int = IMAGE_SIZE):
        self._source = source
        self.sources = sources
        self.policy = policy
        self.seed = int(seed)
        self._size = size

    def __len__(self) -> int:
        return len(self.sources)

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        base = self._source[int(self.sources[i])]
        if base.dtype != np.float32 or base.shape != (self._size, self._size, 3):
            base = preprocess(base, self._size)
        return apply_augmentation(base, self.policy, np.random.default_rng([self.seed, i]))

    def __iter__(self) -> Iterator[np.ndarray]:
        return (self[i] for i in range(len(self)))


def round_robin_sources(labels: np.ndarray, target_count: int) -> np.ndarray:
    """Pick source indices so that classes take turns and each class cycles its own members."""
    classes = np.unique(labels)
    members = {c: np.flatnonzero(labels == c) for c in classes}
    taken = {c: 0 for c in classes}
    out = np.empty(target_count, dtype=np.int64)
    for i in range(target_count):
        c = classes[i % len(classes)]
        out[i] = members[c][taken[c] % len(members[c])]
        taken[c] += 1
    return out


def generate_augmented_set(
    train: LabeledImageSet, target_count: int, policy: AugmentationPolicy, seed: int,
    size: int = IMAGE_SIZE,
) -> LabeledImageSet:
    """Exactly ``target_count`` new samples, class-balanced within one sample.

    Returned images are lazy; index them or iterate to materialise.
    """
    if target_count < 0:
        raise ValueError("target_count must be >= 0")
    if target_count > 0 and len(train) == 0:
        raise ValueError("cannot augment an empty training set")
    if target_count == 0:
        return LabeledImageSet(images=[], labels=np.empty(0, dtype=np.int64))
    sources = round_robin_sources(train.labels, target_count)
    images = AugmentedImages(train.images, sources, policy, seed, size)
    paths = tuple(f"aug/{i:06d}<-{train.paths[s]}" for i, s in enumerate(sources)) if train.paths else ()
    return LabeledImageSet(images=images, labels=train.labels[sources], paths=paths)


def save_augmented_set(aug: LabeledImageSet, out_dir: str | Path) -> Path:
    """Write ``aug/<class>/<seq>.png`` plus ``index.json``. PNG storage quantises to 8 bits."""
    out_dir = Path(out_dir) / "aug"
    index = []
    for i, (img, label) in enumerate(zip(aug.images, aug.labels)):
        rel = Path(SPECIES[int(label)]) / f"{i:06d}.png"
        (out_dir / rel.parent).mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.round(np.asarray(img) * 255.0).astype(np.uint8)).save(out_dir / rel)
        entry = {"file": rel.as_posix(), "label": int(label)}
        if isinstance(aug.images, AugmentedImages):
            entry["source"] = int(aug.images.sources[i])
        index.append(entry)
    meta: dict = {"count": len(index), "samples": index}
    if isinstance(aug.images, AugmentedImages):
        meta["seed"] = aug.images.seed
        meta["policy"] = aug.images.policy.to_json()
    (out_dir / "index.json").write_text(json.dumps(meta, indent=2))
    return out_dir
