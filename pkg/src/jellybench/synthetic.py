"""Synthetic stand-in for the jellyfish dataset, laid out like the Kaggle archive.

Each species gets its own hue and blob shape on a dark noisy background,
which is enough signal for random-weight backbones to separate the classes.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .dataset_io import SPECIES

KAGGLE_DIRS = {
    "Barrel": "barrel_jellyfish",
    "Blue": "blue_jellyfish",
    "Compass": "compass_jellyfish",
    "LionsMane": "lions_mane_jellyfish",
    "MauveStinger": "mauve_stinger_jellyfish",
    "Moon": "Moon_jellyfish",
}
SPLIT_DIRS = {"train": "Train", "test": "test", "val": "valid"}

_COLOURS = np.array([
    [230, 120, 40], [40, 90, 240], [240, 220, 60], [200, 40, 40], [190, 60, 220], [235, 235, 235],
], dtype=np.float64)


def synthetic_image(label: int, rng: np.random.Generator, size: int = 64) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    cy, cx = rng.uniform(0.35, 0.65, size=2)
    r = rng.uniform(0.18, 0.3)
    angle = np.arctan2(yy - cy, xx - cx)
    dist = np.hypot(yy - cy, xx - cx)
    lobes = [0, 3, 4, 6, 8, 12][label]
    edge = r * (1.0 + 0.25 * np.cos(lobes * angle)) if lobes else r
    mask = (dist < edge).astype(np.float64)
    if label % 2 == 0:  # rings for every other species
        mask *= 0.55 + 0.45 * np.cos(dist * 40.0) ** 2
    colour = _COLOURS[label] * rng.uniform(0.8, 1.0)
    background = np.array([5, 25, 60]) + rng.normal(0, 10, size=(size, size, 3))
    img = background * (1 - mask[..., None]) + colour * mask[..., None]
    img += rng.normal(0, 8, size=img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def make_synthetic_dataset(root: str | Path, per_split: dict[str, int] | None = None, size: int = 64,
                           seed: int = 0, n_classes: int = len(SPECIES), corrupt: int = 0,
                           wrapper: str = "Train_Test_Valid") -> Path:
    """Write ``root/<wrapper>/<split>/<class>/<n>.jpg`` and return ``root``.

    ``corrupt`` adds that many undecodable files to the first class's train dir.
    """
    root = Path(root)
    base = root / wrapper if wrapper else root
    per_split = per_split or {"train": 4, "test": 1, "val": 1}
    rng = np.random.default_rng(seed)
    for split, count in per_split.items():
        for label in range(n_classes):
            d = base / SPLIT_DIRS[split] / KAGGLE_DIRS[SPECIES[label]]
            d.mkdir(parents=True, exist_ok=True)
            for i in range(count):
                Image.fromarray(synthetic_image(label, rng, size)).save(d / f"{i:03d}.jpg", quality=95)
    for i in range(corrupt):
        bad = base / SPLIT_DIRS["train"] / KAGGLE_DIRS[SPECIES[0]] / f"corrupt_{i}.jpg"
        bad.write_bytes(b"\xff\xd8\xff\xe0 not really a jpeg")
    return root
