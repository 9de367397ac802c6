"""Shared fixture builders: hand-written dataset trees and in-memory tiles."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from agriseg.dataset import FOREGROUND_DIRS, NUM_CLASSES, TileSample, recompute_background


def write_png(path: Path, array: np.ndarray, mode: str = "L") -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array, mode).save(path)


def write_tile(
    root: Path,
    tile_id: str,
    size: int = 8,
    *,
    rgb: np.ndarray | None = None,
    nir: np.ndarray | None = None,
    boundary: np.ndarray | None = None,
    mask: np.ndarray | None = None,
    labels: dict[int, np.ndarray] | None = None,
) -> None:
    """Write one complete tile; omitted rasters default to benign values.

    ``labels`` maps foreground class index (1..8) to a bool raster.
    """

    def full(value: int) -> np.ndarray:
        return np.full((size, size), value, dtype=np.uint8)

    if rgb is None:
        rgb = np.dstack([full(60), full(120), full(180)])
    if nir is None:
        nir = full(200)
    if boundary is None:
        boundary = full(255)
    if mask is None:
        mask = full(255)
    labels = labels or {}

    write_png(root / "images" / "rgb" / f"{tile_id}.png", rgb, "RGB")
    write_png(root / "images" / "nir" / f"{tile_id}.png", nir)
    write_png(root / "boundaries" / f"{tile_id}.png", boundary)
    write_png(root / "masks" / f"{tile_id}.png", mask)
    for c, name in enumerate(FOREGROUND_DIRS, start=1):
        raster = labels.get(c)
        if raster is None:
            array = np.zeros((size, size), dtype=np.uint8)
        else:
            array = raster.astype(bool).astype(np.uint8) * 255
        write_png(root / "labels" / name / f"{tile_id}.png", array)


def make_sample(
    tile_id: str = "t",
    size: int | tuple[int, int] = 8,
    *,
    foreground: dict[int, np.ndarray] | None = None,
    validity: np.ndarray | None = None,
    image: np.ndarray | None = None,
) -> TileSample:
    """In-memory TileSample with background derived from the given labels."""
    if validity is None:
        shape = (size, size) if isinstance(size, int) else tuple(size)
        validity = np.ones(shape, dtype=bool)
    shape = validity.shape
    labels = np.zeros((NUM_CLASSES,) + shape, dtype=bool)
    for c, raster in (foreground or {}).items():
        labels[c] = raster & validity
    recompute_background(labels, validity)
    if image is None:
        image = np.full(shape + (4,), 127, dtype=np.uint8)
    return TileSample(id=tile_id, image=image, labels=labels, validity=validity)


def random_scores(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Random normalized (H, W, 9) float32 score array."""
    raw = rng.random((height, width, NUM_CLASSES)).astype(np.float64) + 1e-3
    out = (raw / raw.sum(axis=2, keepdims=True)).astype(np.float32)
    # float32 rounding keeps sums within 9 ulp of 1, well inside tolerance
    return out


@pytest.fixture
def tree(tmp_path: Path) -> Path:
    return tmp_path / "data"
