"""Score fusion across models and conversion to final label rasters.

Ensembling is a per-pixel weighted mean of probability maps. Weights are
normalized before use, so only their ratios matter; accumulation runs in
float64 in the given input order and is cast back to float32 once, keeping
the operation deterministic and free of reduction-order surprises.

The argmax step breaks ties toward the smallest class index, which keeps
label rasters reproducible across implementations, and writes background at
invalid pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .dataset import NUM_CLASSES
from .errors import (
    AllZeroWeights,
    CorruptRaster,
    DimensionMismatch,
    TileIdMismatch,
    UsageError,
)
from .predictor import ScoreMap


@dataclass(frozen=True)
class EnsembleConfig:
    """Score directories to fuse and their relative weights."""

    inputs: tuple[Path, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.inputs:
            raise UsageError("ensemble needs at least one input directory")
        if self.weights is not None and len(self.weights) != len(self.inputs):
            raise UsageError(
                f"{len(self.weights)} weights for {len(self.inputs)} inputs"
            )


def normalized_weights(weights: Sequence[float] | None, count: int) -> list[float]:
    """Validate and normalize to sum 1; None means uniform."""
    if weights is None:
        weights = [1.0] * count
    if len(weights) != count:
        raise UsageError(f"{len(weights)} weights for {count} maps")
    if any(w < 0 or not np.isfinite(w) for w in weights):
        raise UsageError("weights must be finite and non-negative")
    total = float(sum(weights))
    if total <= 0.0:
        raise AllZeroWeights("weights sum to zero")
    return [float(w) / total for w in weights]


def ensemble_scores(
    maps: Sequence[ScoreMap], weights: Sequence[float] | None = None
) -> ScoreMap:
    """Weighted per-pixel mean of score maps for one tile."""
    if not maps:
        raise UsageError("ensemble needs at least one score map")
    first = maps[0]
    for m in maps[1:]:
        if m.scores.shape != first.scores.shape:
            raise DimensionMismatch(
                f"map for {m.tile_id!r} is {m.scores.shape}, expected {first.scores.shape}"
            )
        if m.tile_id != first.tile_id:
            raise TileIdMismatch(f"mixing tiles {first.tile_id!r} and {m.tile_id!r}")
    scale = normalized_weights(weights, len(maps))
    acc = np.zeros(first.scores.shape, dtype=np.float64)
    for w, m in zip(scale, maps):
        acc += w * m.scores.astype(np.float64)
    return ScoreMap(tile_id=first.tile_id, scores=acc.astype(np.float32))


def argmax_labels(score_map: ScoreMap, validity: np.ndarray) -> np.ndarray:
    """(H, W) uint8 label raster; ties go to the lowest class index.

    Invalid pixels are forced to background regardless of their scores.
    """
    scores = score_map.scores
    if validity.shape != scores.shape[:2]:
        raise DimensionMismatch(
            f"validity is {validity.shape}, scores are {scores.shape[:2]}"
        )
    labels = np.argmax(scores, axis=2).astype(np.uint8)
    labels[~validity] = 0
    return labels


def write_label_raster(labels: np.ndarray, path: Path | str) -> None:
    """Write a label raster as a single-channel PNG of class indices."""
    Image.fromarray(labels.astype(np.uint8), "L").save(path)


def read_label_raster(path: Path | str) -> np.ndarray:
    """Read a label PNG back to an (H, W) uint8 array of class indices."""
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise CorruptRaster(f"cannot decode {path}: {exc}") from exc
    if img.mode != "L":
        raise CorruptRaster(f"{path}: expected single-channel labels, got {img.mode!r}")
    labels = np.asarray(img, dtype=np.uint8)
    if labels.max(initial=0) >= NUM_CLASSES:
        raise CorruptRaster(f"{path}: label values exceed class range")
    return labels
