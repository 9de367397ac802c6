"""Mosaic dataset construction: fuse k x k tile grids, then shrink by k.

Conceptually the k**2 source tiles are concatenated into one (kH) x (kW)
raster and down-sampled back to H x W, so the output keeps the input tile
geometry while showing a k-times-zoomed-out view. Image channels reduce by
block mean (integer arithmetic, ties round up); label and validity rasters
reduce by block OR, so a class present anywhere inside a block survives.
Background is recomputed afterwards, never pooled.

The same two pooling rules are reused by the scale transforms in the
augmentation module, which is why they live here as standalone functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .dataset import (
    FOREGROUND_DIRS,
    Manifest,
    NUM_CLASSES,
    TileSample,
    ingest_dataset,
    load_tile,
    recompute_background,
)
from .errors import BadFactor, DimensionMismatch, DuplicateTileId, IoFailure, TooFewTiles
from .rng import SplitMix64, derive_seed

MOSAIC_FACTORS = (2, 3)


@dataclass(frozen=True)
class MosaicSpec:
    """Factor and seed; grouping is always seeded-shuffle then consecutive."""

    factor: int
    seed: int

    def __post_init__(self):
        if self.factor not in MOSAIC_FACTORS:
            raise BadFactor(f"factor must be one of {MOSAIC_FACTORS}, got {self.factor}")


def block_mean_uint8(values: np.ndarray, k: int) -> np.ndarray:
    """Mean over k x k blocks of a (H, W) or (H, W, C) uint8 raster, half up.

    H and W must be divisible by k; the caller checks.
    """
    h, w = values.shape[:2]
    tail = values.shape[2:]
    blocks = values.reshape((h // k, k, w // k, k) + tail)
    sums = blocks.sum(axis=(1, 3), dtype=np.uint32)
    k2 = k * k
    return ((2 * sums + k2) // (2 * k2)).astype(np.uint8)


def block_or(flags: np.ndarray, k: int) -> np.ndarray:
    """OR over k x k blocks of the trailing two axes of a bool raster."""
    h, w = flags.shape[-2:]
    lead = flags.shape[:-2]
    blocks = flags.reshape(lead + (h // k, k, w // k, k))
    return blocks.any(axis=(-3, -1))


def mosaic_grid(tiles: Sequence[Sequence[TileSample]]) -> TileSample:
    """Fuse a k x k grid of same-sized tiles into one tile of that size.

    The output id joins the source ids with ``+`` in row-major order.
    """
    k = len(tiles)
    if k not in MOSAIC_FACTORS or any(len(row) != k for row in tiles):
        raise BadFactor(f"grid must be 2x2 or 3x3, got {k} rows")
    flat = [tile for row in tiles for tile in row]
    shape = flat[0].validity.shape
    for tile in flat:
        if tile.validity.shape != shape:
            raise DimensionMismatch(
                f"tile {tile.id!r} is {tile.validity.shape}, expected {shape}"
            )

    image = np.concatenate(
        [np.concatenate([tile.image for tile in row], axis=1) for row in tiles], axis=0
    )
    labels = np.concatenate(
        [np.concatenate([tile.labels for tile in row], axis=2) for row in tiles], axis=1
    )
    validity = np.concatenate(
        [np.concatenate([tile.validity for tile in row], axis=1) for row in tiles], axis=0
    )

    out_labels = block_or(labels, k)
    out_validity = block_or(validity, k)
    recompute_background(out_labels, out_validity)
    return TileSample(
        id="+".join(tile.id for tile in flat),
        image=block_mean_uint8(image, k),
        labels=out_labels,
        validity=out_validity,
    )


def _write_sample(out_root: Path, sample: TileSample) -> None:
    """Write a fused tile in the standard layout.

    A fused tile has no separate boundary and mask anymore, only their AND;
    the boundary file carries the fused validity and the mask is all-set, so
    reloading reproduces the validity bit-exactly.
    """
    validity = sample.validity.astype(np.uint8) * 255
    full = np.full_like(validity, 255)
    try:
        Image.fromarray(sample.image[:, :, :3], "RGB").save(
            out_root / "images" / "rgb" / f"{sample.id}.png"
        )
        Image.fromarray(sample.image[:, :, 3], "L").save(
            out_root / "images" / "nir" / f"{sample.id}.png"
        )
        Image.fromarray(validity, "L").save(out_root / "boundaries" / f"{sample.id}.png")
        Image.fromarray(full, "L").save(out_root / "masks" / f"{sample.id}.png")
        for c, name in enumerate(FOREGROUND_DIRS, start=1):
            raster = sample.labels[c].astype(np.uint8) * 255
            Image.fromarray(raster, "L").save(out_root / "labels" / name / f"{sample.id}.png")
    except OSError as exc:
        raise IoFailure(f"cannot write mosaic tile {sample.id!r}: {exc}") from exc


def build_mosaic_dataset(
    manifest: Manifest, spec: MosaicSpec, out_root: Path | str
) -> Manifest:
    """Shuffle, group by k**2, fuse each group, write the tree, re-ingest.

    Leftover tiles that do not fill a whole group are dropped. The returned
    manifest is the ingest of the written tree (ids sorted), with provenance
    describing the construction.
    """
    k = spec.factor
    group_size = k * k
    if len(manifest.records) < group_size:
        raise TooFewTiles(
            f"need at least {group_size} tiles for factor {k}, have {len(manifest.records)}"
        )

    records = list(manifest.records)
    rng = SplitMix64(derive_seed(spec.seed, "mosaic", k))
    rng.shuffle(records)

    out_root = Path(out_root)
    try:
        for sub in ("images/rgb", "images/nir", "boundaries", "masks"):
            (out_root / sub).mkdir(parents=True, exist_ok=True)
        for name in FOREGROUND_DIRS:
            (out_root / "labels" / name).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_root}: {exc}") from exc

    seen: set[str] = set()
    for start in range(0, len(records) - group_size + 1, group_size):
        group = [load_tile(rec) for rec in records[start : start + group_size]]
        grid = [group[r * k : (r + 1) * k] for r in range(k)]
        fused = mosaic_grid(grid)
        if fused.id in seen:
            raise DuplicateTileId(f"mosaic output id {fused.id!r} repeats")
        seen.add(fused.id)
        _write_sample(out_root, fused)

    result = ingest_dataset(out_root, manifest.split)
    result.provenance = f"mosaic {k}x{k} of {manifest.split} with seed {spec.seed}"
    return result
