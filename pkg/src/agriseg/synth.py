"""Deterministic synthetic dataset generator.

Writes small datasets in the exact on-disk layout the ingest operation
expects, so the whole pipeline is testable without the real corpus. Label
shapes are axis-aligned rectangles and discs rather than anything
field-like: the machinery under test is geometry-agnostic and simple shapes
keep pixel-count oracles trivial.

Layout of one generated tile:

  - image channels are pure per-tile noise (labels need not correlate with
    pixel values anywhere downstream),
  - the mask may carve an invalid strip off the top and the boundary off the
    bottom, each strip ``size // 8`` rows deep,
  - each foreground class draws at most one shape, confined to its own slot
    of a 2x4 grid inside the always-valid interior, so shapes never stack
    and the label set at any painted pixel is exactly {class} or
    {class, overlap partner}.

All randomness comes from the repo's fixed counter-based generator, split
per tile index, so tiles can be generated in parallel and reruns are
byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import FOREGROUND_DIRS, Manifest, NUM_CLASSES, ingest_dataset
from .errors import IoFailure, OutputNotEmpty, UsageError
from .rng import SplitMix64, derive_seed, u64_stream

_MIN_SIZE = 16
_STRIP_RATE = 0.3  # chance of an invalid strip on each of mask / boundary
_DEFAULT_DENSITY = (0.0,) + (0.35,) * 8


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for one generated dataset; equal configs give identical bytes.

    ``class_density[c]`` is the per-tile probability that foreground class c
    paints a shape; entry 0 (background) is ignored, background simply fills
    whatever stays unpainted. ``overlap_rate`` is the per-shape probability
    that the shape carries a second, distinct foreground label.
    """

    tile_count: int
    size: int = 64
    seed: int = 0
    class_density: tuple[float, ...] = _DEFAULT_DENSITY
    overlap_rate: float = 0.25

    def __post_init__(self):
        if self.tile_count < 0:
            raise UsageError("tile_count must be >= 0")
        if self.size < _MIN_SIZE:
            raise UsageError(f"size must be >= {_MIN_SIZE}")
        if len(self.class_density) != NUM_CLASSES:
            raise UsageError(f"class_density needs {NUM_CLASSES} entries")
        for value in self.class_density + (self.overlap_rate,):
            if not 0.0 <= value <= 1.0:
                raise UsageError("densities and overlap_rate must lie in [0, 1]")


def _noise_image(seed: int, size: int) -> np.ndarray:
    """(size, size, 4) uint8 noise from the counter-based stream."""
    need = size * size * 4
    words = u64_stream(seed, (need + 7) // 8)
    return np.frombuffer(words.tobytes(), dtype=np.uint8)[:need].reshape(size, size, 4)


def _paint_shape(rng: SplitMix64, raster: np.ndarray, y0: int, y1: int, x0: int, x1: int) -> None:
    """Draw one rectangle or disc inside the slot [y0:y1, x0:x1]."""
    slot_h = y1 - y0
    slot_w = x1 - x0
    if rng.below(2) == 0:
        h = 2 + rng.below(max(1, slot_h - 2))
        w = 2 + rng.below(max(1, slot_w - 2))
        top = y0 + rng.below(max(1, slot_h - h + 1))
        left = x0 + rng.below(max(1, slot_w - w + 1))
        raster[top : top + h, left : left + w] = True
    else:
        max_r = max(1, (min(slot_h, slot_w) - 1) // 2)
        r = 1 + rng.below(max_r)
        cy = y0 + r + rng.below(max(1, slot_h - 2 * r))
        cx = x0 + r + rng.below(max(1, slot_w - 2 * r))
        yy, xx = np.ogrid[: raster.shape[0], : raster.shape[1]]
        raster[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = True


def _generate_tile(config: SynthConfig, index: int) -> dict[str, np.ndarray]:
    """All rasters for tile ``index``, keyed by artifact name."""
    size = config.size
    strip = size // 8
    rng = SplitMix64(derive_seed(config.seed, "tile", index))

    mask = np.full((size, size), 255, dtype=np.uint8)
    boundary = np.full((size, size), 255, dtype=np.uint8)
    if rng.uniform() < _STRIP_RATE:
        mask[:strip] = 0
    if rng.uniform() < _STRIP_RATE:
        boundary[size - strip :] = 0

    # Slots tile the always-valid interior in a 2x4 grid, one per class.
    top = strip + 1
    bottom = size - strip - 1
    slot_h = (bottom - top) // 2
    slot_w = size // 4
    labels = np.zeros((NUM_CLASSES, size, size), dtype=bool)
    for c in range(1, NUM_CLASSES):
        if rng.uniform() >= config.class_density[c]:
            continue
        row, col = divmod(c - 1, 4)
        y0 = top + row * slot_h
        x0 = col * slot_w
        region = np.zeros((size, size), dtype=bool)
        _paint_shape(rng, region, y0, y0 + slot_h, x0 + 1, x0 + slot_w - 1)
        labels[c] |= region
        if rng.uniform() < config.overlap_rate:
            partner = 1 + rng.below(NUM_CLASSES - 2)
            if partner >= c:
                partner += 1
            labels[partner] |= region

    rasters = {
        "image": _noise_image(derive_seed(config.seed, "pixels", index), size),
        "boundary": boundary,
        "mask": mask,
    }
    for c, name in enumerate(FOREGROUND_DIRS, start=1):
        rasters[name] = labels[c].astype(np.uint8) * 255
    return rasters


def _write_tile(out_root: Path, tile_id: str, rasters: dict[str, np.ndarray]) -> None:
    image = rasters["image"]
    try:
        Image.fromarray(image[:, :, :3], "RGB").save(out_root / "images" / "rgb" / f"{tile_id}.png")
        Image.fromarray(image[:, :, 3], "L").save(out_root / "images" / "nir" / f"{tile_id}.png")
        Image.fromarray(rasters["boundary"], "L").save(out_root / "boundaries" / f"{tile_id}.png")
        Image.fromarray(rasters["mask"], "L").save(out_root / "masks" / f"{tile_id}.png")
        for name in FOREGROUND_DIRS:
            Image.fromarray(rasters[name], "L").save(out_root / "labels" / name / f"{tile_id}.png")
    except OSError as exc:
        raise IoFailure(f"cannot write tile {tile_id!r}: {exc}") from exc


def generate_synthetic(config: SynthConfig, out_root: Path | str) -> Manifest:
    """Write a synthetic dataset tree and return its ingested Manifest.

    ``out_root`` must be empty or absent; generated trees always satisfy the
    dataset invariants, so the returned manifest is exactly what a fresh
    ingest of the tree yields.
    """
    out_root = Path(out_root)
    if out_root.exists() and any(out_root.iterdir()):
        raise OutputNotEmpty(f"{out_root} exists and is not empty")
    try:
        for sub in ("images/rgb", "images/nir", "boundaries", "masks"):
            (out_root / sub).mkdir(parents=True, exist_ok=True)
        for name in FOREGROUND_DIRS:
            (out_root / "labels" / name).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_root}: {exc}") from exc

    for index in range(config.tile_count):
        tile_id = f"s{index:05d}"
        _write_tile(out_root, tile_id, _generate_tile(config, index))

    manifest = ingest_dataset(out_root, "synthetic")
    manifest.provenance = (
        f"synthetic: {config.tile_count} tiles, size {config.size}, seed {config.seed}"
    )
    return manifest
