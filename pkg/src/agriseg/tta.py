"""Test-time augmentation: transform, predict, invert, aggregate.

A transform is (rotation quarter-turns, horizontal flip, scale), applied in
exactly that order: rotate counterclockwise, then flip left-right, then
shrink by the scale denominator using the mosaic pooling rules (block mean
for image channels, block OR for labels and validity). The 8 rotation/flip
combinations are pure pixel permutations with exact inverses; scores flow
back through the inverse chain, with 1/k scaling inverted by replicating
each score pixel over its k x k block, which preserves per-pixel sums
exactly.

Aggregation is the arithmetic mean, computed by pairwise summation. That
fixed reduction order is part of the contract: it makes the mean of a
permuted transform list reproducible to 1e-6, and for the 8-element
rotation/flip group over one-hot scores it is exact, so an equivariant
predictor's augmented output equals its plain output bit for bit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dataset import TileSample, recompute_background
from .errors import (
    DimensionMismatch,
    DuplicateTransform,
    IndivisibleSize,
    UnsupportedTransform,
    UsageError,
)
from .mosaic import block_mean_uint8, block_or
from .predictor import PredictorSpec, ScoreMap, predict

_SCALES = (Fraction(1), Fraction(1, 2), Fraction(1, 3))


@dataclass(frozen=True)
class TtaTransform:
    rotation: int = 0  # quarter-turns counterclockwise
    hflip: bool = False
    scale: Fraction = Fraction(1)

    def __post_init__(self):
        if self.rotation not in (0, 1, 2, 3):
            raise UnsupportedTransform(f"rotation must be 0..3, got {self.rotation}")
        if self.scale not in _SCALES:
            raise UnsupportedTransform(f"scale must be one of {_SCALES}, got {self.scale}")


IDENTITY = TtaTransform()
D4 = tuple(
    TtaTransform(rotation=r, hflip=f) for f in (False, True) for r in (0, 1, 2, 3)
)


@dataclass(frozen=True)
class TtaConfig:
    transforms: tuple[TtaTransform, ...]

    def __post_init__(self):
        if not self.transforms:
            raise UsageError("transform list must not be empty")
        if len(set(self.transforms)) != len(self.transforms):
            raise DuplicateTransform("transform list contains duplicates")


def apply_transform(tile: TileSample, t: TtaTransform) -> TileSample:
    """Forward-transform every raster of a tile consistently."""
    image = tile.image
    labels = tile.labels
    validity = tile.validity
    if t.rotation:
        image = np.rot90(image, t.rotation, axes=(0, 1))
        labels = np.rot90(labels, t.rotation, axes=(1, 2))
        validity = np.rot90(validity, t.rotation, axes=(0, 1))
    if t.hflip:
        image = np.flip(image, axis=1)
        labels = np.flip(labels, axis=2)
        validity = np.flip(validity, axis=1)
    k = t.scale.denominator
    if k > 1:
        h, w = validity.shape
        if h % k or w % k:
            raise IndivisibleSize(f"tile {tile.id!r}: {h}x{w} not divisible by {k}")
        image = block_mean_uint8(np.ascontiguousarray(image), k)
        labels = block_or(labels, k)
        validity = block_or(validity, k)
        recompute_background(labels, validity)
    return TileSample(
        id=tile.id,
        image=np.ascontiguousarray(image),
        labels=np.ascontiguousarray(labels),
        validity=np.ascontiguousarray(validity),
    )


def transformed_shape(height: int, width: int, t: TtaTransform) -> tuple[int, int]:
    """Raster shape after applying ``t`` to an (height, width) tile."""
    if t.rotation % 2:
        height, width = width, height
    k = t.scale.denominator
    return height // k, width // k


def invert_scores(score_map: ScoreMap, t: TtaTransform, height: int, width: int) -> ScoreMap:
    """Map scores predicted on a transformed tile back to the original frame.

    The inverse runs the forward steps backwards: replicate-upscale, unflip,
    rotate back. Replication copies whole distributions, so normalization is
    only asserted afterwards, never re-applied.
    """
    expected = transformed_shape(height, width, t)
    scores = score_map.scores
    if scores.shape[:2] != expected:
        raise DimensionMismatch(
            f"tile {score_map.tile_id!r}: scores are {scores.shape[:2]}, "
            f"transform expects {expected}"
        )
    k = t.scale.denominator
    if k > 1:
        scores = scores.repeat(k, axis=0).repeat(k, axis=1)
    if t.hflip:
        scores = np.flip(scores, axis=1)
    if t.rotation:
        scores = np.rot90(scores, -t.rotation, axes=(0, 1))
    out = ScoreMap(tile_id=score_map.tile_id, scores=np.ascontiguousarray(scores))
    return out.validate()


def pairwise_mean(stack: list[np.ndarray]) -> np.ndarray:
    """Arithmetic mean with pairwise summation, the mandated reduction order."""

    def _sum(lo: int, hi: int) -> np.ndarray:
        if hi - lo == 1:
            return stack[lo]
        mid = (lo + hi) // 2
        return _sum(lo, mid) + _sum(mid, hi)

    return _sum(0, len(stack)) / np.float32(len(stack))


def tta_predict(
    spec: PredictorSpec, tile: TileSample, config: TtaConfig, *, threads: int = 1
) -> ScoreMap:
    """Predict on every transformed variant, invert, and average.

    Branches may run in parallel; the reduction order is fixed by the
    transform list, so thread count never changes the result.
    """

    def branch(t: TtaTransform) -> np.ndarray:
        scores = predict(spec, apply_transform(tile, t))
        return invert_scores(scores, t, tile.height, tile.width).scores

    if threads > 1 and len(config.transforms) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            branches = list(pool.map(branch, config.transforms))
    else:
        branches = [branch(t) for t in config.transforms]
    mean = pairwise_mean(branches)
    return ScoreMap(tile_id=tile.id, scores=mean).validate()


_TOKENS = {
    "identity": (IDENTITY,),
    "rot90": (TtaTransform(rotation=1),),
    "rot180": (TtaTransform(rotation=2),),
    "rot270": (TtaTransform(rotation=3),),
    "hflip": (TtaTransform(hflip=True),),
    "scale2": (TtaTransform(scale=Fraction(1, 2)),),
    "scale3": (TtaTransform(scale=Fraction(1, 3)),),
    "d4": D4,
}


def parse_tta(text: str) -> TtaConfig:
    """Parse the CLI transform list; the identity is always included once.

    Tokens: identity, rot90, rot180, rot270, hflip, scale2, scale3, and d4
    (shorthand for all 8 rotation/flip combinations).
    """
    chosen: list[TtaTransform] = [IDENTITY]
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token not in _TOKENS:
            raise UsageError(f"unknown transform token {token!r}")
        for t in _TOKENS[token]:
            if t not in chosen:
                chosen.append(t)
    return TtaConfig(transforms=tuple(chosen))
