"""ScoreMap currency, the pluggable predictor contract, reference predictors.

A ScoreMap is the interchange value between prediction, augmentation,
ensembling, and evaluation: one float32 probability distribution over the 9
classes per pixel. Neural models live outside this repo; they plug in
through the ``external`` predictor kind, which reads precomputed ``.agsc``
score files. The built-in kinds exist to exercise and test the pipeline:

  oracle        one-hot on the lowest-index ground-truth label per valid
                pixel, one-hot background off-validity. Equivariant under
                every rotation/flip, which is what makes augmentation
                round-trips exactly checkable.
  constant:K    one-hot class K everywhere.
  noisy-oracle  oracle, but each valid pixel is independently replaced by a
                uniform-random one-hot with probability p (counter-based
                draws keyed by tile id and pixel index).

Score file format ``<tile id>.agsc``: magic ``AGSC``, four little-endian
u32 fields (version=1, H, W, C=9), then H*W*9 little-endian float32 values,
row-major, class index fastest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import NUM_CLASSES, TileSample
from .errors import (
    DimensionMismatch,
    InvalidScores,
    MissingScoreFile,
    UsageError,
)
from .rng import derive_seed, u64_stream, unit_floats

SCOREMAP_FORMAT_VERSION = 1
SCORE_SUM_TOLERANCE = 1e-5
_MAGIC = b"AGSC"
_HEADER = struct.Struct("<4sIIII")

_EYE = np.eye(NUM_CLASSES, dtype=np.float32)


@dataclass
class ScoreMap:
    """Per-pixel class distribution for one tile: (H, W, 9) float32."""

    tile_id: str
    scores: np.ndarray

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    def validate(self) -> "ScoreMap":
        """Raise InvalidScores unless finite, non-negative, rows summing to 1."""
        s = self.scores
        if s.ndim != 3 or s.shape[2] != NUM_CLASSES or s.dtype != np.float32:
            raise InvalidScores(
                f"tile {self.tile_id!r}: expected (H, W, {NUM_CLASSES}) float32, "
                f"got {s.shape} {s.dtype}"
            )
        if not np.isfinite(s).all() or (s < 0).any():
            raise InvalidScores(f"tile {self.tile_id!r}: scores must be finite and >= 0")
        sums = s.sum(axis=2, dtype=np.float64)
        worst = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
        if worst > SCORE_SUM_TOLERANCE:
            raise InvalidScores(
                f"tile {self.tile_id!r}: per-pixel sums off by {worst:.2e} "
                f"(tolerance {SCORE_SUM_TOLERANCE})"
            )
        return self


@dataclass(frozen=True)
class PredictorSpec:
    """Which predictor to run and its parameters."""

    kind: str
    constant_class: int = 0
    flip_probability: float = 0.0
    seed: int = 0
    scores_dir: Path | None = None

    def __post_init__(self):
        if self.kind not in ("oracle", "constant", "noisy-oracle", "external"):
            raise UsageError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "constant" and not 0 <= self.constant_class < NUM_CLASSES:
            raise UsageError(f"constant class must be in [0, {NUM_CLASSES - 1}]")
        if self.kind == "noisy-oracle" and not 0.0 <= self.flip_probability < 1.0:
            raise UsageError("noisy-oracle probability must be in [0, 1)")
        if self.kind == "external" and self.scores_dir is None:
            raise UsageError("external predictor needs a scores directory")


def parse_predictor(text: str) -> PredictorSpec:
    """Parse CLI syntax: oracle | constant:K | noisy-oracle:P:SEED | external:DIR."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "oracle" and not rest:
            return PredictorSpec(kind="oracle")
        if kind == "constant":
            return PredictorSpec(kind="constant", constant_class=int(rest))
        if kind == "noisy-oracle":
            prob, _, seed = rest.partition(":")
            return PredictorSpec(
                kind="noisy-oracle", flip_probability=float(prob), seed=int(seed)
            )
        if kind == "external" and rest:
            return PredictorSpec(kind="external", scores_dir=Path(rest))
    except ValueError as exc:
        raise UsageError(f"bad predictor {text!r}: {exc}") from exc
    raise UsageError(f"bad predictor {text!r}")


def _one_hot(indices: np.ndarray) -> np.ndarray:
    return _EYE[indices]


def oracle_scores(tile: TileSample) -> ScoreMap:
    # argmax over the bool label stack picks the lowest-index set label;
    # invalid pixels have no label set and fall through to background.
    indices = np.argmax(tile.labels, axis=0)
    return ScoreMap(tile_id=tile.id, scores=_one_hot(indices))


def constant_scores(tile: TileSample, class_index: int) -> ScoreMap:
    scores = np.broadcast_to(
        _EYE[class_index], (tile.height, tile.width, NUM_CLASSES)
    ).copy()
    return ScoreMap(tile_id=tile.id, scores=scores)


def noisy_oracle_scores(tile: TileSample, p: float, seed: int) -> ScoreMap:
    indices = np.argmax(tile.labels, axis=0)
    n = tile.height * tile.width
    tile_seed = derive_seed(seed, "noisy-oracle", tile.id)
    flip = unit_floats(u64_stream(derive_seed(tile_seed, "flip"), n)).reshape(indices.shape) < p
    rand = unit_floats(u64_stream(derive_seed(tile_seed, "class"), n)).reshape(indices.shape)
    rand_class = np.minimum((rand * NUM_CLASSES).astype(np.int64), NUM_CLASSES - 1)
    indices = np.where(flip & tile.validity, rand_class, indices)
    return ScoreMap(tile_id=tile.id, scores=_one_hot(indices))


def predict(spec: PredictorSpec, tile: TileSample) -> ScoreMap:
    """Run the predictor named by ``spec`` on one loaded tile."""
    if spec.kind == "oracle":
        return oracle_scores(tile)
    if spec.kind == "constant":
        return constant_scores(tile, spec.constant_class)
    if spec.kind == "noisy-oracle":
        return noisy_oracle_scores(tile, spec.flip_probability, spec.seed)
    scores = read_scores(Path(spec.scores_dir) / f"{tile.id}.agsc").validate()
    if (scores.height, scores.width) != (tile.height, tile.width):
        raise DimensionMismatch(
            f"tile {tile.id!r}: scores are {scores.height}x{scores.width}, "
            f"tile is {tile.height}x{tile.width}"
        )
    return scores


def write_scores(score_map: ScoreMap, directory: Path | str) -> Path:
    """Write one ``.agsc`` file; returns the path written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{score_map.tile_id}.agsc"
    header = _HEADER.pack(
        _MAGIC, SCOREMAP_FORMAT_VERSION, score_map.height, score_map.width, NUM_CLASSES
    )
    payload = np.ascontiguousarray(score_map.scores, dtype="<f4").tobytes()
    path.write_bytes(header + payload)
    return path


def read_scores(path: Path | str) -> ScoreMap:
    """Read one ``.agsc`` file (tile id taken from the file name)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise MissingScoreFile(f"no score file {path}") from exc
    if len(blob) < _HEADER.size:
        raise InvalidScores(f"{path}: truncated header")
    magic, version, height, width, channels = _HEADER.unpack_from(blob)
    if magic != _MAGIC or version != SCOREMAP_FORMAT_VERSION or channels != NUM_CLASSES:
        raise InvalidScores(f"{path}: bad magic, version, or channel count")
    expected = _HEADER.size + height * width * NUM_CLASSES * 4
    if len(blob) != expected:
        raise InvalidScores(f"{path}: expected {expected} bytes, got {len(blob)}")
    scores = (
        np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
        .reshape(height, width, NUM_CLASSES)
        .astype(np.float32, copy=True)
    )
    return ScoreMap(tile_id=path.stem, scores=scores)
