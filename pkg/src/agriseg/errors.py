"""Exception types shared across the package.

Two families matter to callers: ``UsageError`` for malformed flags and
configuration (CLI exit 1) and ``DataError`` for anything wrong with the data
on disk or in flight (CLI exit 2).
"""

from __future__ import annotations


class AgrisegError(Exception):
    """Base class for all package errors."""


class UsageError(AgrisegError, ValueError):
    """Bad flag or configuration value supplied by the caller."""


class DataError(AgrisegError):
    """Invalid, inconsistent, or missing data."""


class MissingCompanionFile(DataError):
    """A tile id exists in images/rgb but one of its companion files is absent."""

    def __init__(self, tile_id: str, artifact: str):
        super().__init__(f"tile {tile_id!r}: missing companion file {artifact!r}")
        self.tile_id = tile_id
        self.artifact = artifact


class CorruptRaster(DataError):
    """A raster file could not be decoded or has an invalid payload."""


class DimensionMismatch(DataError):
    """Rasters that must share a shape do not."""


class EmptyDataset(DataError):
    """Ingest found zero tiles."""


class NoValidPixels(DataError):
    """A tile has no pixel where both boundary and mask are set."""


class CorruptManifest(DataError):
    """A manifest file violates the line-delimited JSON record format."""


class OutputNotEmpty(DataError):
    """Refusing to generate into a non-empty output directory."""


class IoFailure(DataError):
    """An underlying filesystem write or read failed."""


class EmptyManifest(DataError):
    """An operation requires at least one manifest record."""


class DuplicateTileId(DataError):
    """Tile ids that must be unique are repeated."""


class UnknownTileId(DataError):
    """A sample plan and a manifest do not reference the same tile ids."""


class CorruptPlan(DataError):
    """A sample plan's stored realized counts do not match its entries."""


class UnreachableTarget(DataError):
    """A resampling target cannot be approached within the multiplicity cap."""

    def __init__(self, class_index: int, best_achievable: int):
        super().__init__(
            f"class {class_index}: target unreachable, best achievable count "
            f"is {best_achievable}"
        )
        self.class_index = class_index
        self.best_achievable = best_achievable


class TooFewTiles(DataError):
    """Not enough tiles to form a single mosaic group."""


class BadFactor(DataError):
    """Mosaic factor outside the supported {2, 3}."""


class MissingScoreFile(DataError):
    """No score file exists for the requested tile id."""


class InvalidScores(DataError):
    """A score map violates normalization, bounds, or its file format."""


class TileIdMismatch(DataError):
    """Score maps being fused belong to different tiles."""


class AllZeroWeights(DataError):
    """Ensemble weights sum to zero."""


class IndivisibleSize(DataError):
    """Tile size not divisible by the requested scale factor."""


class UnsupportedTransform(DataError):
    """The operation is defined only for rotation/flip transforms."""


class DuplicateTransform(DataError):
    """A TTA configuration lists the same transform twice."""


class ArithmeticOverflow(DataError):
    """A 64-bit counter would overflow."""


class NoDefinedClasses(DataError):
    """Every class has an empty union; no IoU is defined."""
