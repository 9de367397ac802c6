"""Core raster types, dataset ingest, tile loading, and per-class statistics.

On-disk layout, one directory tree per split:

    root/
      images/rgb/<id>.png|jpg      3-channel byte image (R, G, B)
      images/nir/<id>.png|jpg      1-channel byte image (near infrared)
      boundaries/<id>.png          binary {0, 255}
      masks/<id>.png               binary {0, 255}
      labels/<class>/<id>.png      binary {0, 255}, one directory per
                                   foreground class

A pixel participates in anything downstream only where boundary AND mask are
both set (the validity raster). The background raster is never stored on
disk; it is always recomputed as "valid and carrying no foreground label",
so every valid pixel has at least one label and background never disagrees
with the foreground rasters.

Manifests serialize as UTF-8 JSON lines: a header object with ``split``,
``provenance`` and ``format_version``, then one object per record with keys
``id``, ``paths`` (artifact name to path relative to the manifest file) and
``presence`` (9 booleans). Records produced by resampling additionally carry
an ``ordinal`` key distinguishing repeated occurrences of one tile.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from .errors import (
    CorruptManifest,
    CorruptRaster,
    DimensionMismatch,
    DuplicateTileId,
    EmptyDataset,
    MissingCompanionFile,
    NoValidPixels,
    UsageError,
)

NUM_CLASSES = 9
CLASS_NAMES = (
    "Background",
    "Double Plant",
    "Drydown",
    "Endrow",
    "Nutrient Deficiency",
    "Planter Skip",
    "Water",
    "Waterway",
    "Weed Cluster",
)
CLASS_SHORT = ("BG", "DP", "D", "E", "ND", "PS", "W", "WW", "WC")
FOREGROUND_DIRS = (
    "double_plant",
    "drydown",
    "endrow",
    "nutrient_deficiency",
    "planter_skip",
    "water",
    "waterway",
    "weed_cluster",
)
PATH_KEYS = ("rgb", "nir", "boundary", "mask") + FOREGROUND_DIRS
SPLITS = ("train", "val", "test", "synthetic")
MANIFEST_FORMAT_VERSION = 1

_IMAGE_SUFFIXES = (".png", ".jpg")
_JSON_SEP = (",", ":")


@dataclass(frozen=True)
class TileRecord:
    """One tile's id, artifact paths, and per-class presence flags.

    ``ordinal`` distinguishes repeated occurrences of the same tile in a
    resampled manifest; records straight from ingest carry ordinal 0.
    """

    id: str
    paths: dict[str, Path]
    presence: tuple[bool, ...]
    ordinal: int = 0

    @property
    def occurrence(self) -> str:
        return f"{self.id}#{self.ordinal}"


@dataclass
class Manifest:
    """Ordered tile records for one dataset split, with lineage text."""

    split: str
    records: list[TileRecord]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TileRecord]:
        return iter(self.records)


@dataclass
class TileSample:
    """One loaded tile: image channels, label rasters, validity raster."""

    id: str
    image: np.ndarray  # (H, W, 4) uint8, channels R, G, B, NIR
    labels: np.ndarray  # (9, H, W) bool
    validity: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.validity.shape[0]

    @property
    def width(self) -> int:
        return self.validity.shape[1]


def recompute_background(labels: np.ndarray, validity: np.ndarray) -> None:
    """Overwrite channel 0 with "valid and no foreground label", in place."""
    labels[0] = validity & ~labels[1:].any(axis=0)


def _decode(path: Path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except Exception as exc:  # PIL raises a zoo of decode errors
        raise CorruptRaster(f"cannot decode {path}: {exc}") from exc
    return img


def read_binary_raster(path: Path) -> np.ndarray:
    """Read a single-channel PNG and threshold at 128 to a bool raster."""
    img = _decode(path)
    if img.mode == "1":
        img = img.convert("L")
    if img.mode != "L":
        raise CorruptRaster(f"{path}: expected single-channel raster, got mode {img.mode!r}")
    return np.asarray(img) >= 128


def read_rgb_raster(path: Path) -> np.ndarray:
    img = _decode(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def read_nir_raster(path: Path) -> np.ndarray:
    img = _decode(path)
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img, dtype=np.uint8)


def tile_paths(root: Path, tile_id: str, rgb_name: str, nir_name: str) -> dict[str, Path]:
    """Assemble the artifact path map for one tile under ``root``."""
    paths = {
        "rgb": root / "images" / "rgb" / rgb_name,
        "nir": root / "images" / "nir" / nir_name,
        "boundary": root / "boundaries" / f"{tile_id}.png",
        "mask": root / "masks" / f"{tile_id}.png",
    }
    for name in FOREGROUND_DIRS:
        paths[name] = root / "labels" / name / f"{tile_id}.png"
    return paths


def load_tile(record: TileRecord) -> TileSample:
    """Load a record's rasters into a TileSample.

    Validity is the pixelwise AND of boundary and mask; label rasters are
    clipped to validity and background is recomputed, so the returned sample
    always satisfies the label/validity invariants.
    """
    paths = record.paths
    try:
        rgb = read_rgb_raster(paths["rgb"])
        nir = read_nir_raster(paths["nir"])
        boundary = read_binary_raster(paths["boundary"])
        mask = read_binary_raster(paths["mask"])
    except FileNotFoundError as exc:
        raise MissingCompanionFile(record.id, Path(exc.filename).name) from exc

    shape = rgb.shape[:2]
    for name, arr in (("nir", nir), ("boundary", boundary), ("mask", mask)):
        if arr.shape != shape:
            raise DimensionMismatch(
                f"tile {record.id!r}: {name} is {arr.shape}, rgb is {shape}"
            )

    validity = boundary & mask
    labels = np.zeros((NUM_CLASSES,) + shape, dtype=bool)
    for c, name in enumerate(FOREGROUND_DIRS, start=1):
        try:
            raster = read_binary_raster(paths[name])
        except FileNotFoundError as exc:
            raise MissingCompanionFile(record.id, name) from exc
        if raster.shape != shape:
            raise DimensionMismatch(
                f"tile {record.id!r}: label {name} is {raster.shape}, rgb is {shape}"
            )
        labels[c] = raster & validity
    recompute_background(labels, validity)

    image = np.dstack([rgb, nir])
    return TileSample(id=record.id, image=image, labels=labels, validity=validity)


def _discover_images(directory: Path) -> dict[str, str]:
    """Map tile id -> file name for every png/jpg in ``directory``."""
    found: dict[str, str] = {}
    for entry in sorted(directory.iterdir()):
        if entry.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        tile_id = entry.stem
        if tile_id in found:
            raise DuplicateTileId(f"{directory}: both {found[tile_id]} and {entry.name}")
        found[tile_id] = entry.name
    return found


def _ingest_record(root: Path, tile_id: str, rgb_name: str, nir_names: dict[str, str]) -> TileRecord:
    if tile_id not in nir_names:
        raise MissingCompanionFile(tile_id, "nir")
    paths = tile_paths(root, tile_id, rgb_name, nir_names[tile_id])
    for name in ("boundary", "mask") + FOREGROUND_DIRS:
        if not paths[name].is_file():
            raise MissingCompanionFile(tile_id, name)
    sample = load_tile(TileRecord(id=tile_id, paths=paths, presence=(False,) * NUM_CLASSES))
    if not sample.validity.any():
        raise NoValidPixels(f"tile {tile_id!r} has no valid pixel")
    presence = tuple(bool(sample.labels[c].any()) for c in range(NUM_CLASSES))
    return TileRecord(id=tile_id, paths=paths, presence=presence)


def ingest_dataset(root: Path | str, split: str, *, threads: int = 1) -> Manifest:
    """Scan a dataset tree into a Manifest, records sorted by id.

    Tiles may be decoded in parallel; the returned ordering is the sorted
    order regardless of completion order, so ingest is deterministic.
    """
    if split not in SPLITS:
        raise UsageError(f"unknown split {split!r}; expected one of {SPLITS}")
    root = Path(root)
    rgb_dir = root / "images" / "rgb"
    nir_dir = root / "images" / "nir"
    if not rgb_dir.is_dir():
        raise EmptyDataset(f"{root}: no images/rgb directory")
    rgb_names = _discover_images(rgb_dir)
    if not rgb_names:
        raise EmptyDataset(f"{root}: images/rgb contains no tiles")
    nir_names = _discover_images(nir_dir) if nir_dir.is_dir() else {}

    ordered_ids = sorted(rgb_names)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(
                pool.map(
                    lambda tid: _ingest_record(root, tid, rgb_names[tid], nir_names),
                    ordered_ids,
                )
            )
    else:
        records = [_ingest_record(root, tid, rgb_names[tid], nir_names) for tid in ordered_ids]
    return Manifest(split=split, records=records, provenance=f"ingested from {root}")


def class_counts(manifest: Manifest) -> tuple[int, ...]:
    """Per-class tile counts: tiles where the class has at least one valid pixel.

    A multi-label tile counts once for every class present in it, so the sum
    over classes is at least the record count.
    """
    totals = [0] * NUM_CLASSES
    for record in manifest.records:
        for c in range(NUM_CLASSES):
            if record.presence[c]:
                totals[c] += 1
    return tuple(totals)


def write_manifest(manifest: Manifest, path: Path | str) -> None:
    """Write a manifest as JSON lines; paths stored relative to the file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.resolve().parent
    header = {
        "split": manifest.split,
        "provenance": manifest.provenance,
        "format_version": MANIFEST_FORMAT_VERSION,
    }
    lines = [json.dumps(header, separators=_JSON_SEP)]
    for record in manifest.records:
        obj: dict = {"id": record.id}
        if record.ordinal:
            obj["ordinal"] = record.ordinal
        obj["paths"] = {
            key: Path(os.path.relpath(record.paths[key], base)).as_posix()
            for key in PATH_KEYS
        }
        obj["presence"] = list(record.presence)
        lines.append(json.dumps(obj, separators=_JSON_SEP))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: Path | str) -> Manifest:
    """Read a manifest written by :func:`write_manifest`."""
    path = Path(path)
    base = path.resolve().parent
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorruptManifest(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise CorruptManifest(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"{path}: bad header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise CorruptManifest(f"{path}: unsupported or missing format_version")
    split = header.get("split")
    if split not in SPLITS:
        raise CorruptManifest(f"{path}: bad split {split!r}")

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptManifest(f"{path}:{lineno}: bad record: {exc}") from exc
        try:
            rel_paths = obj["paths"]
            presence = obj["presence"]
            tile_id = obj["id"]
        except (KeyError, TypeError) as exc:
            raise CorruptManifest(f"{path}:{lineno}: missing record key: {exc}") from exc
        if set(rel_paths) != set(PATH_KEYS):
            raise CorruptManifest(f"{path}:{lineno}: unexpected path keys")
        if len(presence) != NUM_CLASSES or not all(isinstance(p, bool) for p in presence):
            raise CorruptManifest(f"{path}:{lineno}: presence must be 9 booleans")
        paths = {
            key: Path(os.path.normpath(base / rel_paths[key])) for key in PATH_KEYS
        }
        records.append(
            TileRecord(
                id=tile_id,
                paths=paths,
                presence=tuple(presence),
                ordinal=int(obj.get("ordinal", 0)),
            )
        )
    return Manifest(split=split, records=records, provenance=header.get("provenance", ""))
