"""Ingest, tile loading, per-class counts, and manifest serialization."""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from agriseg.dataset import (
    FOREGROUND_DIRS,
    NUM_CLASSES,
    Manifest,
    TileRecord,
    class_counts,
    ingest_dataset,
    load_tile,
    read_manifest,
    tile_paths,
    write_manifest,
)
from agriseg.errors import (
    CorruptManifest,
    CorruptRaster,
    DimensionMismatch,
    EmptyDataset,
    MissingCompanionFile,
    NoValidPixels,
    UsageError,
)
from agriseg.synth import SynthConfig, generate_synthetic

from conftest import write_png, write_tile


def test_ingest_three_tiles_sorted(tree):
    for tile_id in ("b2", "a1", "c3"):
        write_tile(tree, tile_id)
    manifest = ingest_dataset(tree, "train")
    assert [r.id for r in manifest.records] == ["a1", "b2", "c3"]
    assert manifest.split == "train"
    assert all(r.presence[0] and not any(r.presence[1:]) for r in manifest.records)


def test_ingest_missing_nir(tree):
    write_tile(tree, "t1")
    (tree / "images" / "nir" / "t1.png").unlink()
    with pytest.raises(MissingCompanionFile) as err:
        ingest_dataset(tree, "train")
    assert err.value.tile_id == "t1"


def test_ingest_missing_label_dir_file(tree):
    write_tile(tree, "t1")
    (tree / "labels" / "water" / "t1.png").unlink()
    with pytest.raises(MissingCompanionFile) as err:
        ingest_dataset(tree, "train")
    assert err.value.artifact == "water"


def test_ingest_class6_presence_matches_pixel_scan(tmp_path):
    # Oracle first: decode every raster independently and count tiles where
    # water has a valid pixel; config frozen at a seed where that count is 4.
    density = tuple(0.5 if c == 6 else 0.0 for c in range(NUM_CLASSES))
    config = SynthConfig(tile_count=10, size=32, seed=4, class_density=density, overlap_rate=0.0)
    root = tmp_path / "ds"
    manifest = generate_synthetic(config, root)

    scanned = 0
    for rgb in sorted((root / "images" / "rgb").iterdir()):
        tile_id = rgb.stem
        boundary = np.asarray(Image.open(root / "boundaries" / f"{tile_id}.png")) >= 128
        mask = np.asarray(Image.open(root / "masks" / f"{tile_id}.png")) >= 128
        water = np.asarray(Image.open(root / "labels" / "water" / f"{tile_id}.png")) >= 128
        if (water & boundary & mask).any():
            scanned += 1
    assert scanned == 4
    assert sum(r.presence[6] for r in manifest.records) == scanned
    assert class_counts(manifest)[6] == scanned


def test_ingest_empty_and_missing_root(tmp_path):
    with pytest.raises(EmptyDataset):
        ingest_dataset(tmp_path / "absent", "train")
    (tmp_path / "images" / "rgb").mkdir(parents=True)
    with pytest.raises(EmptyDataset):
        ingest_dataset(tmp_path, "train")


def test_ingest_bad_split(tree):
    write_tile(tree, "t1")
    with pytest.raises(UsageError):
        ingest_dataset(tree, "training")


def test_ingest_rejects_all_invalid_tile(tree):
    write_tile(tree, "t1", boundary=np.zeros((8, 8), dtype=np.uint8))
    with pytest.raises(NoValidPixels):
        ingest_dataset(tree, "train")


def test_ingest_threads_match_serial(tree):
    for i in range(12):
        write_tile(tree, f"t{i:02d}")
    serial = ingest_dataset(tree, "val")
    parallel = ingest_dataset(tree, "val", threads=4)
    assert serial == parallel


def test_load_tile_full_validity_background(tree):
    write_tile(tree, "t1")
    sample = load_tile(ingest_dataset(tree, "train").records[0])
    assert sample.validity.all()
    assert sample.labels[0].all()
    assert not sample.labels[1:].any()
    assert sample.image.shape == (8, 8, 4)


def test_load_tile_zero_boundary_zeroes_everything(tree):
    fg = np.ones((8, 8), dtype=bool)
    write_tile(tree, "t1", boundary=np.zeros((8, 8), dtype=np.uint8), labels={3: fg})
    record = TileRecord(
        id="t1", paths=tile_paths(tree, "t1", "t1.png", "t1.png"), presence=(False,) * 9
    )
    sample = load_tile(record)
    assert not sample.validity.any()
    assert not sample.labels.any()


def test_load_tile_quarter_foreground_background_is_rest(tree):
    size = 16
    fg = np.zeros((size, size), dtype=bool)
    fg[:8, :8] = True  # exactly 25% of pixels
    write_tile(tree, "t1", size=size, labels={2: fg})
    sample = load_tile(ingest_dataset(tree, "train").records[0])
    assert int(sample.labels[2].sum()) == size * size // 4
    assert int(sample.labels[0].sum()) == size * size * 3 // 4
    assert not (sample.labels[0] & sample.labels[2]).any()


def test_load_tile_validity_clips_labels(tree):
    fg = np.ones((8, 8), dtype=bool)
    mask = np.full((8, 8), 255, dtype=np.uint8)
    mask[:4] = 0
    write_tile(tree, "t1", mask=mask, labels={5: fg})
    sample = load_tile(ingest_dataset(tree, "train").records[0])
    assert not sample.labels[:, :4].any()
    assert sample.labels[5, 4:].all()


def test_background_invariant_on_every_valid_pixel(tmp_path):
    config = SynthConfig(tile_count=6, size=32, seed=9, overlap_rate=0.5)
    manifest = generate_synthetic(config, tmp_path / "ds")
    for record in manifest.records:
        sample = load_tile(record)
        foreground = sample.labels[1:].any(axis=0)
        assert np.array_equal(sample.labels[0], sample.validity & ~foreground)
        # every valid pixel has at least one label, none off validity
        assert np.array_equal(sample.labels.any(axis=0), sample.validity)


def test_load_tile_dimension_mismatch(tree):
    write_tile(tree, "t1", size=8)
    write_png(tree / "images" / "nir" / "t1.png", np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(DimensionMismatch):
        ingest_dataset(tree, "train")


def test_load_tile_corrupt_raster(tree):
    write_tile(tree, "t1")
    (tree / "masks" / "t1.png").write_bytes(b"\x89PNG\r\n\x1a\nnot really")
    with pytest.raises(CorruptRaster):
        ingest_dataset(tree, "train")


def test_load_tile_rejects_rgb_labels(tree):
    write_tile(tree, "t1")
    rgbish = np.zeros((8, 8, 3), dtype=np.uint8)
    write_png(tree / "boundaries" / "t1.png", rgbish, "RGB")
    with pytest.raises(CorruptRaster):
        ingest_dataset(tree, "train")


def test_class_counts_empty_manifest():
    assert class_counts(Manifest(split="train", records=[])) == (0,) * NUM_CLASSES


def test_class_counts_multilabel_counts_once_per_class(tree):
    both = np.zeros((8, 8), dtype=bool)
    both[2:4, 2:4] = True
    write_tile(tree, "t1", labels={1: both, 2: both})
    write_tile(tree, "t2", labels={1: both})
    counts = class_counts(ingest_dataset(tree, "train"))
    assert counts[1] == 2 and counts[2] == 1 and counts[0] == 2
    assert sum(counts) >= 2


def test_class_counts_matches_brute_force_scan(tmp_path):
    manifest = generate_synthetic(
        SynthConfig(tile_count=8, size=32, seed=21, overlap_rate=0.3), tmp_path / "ds"
    )
    root = tmp_path / "ds"
    brute = [0] * NUM_CLASSES
    for rgb in (root / "images" / "rgb").iterdir():
        tile_id = rgb.stem
        boundary = np.asarray(Image.open(root / "boundaries" / f"{tile_id}.png")) >= 128
        mask = np.asarray(Image.open(root / "masks" / f"{tile_id}.png")) >= 128
        valid = boundary & mask
        any_fg = np.zeros_like(valid)
        for c, name in enumerate(FOREGROUND_DIRS, start=1):
            raster = np.asarray(Image.open(root / "labels" / name / f"{tile_id}.png")) >= 128
            raster &= valid
            any_fg |= raster
            brute[c] += bool(raster.any())
        brute[0] += bool((valid & ~any_fg).any())
    assert class_counts(manifest) == tuple(brute)


def test_ingest_determinism_byte_identical_manifests(tree, tmp_path):
    for i in range(5):
        write_tile(tree, f"t{i}")
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_manifest(ingest_dataset(tree, "test"), a)
    write_manifest(ingest_dataset(tree, "test"), b)
    assert a.read_bytes() == b.read_bytes()


def test_manifest_round_trip(tree, tmp_path):
    fg = np.zeros((8, 8), dtype=bool)
    fg[1:3, 1:3] = True
    write_tile(tree, "t1", labels={4: fg})
    write_tile(tree, "t2")
    manifest = ingest_dataset(tree, "val")
    manifest.provenance = "hand-built"
    path = tmp_path / "m.jsonl"
    write_manifest(manifest, path)
    back = read_manifest(path)
    assert back == manifest

    header = path.read_text().splitlines()[0]
    assert header == '{"split":"val","provenance":"hand-built","format_version":1}'


def test_manifest_round_trip_preserves_ordinals(tree, tmp_path):
    write_tile(tree, "t1")
    manifest = ingest_dataset(tree, "train")
    record = manifest.records[0]
    manifest.records.append(TileRecord(record.id, record.paths, record.presence, 1))
    path = tmp_path / "m.jsonl"
    write_manifest(manifest, path)
    back = read_manifest(path)
    assert [r.ordinal for r in back.records] == [0, 1]
    assert back.records[1].occurrence == "t1#1"
    # plain records serialize without an ordinal key
    lines = path.read_text().splitlines()
    assert '"ordinal"' not in lines[1]
    assert '"ordinal":1' in lines[2]


def test_manifest_relative_paths_survive_moves(tree, tmp_path):
    write_tile(tree, "t1")
    manifest = ingest_dataset(tree, "train")
    path = tmp_path / "nested" / "m.jsonl"
    write_manifest(manifest, path)
    back = read_manifest(path)
    assert load_tile(back.records[0]).validity.all()


def test_read_manifest_corrupt_cases(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("")
    with pytest.raises(CorruptManifest):
        read_manifest(path)
    path.write_text("not json\n")
    with pytest.raises(CorruptManifest):
        read_manifest(path)
    path.write_text('{"split":"train","provenance":"","format_version":2}\n')
    with pytest.raises(CorruptManifest):
        read_manifest(path)
    path.write_text(
        '{"split":"train","provenance":"","format_version":1}\n{"id":"x","presence":[true]}\n'
    )
    with pytest.raises(CorruptManifest):
        read_manifest(path)
    with pytest.raises(CorruptManifest):
        read_manifest(tmp_path / "absent.jsonl")
