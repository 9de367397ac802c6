"""Overlap-aware confusion counting and IoU metrics."""

import json
import math

import numpy as np
import pytest

from agriseg.dataset import CLASS_NAMES, NUM_CLASSES
from agriseg.ensemble import write_label_raster
from agriseg.errors import (
    ArithmeticOverflow,
    MissingScoreFile,
    NoDefinedClasses,
)
from agriseg.evaluation import (
    ConfusionMatrix,
    accumulate,
    evaluate_predictions,
    format_table,
    merge,
    metrics,
    report_dict,
    report_json,
)
from agriseg.predictor import PredictorSpec, predict, write_scores

from conftest import make_sample


def sample_from_rasters(gt_rows, validity=None, size=None):
    """Single-label ground truth from a 2-D list of class indices."""
    gt = np.asarray(gt_rows)
    fg = {c: gt == c for c in range(1, NUM_CLASSES) if (gt == c).any()}
    if validity is not None:
        validity = np.asarray(validity, dtype=bool)
    return make_sample(size=gt.shape, foreground=fg, validity=validity)


def brute_force_counts(pred, labels, validity):
    """Per-pixel re-statement of the counting rule, loops and all."""
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    h, w = pred.shape
    for y in range(h):
        for x in range(w):
            if not validity[y, x]:
                continue
            present = [c for c in range(NUM_CLASSES) if labels[c, y, x]]
            p = int(pred[y, x])
            if p in present:
                counts[p, p] += 1
            else:
                for l in present:
                    counts[l, p] += 1
    return counts


def test_perfect_single_label_prediction_fills_the_diagonal():
    tile = sample_from_rasters([[0, 1], [2, 3]])
    pred = np.array([[0, 1], [2, 3]])
    conf = accumulate(ConfusionMatrix(), pred, tile)
    assert conf.valid_pixels == 4
    assert conf.counts.sum() == 4
    assert np.array_equal(np.diag(conf.counts)[:4], [1, 1, 1, 1])


def test_hit_on_overlap_counts_once_for_the_predicted_class():
    both = np.ones((1, 1), dtype=bool)
    tile = make_sample(size=(1, 1), foreground={1: both, 2: both})
    conf = accumulate(ConfusionMatrix(), np.array([[2]]), tile)
    assert conf.counts[2, 2] == 1
    assert conf.counts.sum() == 1  # not also credited to class 1


def test_miss_on_overlap_charges_every_present_class():
    both = np.ones((1, 3), dtype=bool)
    tile = make_sample(size=(1, 3), foreground={1: both, 2: both})
    conf = accumulate(ConfusionMatrix(), np.array([[5, 5, 1]]), tile)
    # two misses charge both labels, the third pixel hits class 1
    assert conf.counts[1, 5] == 2
    assert conf.counts[2, 5] == 2
    assert conf.counts[1, 1] == 1
    assert conf.counts.sum() == 5


def test_invalid_pixels_never_count():
    tile = sample_from_rasters([[1, 1]], validity=[[True, False]])
    conf = accumulate(ConfusionMatrix(), np.array([[1, 1]]), tile)
    assert conf.valid_pixels == 1
    assert conf.counts.sum() == 1


def test_four_pixel_fixture_has_known_ious():
    tile = sample_from_rasters([[0, 0], [1, 1]])
    pred = np.array([[0, 1], [1, 1]])
    report = metrics(accumulate(ConfusionMatrix(), pred, tile))
    assert report.iou[0] == 1 / 2
    assert report.iou[1] == 2 / 3
    assert all(v is None for v in report.iou[2:])
    assert report.miou == pytest.approx(7 / 12, abs=1e-15)


def test_matches_brute_force_on_random_rasters():
    rng = np.random.default_rng(9)
    for _ in range(20):
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        gt = rng.integers(0, NUM_CLASSES, size=(h, w))
        validity = rng.random((h, w)) < 0.85
        tile = sample_from_rasters(gt, validity=validity)
        pred = rng.integers(0, NUM_CLASSES, size=(h, w))
        conf = accumulate(ConfusionMatrix(), pred, tile)
        expected = brute_force_counts(pred, tile.labels, tile.validity)
        assert np.array_equal(conf.counts, expected)
        assert conf.valid_pixels == int(tile.validity.sum())


def test_accumulate_does_not_mutate_its_input():
    tile = sample_from_rasters([[1]])
    before = ConfusionMatrix()
    accumulate(before, np.array([[1]]), tile)
    assert before.counts.sum() == 0 and before.valid_pixels == 0


def test_merge_is_a_commutative_monoid():
    rng = np.random.default_rng(10)
    mats = [
        ConfusionMatrix(rng.integers(0, 50, (9, 9)).astype(np.int64), int(rng.integers(0, 99)))
        for _ in range(3)
    ]
    a, b, c = mats
    zero = ConfusionMatrix()
    assert np.array_equal(merge(a, zero).counts, a.counts)
    assert np.array_equal(merge(a, b).counts, merge(b, a).counts)
    left = merge(merge(a, b), c)
    right = merge(a, merge(b, c))
    assert np.array_equal(left.counts, right.counts)
    assert left.valid_pixels == right.valid_pixels


def test_merge_guards_against_overflow():
    huge = np.zeros((9, 9), dtype=np.int64)
    huge[0, 0] = np.iinfo(np.int64).max - 1
    bump = np.zeros((9, 9), dtype=np.int64)
    bump[0, 0] = 2
    with pytest.raises(ArithmeticOverflow):
        merge(ConfusionMatrix(huge), ConfusionMatrix(bump))


def test_streaming_equals_batch_accumulation():
    rng = np.random.default_rng(11)
    tiles = []
    preds = []
    for i in range(10):
        gt = rng.integers(0, NUM_CLASSES, size=(6, 6))
        tiles.append(sample_from_rasters(gt))
        preds.append(rng.integers(0, NUM_CLASSES, size=(6, 6)))
    streamed = ConfusionMatrix()
    for pred, tile in zip(preds, tiles):
        streamed = accumulate(streamed, pred, tile)
    merged = ConfusionMatrix()
    for pred, tile in zip(preds, tiles):
        merged = merge(merged, accumulate(ConfusionMatrix(), pred, tile))
    assert np.array_equal(streamed.counts, merged.counts)
    assert streamed.valid_pixels == merged.valid_pixels


def test_absent_classes_are_excluded_not_zero():
    tile = sample_from_rasters([[1, 1]])
    report = metrics(accumulate(ConfusionMatrix(), np.array([[1, 1]]), tile))
    assert report.iou[1] == 1.0
    assert report.iou[3] is None
    assert report.miou == 1.0


def test_empty_confusion_has_no_defined_classes():
    with pytest.raises(NoDefinedClasses):
        metrics(ConfusionMatrix())


def test_iou_stays_in_unit_interval():
    rng = np.random.default_rng(12)
    conf = ConfusionMatrix(rng.integers(0, 100, (9, 9)).astype(np.int64), 1)
    report = metrics(conf)
    for v in report.iou:
        assert v is None or 0.0 <= v <= 1.0
    assert 0.0 <= report.miou <= 1.0


def test_miou_matches_published_reference_row():
    # mean of these nine per-class values is 0.582 after rounding
    ious = (0.777, 0.485, 0.646, 0.481, 0.573, 0.471, 0.779, 0.547, 0.479)
    assert abs(math.fsum(ious) / 9 - 0.582) < 5e-4


def test_report_json_shape_and_key_order():
    tile = sample_from_rasters([[0, 1]])
    conf = accumulate(ConfusionMatrix(), np.array([[0, 1]]), tile)
    report = metrics(conf)
    data = report_dict(report, conf)
    assert list(data) == ["miou", "iou", "class_names", "confusion", "valid_pixels"]
    assert data["class_names"] == list(CLASS_NAMES)
    assert data["valid_pixels"] == 2
    assert data["iou"][2] is None
    text = report_json(report, conf)
    assert ": " not in text and json.loads(text) == json.loads(json.dumps(data))


def test_format_table_layout():
    ious = (0.777, 0.485, 0.646, 0.481, 0.573, 0.471, 0.779, 0.547, 0.479)
    from agriseg.evaluation import MetricsReport

    table = format_table(MetricsReport(iou=ious, miou=math.fsum(ious) / 9))
    lines = table.splitlines()
    assert len(lines) == 2
    assert lines[0].split() == [
        "mIoU", "BG(0)", "DP(1)", "D(2)", "E(3)", "ND(4)",
        "PS(5)", "W(6)", "WW(7)", "WC(8)",
    ]
    assert lines[1].split() == [
        "0.582", "0.777", "0.485", "0.646", "0.481", "0.573",
        "0.471", "0.779", "0.547", "0.479",
    ]
    none_table = format_table(MetricsReport(iou=(1.0,) + (None,) * 8, miou=1.0))
    assert none_table.splitlines()[1].split() == ["1.000", "1.000"] + ["-"] * 8


def _write_dataset(root, tiles):
    from conftest import write_tile

    for tile_id, fg in tiles:
        write_tile(root, tile_id, size=8, labels=fg)


def test_evaluate_predictions_reads_png_and_agsc(tmp_path):
    from agriseg.dataset import ingest_dataset

    root = tmp_path / "data"
    fg = np.zeros((8, 8), dtype=bool)
    fg[:4] = True
    _write_dataset(root, [("a", {2: fg}), ("b", {5: fg})])
    manifest = ingest_dataset(root, "train")
    pred_dir = tmp_path / "preds"
    pred_dir.mkdir()
    tiles = {r.id: r for r in manifest.records}
    from agriseg.dataset import load_tile

    tile_a = load_tile(tiles["a"])
    tile_b = load_tile(tiles["b"])
    # one prediction as a label PNG, the other as a score file
    write_label_raster(np.argmax(predict(PredictorSpec(kind="oracle"), tile_a).scores, axis=2),
                       pred_dir / "a.png")
    write_scores(predict(PredictorSpec(kind="oracle"), tile_b), pred_dir)
    conf, report = evaluate_predictions(manifest, pred_dir)
    assert report.miou == 1.0
    assert conf.valid_pixels == 128
    assert report.iou[2] == 1.0 and report.iou[5] == 1.0 and report.iou[0] == 1.0


def test_evaluate_predictions_requires_every_tile(tmp_path):
    from agriseg.dataset import ingest_dataset

    root = tmp_path / "data"
    _write_dataset(root, [("a", {})])
    manifest = ingest_dataset(root, "train")
    empty = tmp_path / "preds"
    empty.mkdir()
    with pytest.raises(MissingScoreFile):
        evaluate_predictions(manifest, empty)


def test_evaluate_predictions_threads_agree(tmp_path):
    from agriseg.dataset import ingest_dataset, load_tile

    root = tmp_path / "data"
    rng = np.random.default_rng(13)
    tiles = []
    for i in range(6):
        fg = rng.random((8, 8)) < 0.4
        tiles.append((f"t{i}", {1 + i % 8: fg}))
    _write_dataset(root, tiles)
    manifest = ingest_dataset(root, "train")
    pred_dir = tmp_path / "preds"
    pred_dir.mkdir()
    spec = PredictorSpec(kind="noisy-oracle", flip_probability=0.3, seed=4)
    for record in manifest.records:
        write_scores(predict(spec, load_tile(record)), pred_dir)
    conf1, rep1 = evaluate_predictions(manifest, pred_dir, threads=1)
    conf4, rep4 = evaluate_predictions(manifest, pred_dir, threads=4)
    assert np.array_equal(conf1.counts, conf4.counts)
    assert rep1.miou == rep4.miou
