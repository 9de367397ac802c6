"""Overlap-aware confusion accumulation, IoU/mIoU metrics, report output.

Ground truth here is multi-label: a valid pixel carries a set L of classes.
The accumulation rule credits a prediction p that hits any label in L as a
true positive for p alone (counts[p][p] += 1); a complete miss charges one
event counts[l][p] for every l in L. Integer events keep the matrix exact,
so matrices merge associatively and evaluation parallelizes over any tile
partition without changing a single count.

IoU for class c is diag / (row + col - diag) over the accumulated events;
classes whose denominator is zero never appeared and are excluded from the
mean. On tiny synthetic sets that exclusion is routine, on a full split all
9 classes are defined and the mean runs over all of them.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CLASS_NAMES, CLASS_SHORT, NUM_CLASSES, TileRecord, TileSample, load_tile
from .ensemble import argmax_labels, read_label_raster
from .errors import ArithmeticOverflow, DimensionMismatch, MissingScoreFile, NoDefinedClasses
from .predictor import read_scores

_JSON_SEP = (",", ":")
_INT64_MAX = np.iinfo(np.int64).max


@dataclass
class ConfusionMatrix:
    """9x9 int64 event counts plus the number of valid pixels seen."""

    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    )
    valid_pixels: int = 0

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts.copy(), self.valid_pixels)


@dataclass
class MetricsReport:
    """Per-class IoU (None where undefined) and their mean."""

    iou: tuple
    miou: float
    class_names: tuple[str, ...] = CLASS_NAMES


def accumulate(conf: ConfusionMatrix, pred: np.ndarray, gt: TileSample) -> ConfusionMatrix:
    """Return ``conf`` plus the events of one tile's prediction.

    ``pred`` is an (H, W) integer label raster. Only valid pixels count.
    """
    if pred.shape != gt.validity.shape:
        raise DimensionMismatch(
            f"tile {gt.id!r}: prediction is {pred.shape}, tile is {gt.validity.shape}"
        )
    out = conf.copy()
    valid = gt.validity
    pred_v = pred[valid].astype(np.int64)
    labels_v = gt.labels[:, valid]
    n = pred_v.size

    hit = labels_v[pred_v, np.arange(n)]
    diag = np.bincount(pred_v[hit], minlength=NUM_CLASSES)
    out.counts[np.arange(NUM_CLASSES), np.arange(NUM_CLASSES)] += diag

    miss_pred = pred_v[~hit]
    miss_labels = labels_v[:, ~hit]
    for l in range(NUM_CLASSES):
        row = np.bincount(miss_pred[miss_labels[l]], minlength=NUM_CLASSES)
        out.counts[l] += row
    out.valid_pixels += int(n)
    return out


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Entrywise sum; the zero matrix is the identity."""
    if (a.counts > _INT64_MAX - b.counts).any():
        raise ArithmeticOverflow("confusion counts exceed 64-bit range")
    return ConfusionMatrix(a.counts + b.counts, a.valid_pixels + b.valid_pixels)


def metrics(conf: ConfusionMatrix) -> MetricsReport:
    """Per-class IoU and the mean over defined classes."""
    iou = []
    for c in range(NUM_CLASSES):
        d = int(conf.counts[c, c])
        denom = int(conf.counts[c].sum()) + int(conf.counts[:, c].sum()) - d
        iou.append(d / denom if denom else None)
    defined = [v for v in iou if v is not None]
    if not defined:
        raise NoDefinedClasses("no class has any event")
    return MetricsReport(iou=tuple(iou), miou=math.fsum(defined) / len(defined))


def report_dict(report: MetricsReport, conf: ConfusionMatrix) -> dict:
    """Report as a JSON-ready dict with fixed key order."""
    return {
        "miou": report.miou,
        "iou": list(report.iou),
        "class_names": list(report.class_names),
        "confusion": conf.counts.tolist(),
        "valid_pixels": conf.valid_pixels,
    }


def report_json(report: MetricsReport, conf: ConfusionMatrix) -> str:
    return json.dumps(report_dict(report, conf), separators=_JSON_SEP)


def _tile_events(record: TileRecord, pred_dir: Path) -> ConfusionMatrix:
    """Confusion events of one tile against its prediction on disk.

    Predictions are looked up as ``<id>.png`` (a label raster) first, then
    ``<id>.agsc`` (scores, argmax applied with the standard tie-break).
    """
    gt = load_tile(record)
    png = pred_dir / f"{record.id}.png"
    agsc = pred_dir / f"{record.id}.agsc"
    if png.is_file():
        pred = read_label_raster(png)
    elif agsc.is_file():
        pred = argmax_labels(read_scores(agsc).validate(), gt.validity)
    else:
        raise MissingScoreFile(f"no prediction {png.name} or {agsc.name} in {pred_dir}")
    return accumulate(ConfusionMatrix(), pred, gt)


def evaluate_predictions(
    manifest, pred_dir: Path | str, *, threads: int = 1
) -> tuple[ConfusionMatrix, MetricsReport]:
    """Accumulate every manifest tile against ``pred_dir`` and compute metrics.

    Tiles are independent; with several threads the per-tile matrices merge
    in manifest order, and integer merging makes any order equivalent anyway.
    """
    pred_dir = Path(pred_dir)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: _tile_events(r, pred_dir), manifest.records))
    else:
        parts = [_tile_events(record, pred_dir) for record in manifest.records]
    total = ConfusionMatrix()
    for part in parts:
        total = merge(total, part)
    return total, metrics(total)


def format_table(report: MetricsReport) -> str:
    """Two-line table: mIoU column, then one short-named column per class."""
    headers = ["mIoU"] + [f"{CLASS_SHORT[c]}({c})" for c in range(NUM_CLASSES)]
    values = [f"{report.miou:.3f}"] + [
        "-" if v is None else f"{v:.3f}" for v in report.iou
    ]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    body = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    return head + "\n" + body
