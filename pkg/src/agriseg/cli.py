"""Command-line interface: one executable, one subcommand per pipeline stage.

Every randomized subcommand takes an explicit --seed; there is no implicit
time-based seeding anywhere. Machine-readable results go to files or to
standard output as compact JSON with fixed key order; diagnostics go to
standard error. Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    CLASS_NAMES,
    SPLITS,
    class_counts,
    ingest_dataset,
    load_tile,
    read_manifest,
    write_manifest,
)
from .ensemble import EnsembleConfig, argmax_labels, ensemble_scores, write_label_raster
from .errors import DataError, EmptyDataset, UnknownTileId, UsageError
from .evaluation import evaluate_predictions, format_table, report_json
from .mosaic import MosaicSpec, build_mosaic_dataset
from .predictor import SCOREMAP_FORMAT_VERSION, parse_predictor, predict, read_scores, write_scores
from .resample import apply_plan, plan_resample, read_targets, write_plan
from .synth import SynthConfig, generate_synthetic
from .tta import parse_tta, tta_predict

_JSON_SEP = (",", ":")
log = logging.getLogger("agriseg")


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so errors map to status 1."""

    def error(self, message):
        raise UsageError(message)


def _emit(obj: dict) -> None:
    print(json.dumps(obj, separators=_JSON_SEP))


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required (no implicit time-based seeding)")
    return args.seed


def _thread_count(args) -> int:
    if args.threads < 0:
        raise UsageError("--threads must be >= 0")
    return args.threads if args.threads else (os.cpu_count() or 1)


def _cmd_synth(args) -> None:
    config = SynthConfig(
        tile_count=args.tiles,
        size=args.size,
        seed=_require_seed(args),
        overlap_rate=args.overlap_rate,
    )
    manifest = generate_synthetic(config, args.out)
    _emit({"tiles": len(manifest), "out": str(args.out)})


def _cmd_ingest(args) -> None:
    manifest = ingest_dataset(args.root, args.split, threads=_thread_count(args))
    write_manifest(manifest, args.out)
    _emit({"records": len(manifest), "manifest": str(args.out)})


def _cmd_stats(args) -> None:
    manifest = read_manifest(args.manifest)
    _emit(
        {
            "split": manifest.split,
            "records": len(manifest),
            "counts": list(class_counts(manifest)),
            "class_names": list(CLASS_NAMES),
        }
    )


def _cmd_resample(args) -> None:
    manifest = read_manifest(args.manifest)
    plan = plan_resample(manifest, read_targets(args.targets), _require_seed(args))
    resampled = apply_plan(manifest, plan)
    write_manifest(resampled, args.out)
    if args.plan_out:
        write_plan(plan, args.plan_out)
    _emit({"records": len(resampled), "realized": list(plan.realized)})


def _cmd_mosaic(args) -> None:
    manifest = read_manifest(args.manifest)
    spec = MosaicSpec(factor=args.factor, seed=_require_seed(args))
    result = build_mosaic_dataset(manifest, spec, args.out)
    if args.manifest_out:
        write_manifest(result, args.manifest_out)
    _emit({"factor": args.factor, "tiles": len(result), "out": str(args.out)})


def _cmd_predict(args) -> None:
    # argument syntax is checked before any data is touched
    spec = parse_predictor(args.predictor)
    config = parse_tta(args.tta) if args.tta else None
    manifest = read_manifest(args.manifest)

    unique = []
    seen = set()
    for record in manifest.records:
        if record.id not in seen:
            seen.add(record.id)
            unique.append(record)

    def run(record) -> None:
        tile = load_tile(record)
        if config is None:
            scores = predict(spec, tile)
        else:
            scores = tta_predict(spec, tile, config)
        write_scores(scores, args.out)

    threads = _thread_count(args)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, unique))
    else:
        for record in unique:
            run(record)
    _emit({"tiles": len(unique), "out": str(args.out)})


def _cmd_ensemble(args) -> None:
    dirs = tuple(Path(p) for p in args.inputs.split(",") if p)
    weights = (
        tuple(float(w) for w in args.weights.split(",")) if args.weights else None
    )
    EnsembleConfig(inputs=dirs, weights=weights)  # validates shape early
    ids = sorted(p.stem for p in dirs[0].glob("*.agsc"))
    if not ids:
        raise EmptyDataset(f"no .agsc files in {dirs[0]}")
    for tile_id in ids:
        maps = [read_scores(d / f"{tile_id}.agsc").validate() for d in dirs]
        write_scores(ensemble_scores(maps, weights), args.out)
    _emit({"tiles": len(ids), "out": str(args.out)})


def _cmd_labels(args) -> None:
    paths = sorted(Path(args.scores).glob("*.agsc"))
    if not paths:
        raise EmptyDataset(f"no .agsc files in {args.scores}")
    by_id = {}
    if args.manifest:
        manifest = read_manifest(args.manifest)
        by_id = {record.id: record for record in manifest.records}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in paths:
        scores = read_scores(path).validate()
        if by_id:
            if scores.tile_id not in by_id:
                raise UnknownTileId(f"{scores.tile_id!r} not in {args.manifest}")
            validity = load_tile(by_id[scores.tile_id]).validity
        else:
            validity = np.ones((scores.height, scores.width), dtype=bool)
        write_label_raster(argmax_labels(scores, validity), out_dir / f"{scores.tile_id}.png")
    _emit({"tiles": len(paths), "out": str(args.out)})


def _cmd_evaluate(args) -> None:
    manifest = read_manifest(args.manifest)
    conf, report = evaluate_predictions(manifest, args.pred, threads=_thread_count(args))
    text = report_json(report, conf)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    if args.format == "table":
        print(format_table(report))
    else:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit seed; required by randomized commands")
    common.add_argument("--threads", type=int, default=1, help="worker threads; 0 = auto")
    common.add_argument(
        "--log-level",
        choices=("debug", "info", "warning", "error"),
        default="warning",
    )

    parser = _Parser(prog="agriseg", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"agriseg {__version__} (scoremap format v{SCOREMAP_FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset tree")
    p.add_argument("--tiles", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--overlap-rate", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="scan a dataset tree into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--split", choices=SPLITS, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", parents=[common], help="per-class tile counts of a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("resample", parents=[common], help="rebalance a manifest toward target counts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plan-out", default=None)
    p.set_defaults(func=_cmd_resample)

    p = sub.add_parser("mosaic", parents=[common], help="build a fused k x k down-sampled dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", type=int, choices=(2, 3), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest-out", default=None)
    p.set_defaults(func=_cmd_mosaic)

    p = sub.add_parser("predict", parents=[common], help="run a predictor over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument(
        "--predictor",
        required=True,
        help="oracle | constant:K | noisy-oracle:P:SEED | external:DIR",
    )
    p.add_argument("--tta", default=None, help="comma list: rot90,rot180,rot270,hflip,scale2,scale3,d4")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("ensemble", parents=[common], help="fuse score directories by weighted mean")
    p.add_argument("--inputs", required=True, help="comma-separated score directories")
    p.add_argument("--weights", default=None, help="comma-separated non-negative weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("labels", parents=[common], help="argmax scores into label rasters")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", default=None, help="supplies validity; otherwise all pixels count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_labels)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report", default=None, help="also write the JSON report here")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(message)s"
        )
        args.func(args)
    except UsageError as exc:
        print(f"agriseg: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"agriseg: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
