"""agriseg: deterministic multi-label aerial-imagery pipeline and evaluation.

Dataset ingest and synthesis, class-balanced resampling, mosaic multi-scale
dataset construction, pluggable predictors with test-time augmentation,
probability ensembling, and overlap-aware mean-IoU evaluation, all seeded
and reproducible down to the byte.
"""

__version__ = "0.1.0"

from .dataset import (
    CLASS_NAMES,
    CLASS_SHORT,
    NUM_CLASSES,
    Manifest,
    TileRecord,
    TileSample,
    class_counts,
    ingest_dataset,
    load_tile,
    read_manifest,
    write_manifest,
)
from .ensemble import EnsembleConfig, argmax_labels, ensemble_scores
from .errors import AgrisegError, DataError, UsageError
from .evaluation import (
    ConfusionMatrix,
    MetricsReport,
    accumulate,
    evaluate_predictions,
    merge,
    metrics,
)
from .mosaic import MosaicSpec, build_mosaic_dataset, mosaic_grid
from .predictor import PredictorSpec, ScoreMap, predict, read_scores, write_scores
from .resample import SamplePlan, TargetCounts, apply_plan, plan_resample
from .synth import SynthConfig, generate_synthetic
from .tta import D4, IDENTITY, TtaConfig, TtaTransform, tta_predict

__all__ = [
    "__version__",
    "AgrisegError",
    "DataError",
    "UsageError",
    "CLASS_NAMES",
    "CLASS_SHORT",
    "NUM_CLASSES",
    "Manifest",
    "TileRecord",
    "TileSample",
    "class_counts",
    "ingest_dataset",
    "load_tile",
    "read_manifest",
    "write_manifest",
    "SynthConfig",
    "generate_synthetic",
    "TargetCounts",
    "SamplePlan",
    "plan_resample",
    "apply_plan",
    "MosaicSpec",
    "mosaic_grid",
    "build_mosaic_dataset",
    "PredictorSpec",
    "ScoreMap",
    "predict",
    "read_scores",
    "write_scores",
    "TtaTransform",
    "TtaConfig",
    "IDENTITY",
    "D4",
    "tta_predict",
    "EnsembleConfig",
    "ensemble_scores",
    "argmax_labels",
    "ConfusionMatrix",
    "MetricsReport",
    "accumulate",
    "merge",
    "metrics",
    "evaluate_predictions",
]
