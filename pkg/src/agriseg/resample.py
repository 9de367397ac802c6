"""Class-balanced resampling: plan tile multiplicities toward target counts.

A plan assigns every tile a multiplicity (0 duplicates it away, k > 1
repeats it), so that the per-class tile counts of the expanded manifest land
near the given targets. Multi-label tiles couple the classes, so exact
targets are generally infeasible; realized counts must reach at least 0.9x
of each managed target and down-sampling stops once counts fall to 1.25x or
below.

Targets are 9 non-negative integers. A zero target means the class is not
managed: the planner neither raises nor lowers it and it is exempt from the
tolerance band. This is how real target files express "leave the rare
classes alone" without listing a count for every class.

The procedure is greedy and fully deterministic:

  (a) every tile starts at multiplicity 1;
  (b) while some managed class is short, increment the tile (cap 8) with the
      largest sum of deficit_c / target_c over the short classes it
      contains, breaking ties by lexicographically smallest id;
  (c) repeatedly sweep, in seeded-shuffle order, tiles whose managed present
      classes all sit strictly above target, decrementing them (floor 0)
      until a full sweep changes nothing.

Step (b) stalling with some class still below 0.9x target is an error; the
exact-Fraction scores keep the argmax free of float noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .dataset import Manifest, NUM_CLASSES, TileRecord
from .errors import (
    CorruptPlan,
    DuplicateTileId,
    EmptyManifest,
    UnknownTileId,
    UnreachableTarget,
    UsageError,
)
from .rng import SplitMix64, derive_seed

MULTIPLICITY_CAP = 8
_JSON_SEP = (",", ":")


@dataclass(frozen=True)
class TargetCounts:
    """Per-class target tile counts; 0 marks a class as unmanaged."""

    targets: tuple[int, ...]

    def __post_init__(self):
        if len(self.targets) != NUM_CLASSES:
            raise UsageError(f"targets needs {NUM_CLASSES} entries")
        if any(t < 0 or t != int(t) for t in self.targets):
            raise UsageError("targets must be non-negative integers")

    @property
    def managed(self) -> tuple[int, ...]:
        return tuple(c for c in range(NUM_CLASSES) if self.targets[c] > 0)


@dataclass
class SamplePlan:
    """Multiplicity per tile, in manifest order, plus the realized counts."""

    entries: list[tuple[str, int]]
    seed: int
    realized: tuple[int, ...]


def read_targets(path: Path | str) -> TargetCounts:
    """Load a targets file: a JSON object {"targets": [9 integers]}."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        values = obj["targets"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"bad targets file {path}: {exc}") from exc
    if not isinstance(values, list):
        raise UsageError(f"bad targets file {path}: targets must be a list")
    return TargetCounts(tuple(int(v) for v in values))


def _presence_by_id(manifest: Manifest) -> dict[str, tuple[bool, ...]]:
    presence: dict[str, tuple[bool, ...]] = {}
    for record in manifest.records:
        if record.id in presence:
            raise DuplicateTileId(f"planning needs unique ids, {record.id!r} repeats")
        presence[record.id] = record.presence
    return presence


def plan_resample(manifest: Manifest, targets: TargetCounts, seed: int) -> SamplePlan:
    """Compute a deterministic SamplePlan taking ``manifest`` toward ``targets``."""
    if not manifest.records:
        raise EmptyManifest("cannot plan on an empty manifest")
    presence = _presence_by_id(manifest)
    ids = [record.id for record in manifest.records]
    goal = targets.targets
    managed = targets.managed

    containing = {c: [i for i in ids if presence[i][c]] for c in managed}
    for c in managed:
        if not containing[c]:
            raise UnreachableTarget(c, 0)

    mult = {i: 1 for i in ids}
    realized = [0] * NUM_CLASSES
    for i in ids:
        for c in range(NUM_CLASSES):
            if presence[i][c]:
                realized[c] += 1

    # (b) greedy duplication: favor tiles dense in the most-deficient classes.
    while True:
        short = [c for c in managed if realized[c] < goal[c]]
        if not short:
            break
        best_id = None
        best_score = Fraction(0)
        for i in ids:
            if mult[i] >= MULTIPLICITY_CAP:
                continue
            score = sum(
                (Fraction(goal[c] - realized[c], goal[c]) for c in short if presence[i][c]),
                Fraction(0),
            )
            if score > best_score or (score == best_score > 0 and i < best_id):
                best_id = i
                best_score = score
        if best_id is None:
            for c in short:
                if 10 * realized[c] < 9 * goal[c]:
                    raise UnreachableTarget(c, MULTIPLICITY_CAP * len(containing[c]))
            break  # stalled inside tolerance: accept
        mult[best_id] += 1
        for c in range(NUM_CLASSES):
            if presence[best_id][c]:
                realized[c] += 1

    # (c) seeded down-sampling of tiles made entirely of surplus classes.
    rng = SplitMix64(derive_seed(seed, "downsample"))
    while True:
        candidates = [i for i in ids if mult[i] > 0 and _all_surplus(presence[i], managed, realized, goal)]
        if not candidates:
            break
        rng.shuffle(candidates)
        changed = False
        for i in candidates:
            if mult[i] > 0 and _all_surplus(presence[i], managed, realized, goal):
                mult[i] -= 1
                for c in range(NUM_CLASSES):
                    if presence[i][c]:
                        realized[c] -= 1
                changed = True
        if not changed:
            break

    return SamplePlan(
        entries=[(i, mult[i]) for i in ids],
        seed=seed,
        realized=tuple(realized),
    )


def _all_surplus(tile_presence, managed, realized, goal) -> bool:
    """True when the tile's managed classes are non-empty and all above target."""
    hit = False
    for c in managed:
        if tile_presence[c]:
            if realized[c] <= goal[c]:
                return False
            hit = True
    return hit


def apply_plan(manifest: Manifest, plan: SamplePlan) -> Manifest:
    """Expand a manifest per the plan: each tile repeated multiplicity times.

    Occurrences of one tile are adjacent and carry ordinals 0..m-1, so a
    multiplicity-1 tile round-trips as exactly its input record.
    """
    by_id = {record.id: record for record in manifest.records}
    records: list[TileRecord] = []
    for tile_id, multiplicity in plan.entries:
        if tile_id not in by_id:
            raise UnknownTileId(f"plan references {tile_id!r}, not in manifest")
        base = by_id[tile_id]
        for k in range(multiplicity):
            records.append(base if k == 0 else TileRecord(base.id, base.paths, base.presence, k))
    source = manifest.provenance or manifest.split
    return Manifest(
        split=manifest.split,
        records=records,
        provenance=f"resampled from {source} with seed {plan.seed}",
    )


def write_plan(plan: SamplePlan, path: Path | str) -> None:
    obj = {
        "seed": plan.seed,
        "entries": [[tile_id, mult] for tile_id, mult in plan.entries],
        "realized": list(plan.realized),
    }
    Path(path).write_text(json.dumps(obj, separators=_JSON_SEP) + "\n", encoding="utf-8")


def read_plan(path: Path | str) -> SamplePlan:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [(str(tile_id), int(mult)) for tile_id, mult in obj["entries"]]
        seed = int(obj["seed"])
        realized = tuple(int(v) for v in obj["realized"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorruptPlan(f"bad plan file {path}: {exc}") from exc
    if len(realized) != NUM_CLASSES or any(m < 0 for _, m in entries):
        raise CorruptPlan(f"bad plan file {path}: malformed entries or realized counts")
    return SamplePlan(entries=entries, seed=seed, realized=realized)
