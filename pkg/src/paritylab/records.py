"""Experiment record schema, CSV serialization and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

SCHEMA_VERSION = "parity-lab/1"
CSV_HEADER = ("recipe", "params_hash", "seed", "step", "metric", "value")

# every metric a recipe may emit; report/figures reject anything else
METRIC_REGISTRY = frozenset(
    {
        "test_accuracy",
        "train_loss",
        "epoch_train_loss",
        "final_accuracy",
        "gal",
        "gal_se",
        "delta_abs",
        "nonzero_updates",
    }
)


@dataclass(frozen=True)
class ExperimentRecord:
    """One CSV row of a run."""

    recipe: str
    params_hash: str
    seed: int
    step: int
    metric: str
    value: float

    def __post_init__(self) -> None:
        if self.metric not in METRIC_REGISTRY:
            raise ValueError(f"metric {self.metric!r} not in the registry")

    def to_row(self) -> list[str]:
        value = "NaN" if math.isnan(self.value) else repr(float(self.value))
        return [self.recipe, self.params_hash, str(self.seed), str(self.step), self.metric, value]

    @staticmethod
    def from_row(row: list[str]) -> "ExperimentRecord":
        recipe, params_hash, seed, step, metric, value = row
        return ExperimentRecord(recipe, params_hash, int(seed), int(step), metric, float(value))


def params_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def stream_seed(seed: int, recipe: str, phash: str) -> int:
    """Per-job random stream derived from the user seed and the job identity."""
    blob = f"{seed}:{recipe}:{phash}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def write_records_csv(path: Path, records: list[ExperimentRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(rec.to_row())


def read_records_csv(path: Path) -> list[ExperimentRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        return [ExperimentRecord.from_row(row) for row in reader]


def write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
