"""
Training diagnostics and result files.

metrics.jsonl gets one JSON object per epoch; summary.csv one row per run.
Neither contains timestamps, so identical runs produce identical files.
"""
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

import model
from core_types import Dataset, ValidationError
from dew import entropy

logger = logging.getLogger(__name__)

SUMMARY_FIELDS = [
    "mode", "bag_size", "seed", "test_accuracy",
    "pseudo_label_accuracy", "mean_normalized_entropy", "mean_weight",
]


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    bag_loss: float
    instance_loss: float
    pseudo_label_accuracy: float
    mean_normalized_entropy: float
    mean_weight: float
    mean_bag_weight: float
    mean_instance_weight: float
    test_accuracy: Optional[float] = None

    def __post_init__(self):
        for name in ("pseudo_label_accuracy", "mean_normalized_entropy", "mean_weight",
                     "mean_bag_weight", "mean_instance_weight", "test_accuracy"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name}={v} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)


def pseudo_label_accuracy(weak_predictions, true_labels) -> float:
    """Share of rows whose hardened weak prediction equals the true label."""
    p = np.asarray(weak_predictions).reshape(-1, np.shape(weak_predictions)[-1])
    y = np.asarray(true_labels).reshape(-1)
    if y.size == 0:
        return 0.0
    return float(np.mean(np.argmax(p, axis=1) == y))


def mean_normalized_entropy(weak_predictions, class_count: int) -> float:
    """Mean of H(prediction) / ln C over rows of soft weak predictions."""
    if class_count < 2:
        raise ValidationError("normalized entropy needs C >= 2")
    p = np.asarray(weak_predictions).reshape(-1, class_count)
    if p.shape[0] == 0:
        return 0.0
    v = float(np.mean(entropy(p, axis=1)) / math.log(class_count))
    return min(max(v, 0.0), 1.0)


def test_accuracy(params, test_dataset: Dataset) -> float:
    """Argmax accuracy on un-augmented inputs."""
    if test_dataset is None or len(test_dataset) == 0:
        raise ValidationError("empty test set")
    probs = model.predict(params, test_dataset.features)
    return float(np.mean(np.argmax(probs, axis=1) == test_dataset.labels))


def export_features(params, dataset: Dataset, path) -> None:
    """Write penultimate activations, one row per instance, label last."""
    feats = model.penultimate_features(params, dataset.features)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        for row, label in zip(feats, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])
    logger.info(f"Exported {len(dataset)} feature rows to {path}")


# -------------------- Result files --------------------
class MetricsWriter:
    """Appends EpochMetrics rows to metrics.jsonl as they are produced."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def __call__(self, row: EpochMetrics) -> None:
        with self.path.open("a", encoding="utf-8") as f:
            f.write(row.to_json() + "\n")


def read_metrics(path):
    rows = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rows.append(EpochMetrics(**json.loads(line)))
    return rows


def summary_row(mode, bag_size, seed, history):
    """Summarize the final epoch of a run."""
    last = history[-1] if history else None

    def _get(name):
        v = getattr(last, name) if last else None
        return "" if v is None else repr(float(v))

    return {
        "mode": mode,
        "bag_size": int(bag_size),
        "seed": int(seed),
        "test_accuracy": _get("test_accuracy"),
        "pseudo_label_accuracy": _get("pseudo_label_accuracy"),
        "mean_normalized_entropy": _get("mean_normalized_entropy"),
        "mean_weight": _get("mean_weight"),
    }


def write_csv(path, fieldnames, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def write_summary(path, rows) -> None:
    write_csv(path, SUMMARY_FIELDS, rows)


def read_summary(path):
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def mean_std(values):
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), std
