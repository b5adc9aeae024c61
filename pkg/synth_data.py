"""
Seeded synthetic datasets and the dataset CSV format.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core_types import Dataset, ParseError, ValidationError

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class BlobSpec:
    class_count: int = 4
    feature_dim: int = 10
    samples_per_class: int = 500
    center_scale: float = 3.0
    within_class_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 1 or self.feature_dim < 1 or self.samples_per_class < 1:
            raise ValidationError("blob counts must be positive")
        if not self.center_scale > 0:
            raise ValidationError("center_scale must be > 0")
        if not self.within_class_sigma >= 0:
            raise ValidationError("within_class_sigma must be >= 0")

    @classmethod
    def from_config(cls, config):
        return cls(
            class_count=config.blob_classes,
            feature_dim=config.blob_feature_dim,
            samples_per_class=config.blob_samples_per_class,
            center_scale=config.blob_center_scale,
            within_class_sigma=config.blob_sigma,
            seed=config.seed,
        )


def generate_blobs(blob_spec: BlobSpec):
    """Gaussian blobs around uniform random centers; returns (train, test)."""
    rng = np.random.default_rng(blob_spec.seed)
    c, d, n = blob_spec.class_count, blob_spec.feature_dim, blob_spec.samples_per_class
    centers = rng.uniform(-blob_spec.center_scale, blob_spec.center_scale, size=(c, d))
    n_train = int(round(n * TRAIN_FRACTION))

    train_x, train_y, test_x, test_y = [], [], [], []
    for k in range(c):
        x = centers[k] + blob_spec.within_class_sigma * rng.standard_normal((n, d))
        order = rng.permutation(n)
        train_x.append(x[order[:n_train]])
        test_x.append(x[order[n_train:]])
        train_y.append(np.full(n_train, k))
        test_y.append(np.full(n - n_train, k))

    def _shuffled(xs, ys, tag):
        x, y = np.concatenate(xs), np.concatenate(ys)
        order = rng.permutation(len(y))
        return Dataset(x[order], y[order], c, split_tag=tag)

    train = _shuffled(train_x, train_y, "train")
    test = _shuffled(test_x, test_y, "test") if n_train < n else None
    logger.debug(f"Generated blobs C={c} D={d}: {len(train)} train rows")
    return train, test


def read_csv_dataset(path, class_count: int, split_tag: str = "train") -> Dataset:
    """Read a headerless CSV whose last column is the integer label."""
    path = Path(path)
    rows, labels = [], []
    width = None
    with path.open("r", encoding="utf-8", newline="") as f:
        for rowno, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ParseError("need at least one feature and a label", rowno, path)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"ragged row: {len(row)} columns, expected {width}", rowno, path)
            try:
                feats = [float(cell) for cell in row[:-1]]
            except ValueError:
                raise ParseError("non-numeric feature cell", rowno, path)
            try:
                label = int(row[-1])
            except ValueError:
                raise ParseError(f"label {row[-1]!r} is not an integer", rowno, path)
            if not 0 <= label < class_count:
                raise ParseError(f"label {label} outside [0, {class_count})", rowno, path)
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise ParseError("no data rows", None, path)
    return Dataset(np.array(rows), np.array(labels), class_count, split_tag=split_tag)


def write_csv_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in the format read_csv_dataset accepts."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
