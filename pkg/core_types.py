"""
Shared domain types for the label-proportion learner.

Everything here is an immutable value after construction. Numeric arrays are
stored read-only so they can be shared between worker threads.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

SPLIT_TAGS = ("train", "test")

# Tolerances: exact-rational sums vs post-softmax sums
RATIONAL_SUM_TOL = 1e-12
PROB_SUM_TOL = 1e-9
COUNT_MATCH_TOL = 1e-9


# -------------------- Errors --------------------
class LLPError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(LLPError):
    """An invariant of a domain value does not hold."""

    def __init__(self, message: str, violations: Sequence[str] = ()):
        self.violations = list(violations) or [message]
        super().__init__(message)


class ParseError(LLPError):
    """A file could not be parsed. Carries the offending line/row number."""

    def __init__(self, message: str, lineno: Optional[int] = None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(LLPError):
    """Invalid configuration. `problems` maps field name to message."""

    def __init__(self, problems: Dict[str, str]):
        self.problems = dict(problems)
        detail = "; ".join(f"{k}: {v}" for k, v in self.problems.items())
        super().__init__(f"invalid config ({detail})")


class StaleTraceError(LLPError):
    """backward() was given a trace recorded against different parameters."""


class OutputExistsError(LLPError):
    """Refusing to overwrite an existing results directory."""


# -------------------- Dataset --------------------
def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    split_tag: str = "train"

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.int64, copy=True)
        if x.ndim != 2:
            raise ValidationError(f"features must be a matrix, got {x.ndim} dims")
        problems = []
        if self.class_count < 2:
            problems.append(f"class_count must be >= 2, got {self.class_count}")
        if x.shape[1] < 1:
            problems.append("feature dimension must be >= 1")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            problems.append(f"{x.shape[0]} feature rows but {y.size} labels")
        elif y.size and (y.min() < 0 or y.max() >= self.class_count):
            problems.append(f"labels must lie in [0, {self.class_count})")
        if self.split_tag not in SPLIT_TAGS:
            problems.append(f"split_tag must be one of {SPLIT_TAGS}")
        if problems:
            raise ValidationError(problems[0], problems)
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def fingerprint(self) -> str:
        """Short content hash used as the source id of bag collections."""
        h = hashlib.sha1()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(str(self.class_count).encode())
        return h.hexdigest()[:16]

    def class_counts(self, indices=None) -> np.ndarray:
        y = self.labels if indices is None else self.labels[np.asarray(indices, dtype=np.int64)]
        return np.bincount(y, minlength=self.class_count)


# -------------------- Bags --------------------
def proportions_from_counts(counts) -> Tuple[float, ...]:
    """Turn per-class counts into a proportion vector."""
    c = [int(v) for v in counts]
    if any(v < 0 for v in c):
        raise ValidationError("counts must be non-negative")
    total = sum(c)
    if total == 0:
        raise ValidationError("empty bag")
    return tuple(v / total for v in c)


@dataclass(frozen=True)
class Bag:
    """M dataset rows sharing one proportion label. Counts are canonical."""
    instance_indices: Tuple[int, ...]
    counts: Tuple[int, ...]
    proportions: Tuple[float, ...]

    @classmethod
    def from_counts(cls, indices, counts) -> "Bag":
        counts = tuple(int(v) for v in counts)
        return cls(tuple(int(i) for i in indices), counts, proportions_from_counts(counts))

    @property
    def size(self) -> int:
        return len(self.instance_indices)

    @property
    def class_count(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class BagCollection:
    bags: Tuple[Bag, ...]
    source_dataset_id: str = ""

    def __len__(self) -> int:
        return len(self.bags)

    def __iter__(self):
        return iter(self.bags)

    def __getitem__(self, i) -> Bag:
        return self.bags[i]

    @property
    def bag_size(self) -> int:
        return self.bags[0].size if self.bags else 0

    def all_indices(self) -> List[int]:
        return [i for b in self.bags for i in b.instance_indices]


def validate_bag(bag: Bag, dataset: Dataset) -> List[str]:
    """Return every violated Bag invariant; an empty list means the bag is ok."""
    violations = []
    m = len(bag.instance_indices)
    c = dataset.class_count
    if m == 0:
        return ["bag is empty"]
    if len(set(bag.instance_indices)) != m:
        violations.append("indices not unique")
    out_of_range = [i for i in bag.instance_indices if i < 0 or i >= len(dataset)]
    if out_of_range:
        violations.append(f"index {out_of_range[0]} out of range for dataset of {len(dataset)}")
    if len(bag.counts) != c or len(bag.proportions) != c:
        violations.append(f"counts/proportions must have length C={c}")
        return violations
    if any(v < 0 for v in bag.counts):
        violations.append("counts must be non-negative")
    if sum(bag.counts) != m:
        violations.append(f"counts sum to {sum(bag.counts)}, expected M={m}")
    if abs(math.fsum(bag.proportions) - 1.0) > RATIONAL_SUM_TOL:
        violations.append("proportions do not sum to 1")
    for k, (p, n) in enumerate(zip(bag.proportions, bag.counts)):
        if not 0.0 <= p <= 1.0:
            violations.append(f"proportions[{k}] outside [0, 1]")
        if abs(p * m - n) > COUNT_MATCH_TOL:
            violations.append(f"proportions[{k}]×M ≠ counts[{k}]")
    if not out_of_range:
        actual = dataset.class_counts(bag.instance_indices)
        if tuple(int(v) for v in actual) != tuple(bag.counts):
            violations.append("counts do not match dataset labels")
    return violations


def validate_collection(collection: BagCollection, dataset: Dataset) -> List[str]:
    """Validate every bag plus pairwise disjointness."""
    violations = []
    seen = {}
    for b, bag in enumerate(collection.bags):
        violations.extend(f"bag {b}: {v}" for v in validate_bag(bag, dataset))
        for i in bag.instance_indices:
            if i in seen and seen[i] != b:
                violations.append(f"bag {b}: index {i} also in bag {seen[i]}")
            seen[i] = b
    return violations


# -------------------- Predictions and weights --------------------
@dataclass(frozen=True, eq=False)
class Prediction:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64, copy=True)
        if p.ndim != 1 or np.any(p < 0) or np.any(p > 1):
            raise ValidationError("prediction must be a vector with entries in [0, 1]")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ValidationError(f"prediction sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def class_index(self) -> int:
        # np.argmax returns the first maximum, i.e. the smallest index on ties
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class PseudoLabel:
    class_index: int
    class_count: int

    @property
    def onehot(self) -> Tuple[int, ...]:
        return tuple(1 if c == self.class_index else 0 for c in range(self.class_count))


@dataclass(frozen=True, eq=False)
class DewWeights:
    """Per-instance weight factors for one bag (or a stack of bags)."""
    bag_weight: np.ndarray
    instance_weight: np.ndarray
    combined: np.ndarray

    def __len__(self) -> int:
        return int(np.size(self.combined))


# -------------------- Training configuration --------------------
def _default_seed() -> int:
    from config import DEFAULT_SEED
    return DEFAULT_SEED


def _default_workers() -> int:
    from config import DEFAULT_WORKERS
    return DEFAULT_WORKERS


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.5
    beta_b: float = 1.0
    beta_i: float = 1.0
    bag_size: int = 16
    bags_per_step: int = 4
    lr0: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 5e-4
    total_steps: int = 0  # 0 derives K from epochs
    epochs: int = 200
    seed: int = field(default_factory=_default_seed)
    ablation_use_bag_weight: bool = True
    ablation_use_instance_weight: bool = True
    weak_noise_sigma: float = 0.05  # multiples of per-feature training std
    strong_noise_sigma: float = 0.15
    strong_dropout_rate: float = 0.2
    hidden_sizes: Tuple[int, ...] = (64,)
    fully_supervised: bool = False
    workers: int = field(default_factory=_default_workers)
    data_path: str = ""
    test_data_path: str = ""
    class_count: int = 0
    blob_classes: int = 4
    blob_feature_dim: int = 10
    blob_samples_per_class: int = 500
    blob_center_scale: float = 3.0
    blob_sigma: float = 1.0

    def validate(self) -> Dict[str, str]:
        """Return {field: message} for every invalid field."""
        p = {}
        if not self.lam >= 0:
            p["lam"] = "must be >= 0"
        elif self.fully_supervised and self.lam == 0:
            p["lam"] = "must be > 0 when fully_supervised"
        if not self.beta_b > 0:
            p["beta_b"] = "must be > 0"
        if not self.beta_i > 0:
            p["beta_i"] = "must be > 0"
        if self.bag_size < 1:
            p["bag_size"] = "must be >= 1"
        if self.bags_per_step < 1:
            p["bags_per_step"] = "must be a positive integer"
        if not self.lr0 > 0:
            p["lr0"] = "must be > 0"
        if not 0 <= self.momentum < 1:
            p["momentum"] = "must lie in [0, 1)"
        if not self.weight_decay >= 0:
            p["weight_decay"] = "must be >= 0"
        if self.total_steps < 0:
            p["total_steps"] = "must be >= 0"
        if self.epochs < 0:
            p["epochs"] = "must be >= 0"
        if not 0 <= self.seed < 2 ** 64:
            p["seed"] = "must be a non-negative 64-bit integer"
        if not self.weak_noise_sigma >= 0:
            p["weak_noise_sigma"] = "must be >= 0"
        if not self.strong_noise_sigma >= 0:
            p["strong_noise_sigma"] = "must be >= 0"
        if not 0 <= self.strong_dropout_rate < 1:
            p["strong_dropout_rate"] = "must lie in [0, 1)"
        if any(h < 1 for h in self.hidden_sizes):
            p["hidden_sizes"] = "entries must be positive integers"
        if self.workers < 1:
            p["workers"] = "must be >= 1"
        if self.data_path and self.class_count < 2:
            p["class_count"] = "must be >= 2 when data_path is set"
        if not self.data_path:
            if self.blob_classes < 2:
                p["blob_classes"] = "must be >= 2"
            if self.blob_feature_dim < 1:
                p["blob_feature_dim"] = "must be >= 1"
            if self.blob_samples_per_class < 1:
                p["blob_samples_per_class"] = "must be >= 1"
            if not self.blob_center_scale > 0:
                p["blob_center_scale"] = "must be > 0"
            if not self.blob_sigma >= 0:
                p["blob_sigma"] = "must be >= 0"
        return p

    def check(self) -> "TrainConfig":
        problems = self.validate()
        if problems:
            raise ConfigError(problems)
        return self

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]
