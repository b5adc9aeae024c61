"""
Disjoint fixed-size bag generation and the bag file format.

Bag file layout (one record per line after the header):

    #llp-bags v1 C=<C> M=<M>
    <bag_id>\t<i1,i2,...>\t<m_0,m_1,...>
"""
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from core_types import (
    Bag, BagCollection, Dataset, ParseError, ValidationError, validate_collection
)

logger = logging.getLogger(__name__)

HEADER_RE = re.compile(r"^#llp-bags v1 C=(\d+) M=(\d+)$")


@dataclass(frozen=True)
class BagFileRecord:
    bag_id: int
    instance_indices: Tuple[int, ...]
    counts: Tuple[int, ...]

    def to_line(self) -> str:
        return "\t".join([
            str(self.bag_id),
            ",".join(str(i) for i in self.instance_indices),
            ",".join(str(m) for m in self.counts),
        ])


def generate_bags(dataset: Dataset, bag_size: int, seed: int) -> BagCollection:
    """Shuffle all rows with `seed`, chunk into bags of `bag_size`, drop the rest."""
    n = len(dataset)
    if bag_size < 1:
        raise ValidationError("bag size must be >= 1")
    if n == 0:
        raise ValidationError("dataset is empty")
    if bag_size > n:
        raise ValidationError("bag size exceeds dataset")
    order = np.random.default_rng(seed).permutation(n)
    n_bags = n // bag_size
    dropped = n - n_bags * bag_size
    if dropped:
        logger.warning(f"Dropping {dropped} leftover samples (N={n}, M={bag_size})")
    bags = []
    for b in range(n_bags):
        idx = order[b * bag_size:(b + 1) * bag_size]
        bags.append(Bag.from_counts(idx.tolist(), dataset.class_counts(idx).tolist()))
    return BagCollection(tuple(bags), dataset.fingerprint())


def write_bags(collection: BagCollection, path) -> None:
    """Write a collection; all values are integers so the round trip is exact."""
    if not collection.bags:
        raise ValidationError("cannot write an empty bag collection")
    c = collection.bags[0].class_count
    lines = [f"#llp-bags v1 C={c} M={collection.bag_size}"]
    for b, bag in enumerate(collection.bags):
        lines.append(BagFileRecord(b, bag.instance_indices, bag.counts).to_line())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _int_list(text, what, lineno, path):
    try:
        return tuple(int(v) for v in text.split(",")) if text.strip() else ()
    except ValueError:
        raise ParseError(f"{what} must be comma-separated integers", lineno, path)


def read_bags(path, dataset: Dataset) -> BagCollection:
    """Read and validate a bag file against `dataset`."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError("empty bag file", 1, path)
    m = HEADER_RE.match(lines[0].strip())
    if not m:
        raise ParseError("missing or malformed '#llp-bags v1' header", 1, path)
    c, bag_size = int(m.group(1)), int(m.group(2))
    if c != dataset.class_count:
        raise ParseError(f"file has C={c}, dataset has C={dataset.class_count}", 1, path)

    bags = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno, path)
        try:
            bag_id = int(parts[0])
        except ValueError:
            raise ParseError("bag_id must be an integer", lineno, path)
        if bag_id != len(bags):
            raise ParseError(f"bag_id {bag_id} out of sequence", lineno, path)
        rec = BagFileRecord(
            bag_id,
            _int_list(parts[1], "indices", lineno, path),
            _int_list(parts[2], "counts", lineno, path),
        )
        if len(rec.instance_indices) != bag_size:
            raise ParseError(f"bag has {len(rec.instance_indices)} indices, header says M={bag_size}",
                             lineno, path)
        if len(rec.counts) != c:
            raise ParseError(f"bag has {len(rec.counts)} counts, header says C={c}", lineno, path)
        if sum(rec.counts) != bag_size:
            raise ParseError(f"counts sum to {sum(rec.counts)}, expected M={bag_size}", lineno, path)
        if any(v < 0 for v in rec.counts):
            raise ParseError("counts must be non-negative", lineno, path)
        bags.append(Bag.from_counts(rec.instance_indices, rec.counts))

    collection = BagCollection(tuple(bags), dataset.fingerprint())
    violations = validate_collection(collection, dataset)
    if violations:
        raise ValidationError(f"{path}: {violations[0]}", violations)
    return collection
