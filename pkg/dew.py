"""
Dual entropy-based confidence weights for pseudo-labels.

Each instance gets w = w_bag * w_inst:

* w_bag compares the entropy of the L1-normalized column of class-c
  probabilities across the bag against log m_c, the entropy of "m_c
  instances at 1/m_c each", where c is the instance's argmax class.
* w_inst compares the entropy of the instance's own prediction against 0,
  the entropy of a one-hot prediction.

Both gaps go through sigma(x; beta) = exp(-x^2 / beta). Logs are natural.
Weights are computed from weak-view predictions and treated as constants
by the losses.
"""
import logging
from dataclasses import dataclass

import numpy as np

from core_types import Bag, DewWeights, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BagClassDistribution:
    class_index: int
    values: np.ndarray
    reference_count: int
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class InstanceDistribution:
    values: np.ndarray


def entropy(dist, axis=-1):
    """Shannon entropy in nats with 0*log 0 = 0. Works along `axis` for batches."""
    p = np.asarray(dist, dtype=np.float64)
    if np.any(p < 0):
        raise ValidationError("entropy of a distribution with negative entries")
    safe = np.where(p > 0, p, 1.0)
    h = -np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=axis)
    # -0.0 for point masses
    return h + 0.0


def mapping_sigma(x, beta):
    """exp(-x^2 / beta)."""
    if not np.all(np.asarray(beta) > 0):
        raise ValidationError("beta must be > 0")
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-(x * x) / beta)


def bag_class_distribution(bag_predictions, class_index: int, reference_count: int = 0):
    """L1-normalize the class-c column of an (M, C) block of weak predictions."""
    preds = np.asarray(bag_predictions, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[0] < 1:
        raise ValidationError("bag predictions must be an (M, C) matrix with M >= 1")
    col = preds[:, class_index]
    total = col.sum()
    if not total > 0:
        return BagClassDistribution(class_index, np.zeros_like(col), int(reference_count), True)
    return BagClassDistribution(class_index, col / total, int(reference_count))


def bag_weight(dist: BagClassDistribution, beta_b: float) -> float:
    """sigma(H(column) - log m; beta_b); zero when m = 0 or the column is all zero."""
    if not beta_b > 0:
        raise ValidationError("beta_b must be > 0")
    if dist.degenerate or dist.reference_count <= 0:
        return 0.0
    gap = entropy(dist.values) - np.log(dist.reference_count)
    return float(mapping_sigma(gap, beta_b))


def instance_weight(dist, beta_i: float) -> float:
    """sigma(H(prediction); beta_i)."""
    if not beta_i > 0:
        raise ValidationError("beta_i must be > 0")
    values = dist.values if isinstance(dist, InstanceDistribution) else dist
    return float(mapping_sigma(entropy(values), beta_i))


# -------------------- Vectorized path used by the trainer --------------------
def class_bag_weights(weak_predictions, counts, beta_b: float) -> np.ndarray:
    """w_bag for every class of every bag.

    weak_predictions: (N, M, C) or (M, C); counts: (N, C) or (C,).
    Returns an array shaped like counts.
    """
    if not beta_b > 0:
        raise ValidationError("beta_b must be > 0")
    p = np.asarray(weak_predictions, dtype=np.float64)
    m = np.asarray(counts, dtype=np.float64)
    col_sum = p.sum(axis=-2)  # (..., C)
    degenerate = ~(col_sum > 0)
    normed = p / np.where(degenerate, 1.0, col_sum)[..., None, :]
    h = entropy(normed, axis=-2)
    ref = np.log(np.where(m > 0, m, 1.0))
    w = mapping_sigma(h - ref, beta_b)
    dead = degenerate | (m <= 0)
    if np.any(degenerate):
        logger.warning(f"{int(degenerate.sum())} all-zero class column(s); bag weight set to 0")
    return np.where(dead, 0.0, w)


def instance_weights(weak_predictions, beta_i: float) -> np.ndarray:
    """w_inst for every row, shaped like the predictions without the class axis."""
    return mapping_sigma(entropy(weak_predictions, axis=-1), beta_i)


def combined_weights(bag, weak_predictions, beta_b: float, beta_i: float,
                     use_bag_weight: bool = True, use_instance_weight: bool = True) -> DewWeights:
    """Per-instance DEW weights for one bag or a stack of bags.

    `bag` is a Bag, or a counts array of shape (C,) / (N, C) aligned with
    weak_predictions of shape (M, C) / (N, M, C). A disabled factor is
    replaced by 1.
    """
    counts = np.asarray(bag.counts if isinstance(bag, Bag) else bag)
    p = np.asarray(weak_predictions, dtype=np.float64)
    if p.ndim - 1 != counts.ndim or p.shape[-1] != counts.shape[-1]:
        raise ValidationError(f"predictions {p.shape} are not aligned with counts {counts.shape}")
    top = np.argmax(p, axis=-1)  # first maximum on ties

    if use_bag_weight:
        per_class = class_bag_weights(p, counts, beta_b)
        wb = np.take_along_axis(per_class, top, axis=-1)
    else:
        wb = np.ones(top.shape)
    wi = instance_weights(p, beta_i) if use_instance_weight else np.ones(top.shape)
    return DewWeights(wb, wi, wb * wi)
