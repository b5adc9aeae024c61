"""
Bag proportion loss, weighted pseudo-label loss and their combination.

Predictions are stacked as (N, M, C): N bags of M instances over C classes.
Each loss returns its value together with the gradient with respect to the
probabilities it consumed; model.backward carries that through softmax.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

import dew
from core_types import DewWeights, Prediction, PseudoLabel

LOG_CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class BagProportionEstimate:
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class LossReport:
    bag_loss: float
    instance_loss: float
    total: float
    per_bag_loss: np.ndarray  # H(p_i, pbar_i) per bag
    per_bag_instance_loss: np.ndarray  # weighted pseudo-label CE summed per bag, before 1/(N*M)
    mean_weight: float
    mean_bag_weight: float
    mean_instance_weight: float


@dataclass(frozen=True, eq=False)
class LossGradients:
    weak: np.ndarray
    strong: np.ndarray


def _clamped_log(x):
    return np.log(np.maximum(x, LOG_CLAMP))


def _as_stack(predictions):
    p = np.asarray(predictions, dtype=np.float64)
    return p[None] if p.ndim == 2 else p


def predicted_proportion(weak_predictions) -> BagProportionEstimate:
    """Mean of the M weak predictions of one bag."""
    p = np.asarray(weak_predictions, dtype=np.float64)
    return BagProportionEstimate(p.mean(axis=0))


def bag_loss(proportions, weak_predictions):
    """Mean over bags of the cross-entropy H(p_i, pbar_i).

    proportions: (N, C); weak_predictions: (N, M, C).
    Returns (loss, per-bag terms, gradient w.r.t. weak_predictions).
    """
    y = _as_stack(weak_predictions)
    p = np.asarray(proportions, dtype=np.float64).reshape(y.shape[0], y.shape[2])
    n, m, _ = y.shape
    pbar = y.mean(axis=1)
    per_bag = -(p * _clamped_log(pbar)).sum(axis=1)
    live = pbar > LOG_CLAMP
    dpbar = np.where(live, -p / (n * np.where(live, pbar, 1.0)), 0.0)
    grad = np.broadcast_to(dpbar[:, None, :] / m, y.shape).copy()
    return float(per_bag.sum() / n), per_bag, grad


def harden(weak_prediction) -> PseudoLabel:
    """One-hot at the argmax, ties to the smallest class index."""
    probs = weak_prediction.probs if isinstance(weak_prediction, Prediction) else np.asarray(weak_prediction)
    return PseudoLabel(int(np.argmax(probs)), int(probs.shape[-1]))


def harden_batch(weak_predictions) -> np.ndarray:
    """Pseudo-label class indices for every row of a prediction array."""
    return np.argmax(np.asarray(weak_predictions), axis=-1)


def instance_loss(pseudo_labels, strong_predictions, weights):
    """Weighted pseudo-label cross-entropy averaged over all N*M instances.

    pseudo_labels: (N, M) class indices; strong_predictions: (N, M, C);
    weights: DewWeights or an (N, M) array, held constant.
    Returns (loss, per-bag weighted sums, gradient w.r.t. strong_predictions).
    """
    s = _as_stack(strong_predictions)
    n, m, _ = s.shape
    labels = np.asarray(pseudo_labels, dtype=np.int64).reshape(n, m)
    w = weights.combined if isinstance(weights, DewWeights) else weights
    w = np.asarray(w, dtype=np.float64).reshape(n, m)
    picked = np.take_along_axis(s, labels[..., None], axis=-1)[..., 0]
    terms = w * -_clamped_log(picked)
    per_bag = terms.sum(axis=1)
    grad = np.zeros_like(s)
    live = picked > LOG_CLAMP
    g = np.where(live, -w / (n * m * np.where(live, picked, 1.0)), 0.0)
    np.put_along_axis(grad, labels[..., None], g[..., None], axis=-1)
    return float(per_bag.sum() / (n * m)), per_bag, grad


def total_loss(counts, weak_predictions, strong_predictions, config,
               pseudo_labels: Optional[np.ndarray] = None,
               weights: Optional[DewWeights] = None):
    """L = L_b + lam * L_i for a batch of bags.

    counts: (N, C) integer class counts per bag. Pseudo-labels and weights
    are derived from the weak predictions unless given explicitly.
    Returns (LossReport, LossGradients).
    """
    y = _as_stack(weak_predictions)
    s = _as_stack(strong_predictions)
    counts = np.asarray(counts).reshape(y.shape[0], y.shape[2])
    proportions = counts / counts.sum(axis=1, keepdims=True)

    lb, per_bag, grad_weak = bag_loss(proportions, y)
    if pseudo_labels is None:
        pseudo_labels = harden_batch(y)
    if weights is None:
        weights = dew.combined_weights(
            counts, y, config.beta_b, config.beta_i,
            use_bag_weight=config.ablation_use_bag_weight,
            use_instance_weight=config.ablation_use_instance_weight,
        )
    li, per_bag_i, grad_strong = instance_loss(pseudo_labels, s, weights)

    lam = float(config.lam)
    report = LossReport(
        bag_loss=lb,
        instance_loss=li,
        total=lb + lam * li,
        per_bag_loss=per_bag,
        per_bag_instance_loss=per_bag_i,
        mean_weight=float(np.mean(weights.combined)),
        mean_bag_weight=float(np.mean(weights.bag_weight)),
        mean_instance_weight=float(np.mean(weights.instance_weight)),
    )
    return report, LossGradients(grad_weak, lam * grad_strong)


def supervised_loss(labels, predictions):
    """Plain cross-entropy against true labels (fully supervised reference)."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = p.shape[0]
    picked = p[np.arange(n), y]
    grad = np.zeros_like(p)
    live = picked > LOG_CLAMP
    grad[np.arange(n), y] = np.where(live, -1.0 / (n * np.where(live, picked, 1.0)), 0.0)
    return float(-_clamped_log(picked).mean()), grad
