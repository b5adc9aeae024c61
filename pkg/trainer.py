"""
Training loop: bag batches, SGD with momentum and weight decay, and the
truncated cosine learning-rate decay eta = eta0 * cos(7*pi*k / (16*K)).

One step:
  1. weak-augment and forward every instance -> weak predictions
  2. pseudo-labels and DEW weights from the weak predictions (constants)
  3. strong-augment and forward -> strong predictions
  4. L = L_b + lam * L_i
  5. backprop through both views and take an SGD step
"""
import copy
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

import numpy as np

import augment
import dew
import losses
import model
from core_types import (
    BagCollection, ConfigError, Dataset, DewWeights, TrainConfig, ValidationError,
    validate_collection,
)
from metrics import EpochMetrics, mean_normalized_entropy, pseudo_label_accuracy, test_accuracy

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OptimizerState:
    buffers: model.ModelParams
    step: int
    total_steps: int
    lr0: float

    @property
    def lr(self) -> float:
        return lr_schedule(self.step, self.total_steps, self.lr0)


@dataclass(frozen=True, eq=False)
class RunState:
    params: model.ModelParams
    optimizer: OptimizerState
    epoch: int
    rng_bags: np.random.Generator
    rng_weak: np.random.Generator
    rng_strong: np.random.Generator


@dataclass(frozen=True, eq=False)
class StepSnapshot:
    weak_predictions: np.ndarray  # (N, M, C)
    labels: np.ndarray  # (N, M) ground truth, for measurement only
    weights: DewWeights


@dataclass(frozen=True, eq=False)
class TrainResult:
    params: model.ModelParams
    history: List[EpochMetrics]
    total_steps: int


# -------------------- Schedule and optimizer --------------------
def lr_schedule(k: int, total_steps: int, lr0: float) -> float:
    """eta0 * cos(7*pi*k / (16*K)) for 0 <= k <= K."""
    if k < 0 or k > total_steps:
        raise ValidationError(f"step {k} outside [0, {total_steps}]")
    if total_steps == 0:
        return float(lr0)
    return float(lr0 * math.cos(7.0 * math.pi * k / (16.0 * total_steps)))


def sgd_step(params, grads, state: OptimizerState, weight_decay: float, momentum: float):
    """Momentum SGD with L2 weight decay folded into the gradient."""
    if state.step >= state.total_steps:
        raise ValidationError(f"learning-rate schedule exhausted at step {state.step}")
    lr = state.lr
    decayed = grads.map(lambda g, w: g + weight_decay * w, params)
    buffers = state.buffers.map(lambda b, g: momentum * b + g, decayed)
    new_params = params.map(lambda w, b: w - lr * b, buffers)
    return new_params, replace(state, buffers=buffers, step=state.step + 1)


# -------------------- State --------------------
def steps_per_epoch(n_bags: int, bags_per_step: int) -> int:
    return math.ceil(n_bags / bags_per_step)


def new_run_state(config: TrainConfig, input_dim: int, class_count: int, total_steps: int) -> RunState:
    """Initial params and optimizer, with independent streams from one seed."""
    init_seq, bag_seq, weak_seq, strong_seq = np.random.SeedSequence(config.seed).spawn(4)
    params = model.init(init_seq, input_dim, config.hidden_sizes, class_count)
    opt = OptimizerState(params.zeros_like(), 0, total_steps, config.lr0)
    return RunState(
        params, opt, 0,
        np.random.default_rng(bag_seq),
        np.random.default_rng(weak_seq),
        np.random.default_rng(strong_seq),
    )


# -------------------- One step --------------------
def _chunks(n_bags: int, bag_size: int, workers: int):
    """Row slices along bag boundaries, one per worker."""
    parts = np.array_split(np.arange(n_bags), min(workers, n_bags))
    return [slice(int(p[0]) * bag_size, (int(p[-1]) + 1) * bag_size) for p in parts if len(p)]


def _forward(params, x, chunks, pool):
    if pool is None or len(chunks) == 1:
        probs, trace = model.forward(params, x)
        return probs, [(slice(0, len(x)), trace)]
    results = list(pool.map(lambda s: model.forward(params, x[s]), chunks))
    probs = np.concatenate([r[0] for r in results])
    return probs, [(s, r[1]) for s, r in zip(chunks, results)]


def _backward(params, traces, upstream, pool):
    if pool is None or len(traces) == 1:
        grads = None
        for s, trace in traces:
            g = model.backward(trace, params, upstream[s])
            grads = g if grads is None else grads.map(np.add, g)
        return grads
    futures = [pool.submit(model.backward, trace, params, upstream[s]) for s, trace in traces]
    grads = None
    for fut in as_completed(futures):
        g = fut.result()
        grads = g if grads is None else grads.map(np.add, g)
    return grads


def train_step(state: RunState, bags, dataset: Dataset, config: TrainConfig,
               policies, pool: Optional[ThreadPoolExecutor] = None):
    """Run one optimization step on a batch of bags.

    Returns (new RunState, LossReport, StepSnapshot). The input state is not
    modified, so repeating a call gives bit-identical results.
    """
    weak_policy, strong_policy = policies
    idx = np.array([b.instance_indices for b in bags], dtype=np.int64)
    counts = np.array([b.counts for b in bags], dtype=np.int64)
    n, m = idx.shape
    c = dataset.class_count
    x = dataset.features[idx.ravel()]
    chunks = _chunks(n, m, config.workers) if pool is not None else [slice(0, n * m)]
    params = state.params

    rng_weak = copy.deepcopy(state.rng_weak)
    rng_strong = copy.deepcopy(state.rng_strong)
    if config.fully_supervised:
        # clean inputs, objective lam * CE so total = 0 + lam * instance_loss
        yc, traces = _forward(params, x, chunks, pool)
        labels = dataset.labels[idx.ravel()]
        ce, grad = losses.supervised_loss(labels, yc)
        nll = -np.log(np.maximum(yc[np.arange(n * m), labels], losses.LOG_CLAMP))
        weak = yc.reshape(n, m, c)
        ones = np.ones((n, m))
        weights = DewWeights(ones, ones, ones)
        report = losses.LossReport(0.0, ce, config.lam * ce, np.zeros(n),
                                   nll.reshape(n, m).sum(axis=1), 1.0, 1.0, 1.0)
        grads = _backward(params, traces, config.lam * grad, pool)
    else:
        xw = augment.apply(weak_policy, x, rng_weak)
        xs = augment.apply(strong_policy, x, rng_strong)
        yw, traces_w = _forward(params, xw, chunks, pool)
        weak = yw.reshape(n, m, c)
        pseudo = losses.harden_batch(weak)
        weights = dew.combined_weights(
            counts, weak, config.beta_b, config.beta_i,
            use_bag_weight=config.ablation_use_bag_weight,
            use_instance_weight=config.ablation_use_instance_weight,
        )
        ys, traces_s = _forward(params, xs, chunks, pool)
        report, g = losses.total_loss(counts, weak, ys.reshape(n, m, c), config,
                                      pseudo_labels=pseudo, weights=weights)
        grads = _backward(params, traces_w, g.weak.reshape(n * m, c), pool)
        if config.lam != 0:
            grads = grads.map(np.add, _backward(params, traces_s, g.strong.reshape(n * m, c), pool))

    new_params, opt = sgd_step(params, grads, state.optimizer, config.weight_decay, config.momentum)
    new_state = replace(state, params=new_params, optimizer=opt, rng_weak=rng_weak, rng_strong=rng_strong)
    snapshot = StepSnapshot(weak, dataset.labels[idx], weights)
    return new_state, report, snapshot


# -------------------- Full run --------------------
def resolve_total_steps(config: TrainConfig, n_bags: int) -> int:
    derived = config.epochs * steps_per_epoch(n_bags, config.bags_per_step)
    if config.total_steps == 0:
        return derived
    if config.total_steps < derived:
        raise ConfigError({"total_steps": f"{config.total_steps} < epochs x steps_per_epoch = {derived}"})
    return config.total_steps


def train(dataset: Dataset, bag_collection: BagCollection, config: TrainConfig,
          test_dataset: Optional[Dataset] = None,
          on_epoch: Optional[Callable[[EpochMetrics], None]] = None) -> TrainResult:
    """Train for config.epochs over every bag, once per epoch in seeded order."""
    config.check()
    if not bag_collection.bags:
        raise ValidationError("no bags to train on")
    if bag_collection.bag_size != config.bag_size:
        raise ConfigError({"bag_size": f"config says {config.bag_size}, bags have {bag_collection.bag_size}"})
    violations = validate_collection(bag_collection, dataset)
    if violations:
        raise ValidationError(violations[0], violations)
    if test_dataset is not None and test_dataset.feature_dim != dataset.feature_dim:
        raise ValidationError("test set feature dimension differs from training set")

    n_bags = len(bag_collection)
    total = resolve_total_steps(config, n_bags)
    state = new_run_state(config, dataset.feature_dim, dataset.class_count, total)
    if config.epochs == 0:
        return TrainResult(state.params, [], total)

    policies = augment.policies_for(config, dataset.features.std(axis=0))
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    per_epoch = steps_per_epoch(n_bags, config.bags_per_step)
    history = []
    logger.info(f"Training {n_bags} bags of M={config.bag_size} for {config.epochs} epochs "
                f"({per_epoch} steps/epoch, K={total})")
    try:
        for epoch in range(config.epochs):
            order = state.rng_bags.permutation(n_bags)
            lb_sum = li_sum = 0.0
            bags_seen = 0
            correct = ent_sum = w_sum = wb_sum = wi_sum = 0.0
            rows = 0
            for s in range(per_epoch):
                batch = [bag_collection[int(i)] for i in order[s * config.bags_per_step:(s + 1) * config.bags_per_step]]
                state, report, snap = train_step(state, batch, dataset, config, policies, pool)
                k = snap.labels.size
                lb_sum += report.bag_loss * len(batch)
                li_sum += report.instance_loss * len(batch)
                bags_seen += len(batch)
                correct += pseudo_label_accuracy(snap.weak_predictions, snap.labels) * k
                ent_sum += mean_normalized_entropy(snap.weak_predictions, dataset.class_count) * k
                w_sum += float(np.sum(snap.weights.combined))
                wb_sum += float(np.sum(snap.weights.bag_weight))
                wi_sum += float(np.sum(snap.weights.instance_weight))
                rows += k
            state = replace(state, epoch=epoch + 1)
            row = EpochMetrics(
                epoch=epoch,
                bag_loss=lb_sum / bags_seen,
                instance_loss=li_sum / bags_seen,
                pseudo_label_accuracy=correct / rows,
                mean_normalized_entropy=min(ent_sum / rows, 1.0),
                mean_weight=min(w_sum / rows, 1.0),
                mean_bag_weight=min(wb_sum / rows, 1.0),
                mean_instance_weight=min(wi_sum / rows, 1.0),
                test_accuracy=test_accuracy(state.params, test_dataset) if test_dataset is not None else None,
            )
            history.append(row)
            if on_epoch is not None:
                on_epoch(row)
            logger.info(
                f"epoch {epoch}: L_b={row.bag_loss:.4f} L_i={row.instance_loss:.4f} "
                f"pl_acc={row.pseudo_label_accuracy:.3f} ent={row.mean_normalized_entropy:.3f} "
                f"w={row.mean_weight:.3f} w_b={row.mean_bag_weight:.3f} w_i={row.mean_instance_weight:.3f}"
                + (f" test_acc={row.test_accuracy:.3f}" if row.test_accuracy is not None else "")
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(state.params, history, total)
