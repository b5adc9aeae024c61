"""
Brute-force oracle suites for the oracle-check command.

The DEW oracle is a plain-Python reimplementation written straight from the
weighting formulas with loops and the math module; it shares no code with
dew.py. The gradient oracle compares model.backward through the full
objective with central finite differences.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import dew
import losses
import model
from core_types import TrainConfig

logger = logging.getLogger(__name__)

DEW_TOLERANCE = 1e-10
GRADIENT_TOLERANCE = 1e-4
FD_STEP = 1e-5


@dataclass
class OracleResult:
    name: str
    cases: int
    worst_error: float = 0.0
    tolerance: float = 0.0
    failing_case: Optional[dict] = field(default=None)

    @property
    def passed(self) -> bool:
        return self.failing_case is None


# -------------------- Reference DEW --------------------
def reference_entropy(probs):
    total = 0.0
    for p in probs:
        if p > 0:
            total -= p * math.log(p)
    return total


def reference_dew(counts, predictions, beta_b, beta_i, use_bag=True, use_inst=True):
    """Combined weight for each instance of one bag, as a list of floats."""
    m_size = len(predictions)
    n_classes = len(counts)
    bag_w = []
    for c in range(n_classes):
        column = [predictions[j][c] for j in range(m_size)]
        s = sum(column)
        if counts[c] == 0 or s <= 0:
            bag_w.append(0.0)
            continue
        h = reference_entropy([v / s for v in column])
        gap = h - math.log(counts[c])
        bag_w.append(math.exp(-gap * gap / beta_b))
    out = []
    for row in predictions:
        best = 0
        for c in range(1, n_classes):
            if row[c] > row[best]:
                best = c
        wb = bag_w[best] if use_bag else 1.0
        h = reference_entropy(row)
        wi = math.exp(-h * h / beta_i) if use_inst else 1.0
        out.append(wb * wi)
    return out


def _random_bag(rng, max_m=16, max_c=10):
    m = int(rng.integers(1, max_m + 1))
    c = int(rng.integers(2, max_c + 1))
    counts = rng.multinomial(m, np.full(c, 1.0 / c))
    sharpness = rng.choice([0.1, 1.0, 3.0, 10.0])
    logits = sharpness * rng.standard_normal((m, c))
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    beta_b = float(rng.choice([0.1, 0.5, 1.0, 2.0, 5.0]))
    beta_i = float(rng.choice([0.1, 0.5, 1.0, 2.0, 5.0]))
    return counts, probs, beta_b, beta_i


def dew_oracle_suite(cases: int, seed: int = 0) -> OracleResult:
    """Compare dew.combined_weights with reference_dew on random bags."""
    rng = np.random.default_rng(seed)
    result = OracleResult("dew", cases, tolerance=DEW_TOLERANCE)
    for case in range(cases):
        counts, probs, beta_b, beta_i = _random_bag(rng)
        use_bag, use_inst = bool(rng.integers(0, 2)), bool(rng.integers(0, 2))
        got = dew.combined_weights(counts, probs, beta_b, beta_i, use_bag, use_inst).combined
        want = reference_dew(counts.tolist(), probs.tolist(), beta_b, beta_i, use_bag, use_inst)
        err = float(np.max(np.abs(got - np.array(want))))
        result.worst_error = max(result.worst_error, err)
        if err > DEW_TOLERANCE and result.failing_case is None:
            result.failing_case = {
                "case": case, "counts": counts.tolist(), "predictions": probs.tolist(),
                "beta_b": beta_b, "beta_i": beta_i, "use_bag_weight": use_bag,
                "use_instance_weight": use_inst, "error": err,
            }
    return result


# -------------------- Gradient check --------------------
def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def objective(params, xw, xs, counts, config, pseudo, weights):
    """Scalar L = L_b + lam * L_i with pseudo-labels and weights held fixed."""
    n, m = pseudo.shape
    yw = model.predict(params, xw)
    ys = model.predict(params, xs)
    c = yw.shape[1]
    report, _ = losses.total_loss(counts, yw.reshape(n, m, c), ys.reshape(n, m, c), config,
                                  pseudo_labels=pseudo, weights=weights)
    return report.total


def analytic_gradient(params, xw, xs, counts, config, pseudo, weights):
    n, m = pseudo.shape
    yw, tw = model.forward(params, xw)
    ys, ts = model.forward(params, xs)
    c = yw.shape[1]
    _, g = losses.total_loss(counts, yw.reshape(n, m, c), ys.reshape(n, m, c), config,
                             pseudo_labels=pseudo, weights=weights)
    gw = model.backward(tw, params, g.weak.reshape(n * m, c))
    gs = model.backward(ts, params, g.strong.reshape(n * m, c))
    return gw.map(np.add, gs)


def numeric_gradient(fn, params, h=FD_STEP):
    base = params.flat()
    grad = np.zeros_like(base)
    for k in range(base.size):
        up, down = base.copy(), base.copy()
        up[k] += h
        down[k] -= h
        grad[k] = (fn(params.with_flat(up)) - fn(params.with_flat(down))) / (2 * h)
    return grad


def random_problem(rng):
    """A small random network, bag batch and loss setting."""
    d = int(rng.integers(1, 6))
    c = int(rng.integers(2, 6))
    m = int(rng.integers(1, 9))
    n = int(rng.integers(1, 4))
    hidden = (int(rng.integers(1, 9)),)
    params = model.init(rng, d, hidden, c)
    params = params.map(lambda a: a + 0.1 * rng.standard_normal(a.shape))
    xw = rng.standard_normal((n * m, d))
    xs = xw + 0.3 * rng.standard_normal((n * m, d))
    counts = np.array([rng.multinomial(m, np.full(c, 1.0 / c)) for _ in range(n)])
    config = TrainConfig(
        lam=float(rng.uniform(0.0, 2.0)),
        beta_b=float(rng.uniform(0.2, 5.0)),
        beta_i=float(rng.uniform(0.2, 5.0)),
        bag_size=m, seed=0, workers=1,
    )
    yw = model.predict(params, xw).reshape(n, m, c)
    pseudo = losses.harden_batch(yw)
    weights = dew.combined_weights(counts, yw, config.beta_b, config.beta_i)
    return params, xw, xs, counts, config, pseudo, weights


def gradient_oracle_suite(cases: int, seed: int = 0) -> OracleResult:
    """Finite-difference check of the end-to-end objective gradient."""
    rng = np.random.default_rng(seed)
    result = OracleResult("gradient", cases, tolerance=GRADIENT_TOLERANCE)
    for case in range(cases):
        params, xw, xs, counts, config, pseudo, weights = random_problem(rng)
        analytic = analytic_gradient(params, xw, xs, counts, config, pseudo, weights).flat()
        numeric = numeric_gradient(
            lambda p: objective(p, xw, xs, counts, config, pseudo, weights), params)
        err = relative_error(analytic, numeric)
        result.worst_error = max(result.worst_error, err)
        if err > GRADIENT_TOLERANCE and result.failing_case is None:
            result.failing_case = {
                "case": case, "input_dim": params.input_dim, "hidden_sizes": list(params.hidden_sizes),
                "class_count": params.class_count, "counts": counts.tolist(),
                "lam": config.lam, "beta_b": config.beta_b, "beta_i": config.beta_i,
                "params": params.flat().tolist(), "weak_inputs": xw.tolist(),
                "strong_inputs": xs.tolist(), "error": err,
            }
    return result
