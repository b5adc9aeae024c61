"""
A small feed-forward classifier in NumPy with exact backpropagation.

Layer sizes run D -> hidden_sizes... -> C. Hidden layers use ReLU and the
output layer a numerically stable softmax. Everything is float64.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from core_types import ParseError, StaleTraceError, ValidationError


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Per-layer weight matrices (fan_in x fan_out) and bias vectors.

    Also used to carry gradients and momentum buffers of the same shapes.
    """
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValidationError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValidationError(f"layer {k}: bias shape {b.shape} does not fit weight {w.shape}")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ValidationError(f"layer {k}: fan_in {w.shape[0]} breaks the shape chain")
            w.setflags(write=False)
            b.setflags(write=False)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def class_count(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def hidden_sizes(self) -> Tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    def arrays(self):
        """Weights and biases interleaved per layer: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays):
        arrays = [np.array(a, dtype=np.float64) for a in arrays]
        return cls(tuple(arrays[0::2]), tuple(arrays[1::2]))

    def map(self, fn, *others) -> "ModelParams":
        """Apply fn elementwise across this and other same-shaped ModelParams."""
        cols = zip(self.arrays(), *(o.arrays() for o in others))
        return ModelParams.from_arrays([fn(*xs) for xs in cols])

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vector) -> "ModelParams":
        out, pos = [], 0
        for a in self.arrays():
            out.append(np.asarray(vector[pos:pos + a.size], dtype=np.float64).reshape(a.shape))
            pos += a.size
        return ModelParams.from_arrays(out)

    def equals(self, other) -> bool:
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    params: ModelParams
    inputs: np.ndarray
    pre_activations: Tuple[np.ndarray, ...]
    activations: Tuple[np.ndarray, ...]
    probs: np.ndarray

    @property
    def penultimate(self) -> np.ndarray:
        return self.activations[-1]


def init(seed, input_dim: int, hidden_sizes, class_count: int) -> ModelParams:
    """Scaled-uniform weights with bound sqrt(6/(fan_in+fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    sizes = [int(input_dim)] + [int(h) for h in hidden_sizes] + [int(class_count)]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(tuple(weights), tuple(biases))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, batch):
    """Return (probabilities per row, trace for backward)."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValidationError(f"batch of shape {x.shape} does not match input dim {params.input_dim}")
    a = x
    pre, acts = [], [x]
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        if k < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
    probs = softmax(pre[-1])
    return probs, ForwardTrace(params, x, tuple(pre), tuple(acts), probs)


def backward(trace: ForwardTrace, params: ModelParams, upstream, wrt: str = "probs") -> ModelParams:
    """Gradient of a loss w.r.t. every parameter.

    `upstream` is dLoss/dprobs (default) or dLoss/dlogits (wrt="logits"),
    one row per batch row.
    """
    if trace.params is not params:
        raise StaleTraceError("trace was recorded with different parameters")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != trace.probs.shape:
        raise ValidationError(f"upstream gradient shape {g.shape} != output shape {trace.probs.shape}")
    if wrt == "probs":
        p = trace.probs
        dz = p * (g - (g * p).sum(axis=1, keepdims=True))
    elif wrt == "logits":
        dz = g
    else:
        raise ValueError(f"wrt must be 'probs' or 'logits', not {wrt!r}")

    n_layers = len(params.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        a_prev = trace.activations[k]
        grads_w[k] = a_prev.T @ dz
        grads_b[k] = dz.sum(axis=0)
        if k:
            da = dz @ params.weights[k].T
            dz = da * (trace.pre_activations[k - 1] > 0)
    return ModelParams(tuple(grads_w), tuple(grads_b))


def predict(params: ModelParams, batch) -> np.ndarray:
    return forward(params, batch)[0]


def penultimate_features(params: ModelParams, batch) -> np.ndarray:
    """Activations feeding the output layer (the inputs when there is no hidden layer)."""
    return forward(params, batch)[1].penultimate


# -------------------- Checkpoints --------------------
CHECKPOINT_HEADER = "#llp-params v1"


def save_params(params: ModelParams, path) -> None:
    """Text checkpoint: shapes then row-major values in shortest round-trip decimal."""
    lines = [f"{CHECKPOINT_HEADER} layers={len(params.weights)}"]
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"layer {k} {w.shape[0]} {w.shape[1]}")
        lines.append(" ".join(repr(float(v)) for v in w.ravel()))
        lines.append(" ".join(repr(float(v)) for v in b))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_params(path) -> ModelParams:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")
    head = lines[0].split()
    if len(head) != 3 or " ".join(head[:2]) != CHECKPOINT_HEADER or not head[2].startswith("layers="):
        raise ParseError("missing checkpoint header", 1, path)
    n_layers = int(head[2].split("=", 1)[1])
    weights, biases = [], []
    pos = 1
    for k in range(n_layers):
        try:
            tag, idx, fan_in, fan_out = lines[pos].split()
            fan_in, fan_out = int(fan_in), int(fan_out)
            w = np.array([float(v) for v in lines[pos + 1].split()], dtype=np.float64)
            b = np.array([float(v) for v in lines[pos + 2].split()], dtype=np.float64)
        except (ValueError, IndexError):
            raise ParseError(f"malformed layer {k}", pos + 1, path)
        if tag != "layer" or int(idx) != k or w.size != fan_in * fan_out or b.size != fan_out:
            raise ParseError(f"layer {k} does not match its declared shape", pos + 1, path)
        weights.append(w.reshape(fan_in, fan_out))
        biases.append(b)
        pos += 3
    return ModelParams(tuple(weights), tuple(biases))
