"""Minimal deterministic feed-forward classifier engine.

Dense layers with relu hidden activations and raw-logit output, exact
analytic gradients, and SGD with momentum under a stepped learning-rate
schedule. Everything is driven by counter-based RNG streams so that a
(seed, config, dataset) triple always reproduces the same trained weights
on a given backend.

The per-batch numeric work routes through :mod:`pctlab.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import kernels
from .rng import STREAM_INIT, STREAM_SHUFFLE, stream_rng

ACTIVATIONS = ("relu", "identity")
WEIGHT_INITS = ("glorot_uniform", "zeros")


class DimensionError(ValueError):
    """Array shapes do not chain or do not match the model."""


@dataclass
class Layer:
    """One dense layer: ``out = act(x @ weights + bias)``."""

    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray     # (fan_out,)
    activation: str

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise DimensionError("layer weights must be 2-D")
        if self.bias.shape != (self.weights.shape[1],):
            raise DimensionError(
                f"bias shape {self.bias.shape} does not match weights "
                f"{self.weights.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("layer parameters must be finite")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "Layer":
        return Layer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class MLPModel:
    """Ordered dense layers; the final layer emits raw logits."""

    layers: List[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise DimensionError(
                    f"layer dims do not chain: {prev.fan_out} -> {nxt.fan_in}")
        if self.layers[-1].activation != "identity":
            raise ValueError("final layer must have identity activation")

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def num_classes(self) -> int:
        return self.layers[-1].fan_out

    def copy(self) -> "MLPModel":
        return MLPModel([layer.copy() for layer in self.layers])

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyper-parameters.

    The learning rate at epoch t is
    ``learning_rate * lr_decay_factor ** (t // lr_decay_every)``.

    The default rate was fixed by a one-time calibration on the reference
    task: it is the largest schedule (with momentum 0.9) at which the
    squared-logit distillation objective trains stably from a fresh init.
    """

    learning_rate: float = 0.003
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 30
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 10
    seed: int = 0
    weight_init: str = "glorot_uniform"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValueError("lr_decay_factor must be in (0, 1]")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.weight_init not in WEIGHT_INITS:
            raise ValueError(f"unknown weight_init {self.weight_init!r}")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay_factor ** (epoch // self.lr_decay_every)


@dataclass
class ForwardCache:
    """Per-layer intermediates for one sample, kept for backprop."""

    x: np.ndarray
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]

    @property
    def logits(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class BatchCache:
    """Per-layer intermediates for a batch of rows."""

    x: np.ndarray
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]

    @property
    def logits(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class TrainResult:
    model: MLPModel
    train_error: List[float] = field(default_factory=list)


# Objective protocol: (batch_logits (B, K), batch_indices (B,)) -> (loss, dlogits).
# dlogits is the gradient of the scalar batch loss w.r.t. the logits, so any
# batch averaging must already be folded in.
Objective = Callable[[np.ndarray, np.ndarray], tuple]


def init_model(dims: Sequence[int], seed: int, hidden_activation: str = "relu",
               weight_init: str = "glorot_uniform") -> MLPModel:
    """Build an MLP with the given layer sizes ``[input, h1, ..., K]``.

    glorot_uniform draws weights from +-sqrt(6 / (fan_in + fan_out));
    biases start at zero. Deterministic in ``seed``.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise DimensionError("need at least input and output dims")
    if any(d < 1 for d in dims):
        raise DimensionError(f"all layer dims must be >= 1, got {dims}")
    if dims[-1] < 2:
        raise ValueError("need at least 2 output classes")
    if weight_init not in WEIGHT_INITS:
        raise ValueError(f"unknown weight_init {weight_init!r}")
    rng = stream_rng(seed, STREAM_INIT)
    layers = []
    n_layers = len(dims) - 1
    for i in range(n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        if weight_init == "zeros":
            w = np.zeros((fan_in, fan_out))
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        act = "identity" if i == n_layers - 1 else hidden_activation
        layers.append(Layer(w, np.zeros(fan_out), act))
    return MLPModel(layers)


def forward_batch(model: MLPModel, x: np.ndarray) -> BatchCache:
    """Forward pass over a batch ``(n, input_dim)``; caches intermediates."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(
            f"expected batch of shape (n, {model.input_dim}), got {x.shape}")
    pre, acts = [], []
    a = x
    for layer in model.layers:
        z = kernels.affine(a, layer.weights, layer.bias)
        pre.append(z)
        a = kernels.relu(z) if layer.activation == "relu" else z
        acts.append(a)
    return BatchCache(x, pre, acts)


def forward(model: MLPModel, x: np.ndarray) -> ForwardCache:
    """Forward pass for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise DimensionError(
            f"expected vector of length {model.input_dim}, got shape {x.shape}")
    cache = forward_batch(model, x[None, :])
    return ForwardCache(x,
                        [z[0] for z in cache.pre_activations],
                        [a[0] for a in cache.activations])


def batch_logits(model: MLPModel, x: np.ndarray) -> np.ndarray:
    return forward_batch(model, x).logits


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax of a logit vector (max-subtracted)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise DimensionError("softmax expects a 1-D logit vector")
    return kernels.softmax_rows(np.ascontiguousarray(logits[None, :]))[0]


def predict(model: MLPModel, x: np.ndarray) -> int:
    """Argmax class for one sample; ties resolve to the lowest index."""
    return int(np.argmax(forward(model, x).logits))


def predict_batch(model: MLPModel, x: np.ndarray) -> np.ndarray:
    return kernels.argmax_rows(forward_batch(model, x).logits)


def error_rate(model: MLPModel, x: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y)
    return float(np.mean(predict_batch(model, x) != y))


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """-log softmax(logits)[label], computed via log-sum-exp."""
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise DimensionError("cross_entropy expects a 1-D logit vector")
    if not 0 <= label < logits.shape[0]:
        raise IndexError(f"label {label} out of range for {logits.shape[0]} classes")
    losses, _ = kernels.ce_rows(logits[None, :], np.array([label], dtype=np.int64))
    return float(losses[0])


def backward_batch(model: MLPModel, cache: BatchCache,
                   dlogits: np.ndarray) -> List[tuple]:
    """Exact gradients of the scalar loss whose logit gradient is given.

    Returns one ``(dW, db)`` pair per layer, shapes matching the parameters.
    """
    dlogits = np.ascontiguousarray(dlogits, dtype=np.float64)
    if dlogits.shape != cache.logits.shape:
        raise DimensionError(
            f"dlogits shape {dlogits.shape} != logits shape {cache.logits.shape}")
    grads: List[tuple] = [None] * len(model.layers)
    dz = dlogits
    for i in range(len(model.layers) - 1, -1, -1):
        a_prev = cache.x if i == 0 else cache.activations[i - 1]
        dw, db, dx = kernels.affine_backward(dz, a_prev, model.layers[i].weights)
        grads[i] = (dw, db)
        if i > 0:
            if model.layers[i - 1].activation == "relu":
                dz = kernels.relu_backward(dx, cache.pre_activations[i - 1])
            else:
                dz = dx
    return grads


def backward(model: MLPModel, cache: ForwardCache,
             dlogits: np.ndarray) -> List[tuple]:
    """Single-sample wrapper around :func:`backward_batch`."""
    batch = BatchCache(cache.x[None, :],
                       [z[None, :] for z in cache.pre_activations],
                       [a[None, :] for a in cache.activations])
    dlogits = np.asarray(dlogits, dtype=np.float64)
    return backward_batch(model, batch, dlogits[None, :])


def zero_velocity(model: MLPModel) -> List[tuple]:
    return [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.layers]


def sgd_step(model: MLPModel, grads: List[tuple], velocity: List[tuple],
             config: TrainConfig, epoch: int) -> None:
    """In-place momentum update: v <- mu*v - lr_t*g; w <- w + v."""
    lr = config.lr_at(epoch)
    mu = config.momentum
    for layer, (dw, db), (vw, vb) in zip(model.layers, grads, velocity):
        if dw.shape != layer.weights.shape or db.shape != layer.bias.shape:
            raise DimensionError("gradient shapes do not match model parameters")
        kernels.sgd_update(layer.weights.reshape(-1), vw.reshape(-1),
                           np.ascontiguousarray(dw).reshape(-1), lr, mu)
        kernels.sgd_update(layer.bias, vb, np.ascontiguousarray(db), lr, mu)


def train(model: MLPModel, features: np.ndarray, labels: np.ndarray,
          objective: Objective, config: TrainConfig,
          on_epoch_end: Optional[Callable[[int, MLPModel], None]] = None,
          ) -> TrainResult:
    """Mini-batch SGD on a copy of ``model``; the input model is untouched.

    The shuffle order for epoch t comes from the counter-based stream
    (seed, t), so training is reproducible regardless of global RNG state.
    The returned per-epoch train error is the running error over the
    epoch's mini-batches (predictions taken as each batch is visited).
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    n = features.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    if labels.shape != (n,):
        raise DimensionError("labels must be 1-D and match the feature rows")
    if features.shape[1] != model.input_dim:
        raise DimensionError(
            f"features have dim {features.shape[1]}, model expects {model.input_dim}")
    if labels.min() < 0 or labels.max() >= model.num_classes:
        raise ValueError("labels out of range for the model's class count")

    model = model.copy()
    velocity = zero_velocity(model)
    bs = config.batch_size
    errors: List[float] = []
    for epoch in range(config.epochs):
        order = stream_rng(config.seed, STREAM_SHUFFLE, epoch).permutation(n)
        miss = 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            cache = forward_batch(model, features[idx])
            _, dlogits = objective(cache.logits, idx)
            grads = backward_batch(model, cache, dlogits)
            sgd_step(model, grads, velocity, config, epoch)
            preds = kernels.argmax_rows(cache.logits)
            miss += int(np.sum(preds != labels[idx]))
        errors.append(miss / n)
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)
    return TrainResult(model, errors)


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
