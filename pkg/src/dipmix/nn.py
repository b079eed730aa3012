"""Dense feed-forward classifier with manual backpropagation.

Plain numpy MLP: seeded initialization, forward pass, numerically stable
softmax cross-entropy (exactly linear in the label argument), analytic
gradients, and momentum SGD with a stepwise learning-rate schedule. All
arithmetic is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError

ACTIVATIONS = ("relu", "tanh")


@dataclass
class ModelParams:
    """Weights and biases of a dense multilayer classifier.

    weights[l] has shape (layer_sizes[l], layer_sizes[l+1]) and biases[l]
    length layer_sizes[l+1]; all entries finite.
    """

    layer_sizes: list
    weights: list
    biases: list
    activation: str = "relu"

    def __post_init__(self):
        _check_architecture(self.layer_sizes, self.activation)
        pairs = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        if len(self.weights) != len(pairs) or len(self.biases) != len(pairs):
            raise ShapeError(
                f"expected {len(pairs)} weight/bias pairs, got "
                f"{len(self.weights)}/{len(self.biases)}"
            )
        for l, (fan_in, fan_out) in enumerate(pairs):
            if self.weights[l].shape != (fan_in, fan_out):
                raise ShapeError(
                    f"weights[{l}] has shape {self.weights[l].shape}, expected {(fan_in, fan_out)}"
                )
            if self.biases[l].shape != (fan_out,):
                raise ShapeError(
                    f"biases[{l}] has shape {self.biases[l].shape}, expected {(fan_out,)}"
                )
        if not all(np.isfinite(w).all() for w in self.weights) or not all(
            np.isfinite(b).all() for b in self.biases
        ):
            raise NumericError("model parameters contain non-finite entries")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class ParamGrads:
    """Gradient arrays, shape-congruent with the ModelParams they differentiate."""

    weights: list
    biases: list


@dataclass
class Batch:
    """A feature matrix with soft labels whose rows each sum to 1."""

    features: np.ndarray
    soft_labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.soft_labels = np.asarray(self.soft_labels, dtype=float)
        if self.features.ndim != 2 or self.soft_labels.ndim != 2:
            raise ShapeError("batch features and soft_labels must be 2-D")
        if self.features.shape[0] != self.soft_labels.shape[0]:
            raise ShapeError(
                f"batch size mismatch: {self.features.shape[0]} features rows vs "
                f"{self.soft_labels.shape[0]} label rows"
            )
        if self.features.shape[0] == 0:
            raise ShapeError("batch is empty")
        if np.any(self.soft_labels < 0):
            raise ConfigurationError("soft labels must be nonnegative")
        row_sums = self.soft_labels.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            raise ConfigurationError("each soft-label row must sum to 1 within 1e-9")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class OptimState:
    """Momentum-SGD state with a stepwise learning-rate schedule.

    ``schedule`` holds (epoch, multiplier) pairs with strictly increasing
    epochs; from each listed epoch onward the base rate is multiplied by
    that factor. Velocity buffers are allocated on the first step.
    """

    learning_rate: float
    momentum: float = 0.0
    schedule: list = field(default_factory=list)
    velocity_weights: list = None
    velocity_biases: list = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        epochs = [e for e, _ in self.schedule]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigurationError(f"schedule epochs must be strictly increasing: {epochs}")

    def lr_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for start, mult in self.schedule:
            if epoch >= start:
                lr *= mult
        return lr


def _check_architecture(layer_sizes, activation):
    if len(layer_sizes) < 2:
        raise ConfigurationError(f"need at least input and output layers, got {list(layer_sizes)}")
    if any(int(s) != s or s < 1 for s in layer_sizes):
        raise ConfigurationError(f"layer sizes must be positive integers, got {list(layer_sizes)}")
    if activation not in ACTIVATIONS:
        raise ConfigurationError(f"unknown activation {activation!r}, expected one of {ACTIVATIONS}")


def mlp_init(layer_sizes, activation: str = "relu", seed: int = 0) -> ModelParams:
    """Fresh parameters: zero-mean weights scaled by 1/sqrt(fan_in), zero biases.

    Deterministic per seed.
    """
    _check_architecture(layer_sizes, activation)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return ModelParams(list(layer_sizes), weights, biases, activation)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_deriv(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(float)
    t = np.tanh(z)
    return 1.0 - t * t


def forward(params: ModelParams, features) -> np.ndarray:
    """Logits for a feature matrix; pure function of (params, features)."""
    logits, _ = _forward_cached(params, features)
    return logits


def _forward_cached(params: ModelParams, features):
    """Forward pass that also returns the per-layer inputs and pre-activations."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise ShapeError(
            f"features must be (m, {params.n_inputs}), got {x.shape}"
        )
    last = len(params.weights) - 1
    layer_inputs = [x]
    pre_acts = []
    a = x
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre_acts.append(z)
        a = _activate(z, params.activation) if l < last else z
        layer_inputs.append(a)
    return a, (layer_inputs, pre_acts)


def _backprop(params: ModelParams, cache, dlogits: np.ndarray) -> ParamGrads:
    """Chain rule back through the cached forward pass for a given output gradient."""
    layer_inputs, pre_acts = cache
    n_layers = len(params.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    dz = dlogits
    for l in range(n_layers - 1, -1, -1):
        grads_w[l] = layer_inputs[l].T @ dz
        grads_b[l] = dz.sum(axis=0)
        if l > 0:
            dz = (dz @ params.weights[l].T) * _activate_deriv(pre_acts[l - 1], params.activation)
    return ParamGrads(grads_w, grads_b)


def softmax_xent(logits, soft_labels):
    """Mean softmax cross-entropy and its gradient in the logits.

    loss = mean over rows of -sum_k y_k * log softmax(z)_k, computed with
    max-shift stabilization; dlogits = (softmax(z) - y) / m. The loss is
    exactly linear in the soft-label argument.
    """
    z = np.asarray(logits, dtype=float)
    y = np.asarray(soft_labels, dtype=float)
    if z.ndim != 2 or z.shape != y.shape:
        raise ShapeError(f"logits {z.shape} and soft_labels {y.shape} must match and be 2-D")
    if not np.isfinite(z).all() or not np.isfinite(y).all():
        raise NumericError("softmax_xent received non-finite input")
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    m = z.shape[0]
    loss = -(y * log_probs).sum() / m
    dlogits = (np.exp(log_probs) - y) / m
    return float(loss), dlogits


def backward(params: ModelParams, batch: Batch):
    """Loss and exact analytic parameter gradients of softmax_xent(forward(.))."""
    logits, cache = _forward_cached(params, batch.features)
    loss, dlogits = softmax_xent(logits, batch.soft_labels)
    return loss, _backprop(params, cache, dlogits)


def sgd_step(params: ModelParams, grads: ParamGrads, state: OptimState, epoch: int):
    """One momentum-SGD update, in place.

    velocity <- momentum * velocity - lr(epoch) * grad; params <- params + velocity.
    Returns the mutated (params, state) pair.
    """
    if not state.learning_rate > 0:
        raise ConfigurationError(f"learning rate must be positive, got {state.learning_rate}")
    if len(grads.weights) != len(params.weights):
        raise ShapeError("gradient layer count does not match the model")
    for g, w in zip(grads.weights, params.weights):
        if g.shape != w.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match weights {w.shape}")
    if state.velocity_weights is None:
        state.velocity_weights = [np.zeros_like(w) for w in params.weights]
        state.velocity_biases = [np.zeros_like(b) for b in params.biases]
    lr = state.lr_at(epoch)
    for w, g, v in zip(params.weights, grads.weights, state.velocity_weights):
        v *= state.momentum
        v -= lr * g
        w += v
    for b, g, v in zip(params.biases, grads.biases, state.velocity_biases):
        v *= state.momentum
        v -= lr * g
        b += v
    return params, state


def to_dict(params: ModelParams) -> dict:
    return {
        "layer_sizes": [int(s) for s in params.layer_sizes],
        "activation": params.activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def from_dict(doc: dict) -> ModelParams:
    try:
        return ModelParams(
            layer_sizes=list(doc["layer_sizes"]),
            weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
            biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
            activation=doc.get("activation", "relu"),
        )
    except KeyError as exc:
        raise ConfigurationError(f"model document is missing field {exc}") from exc


def save_model(params: ModelParams, path) -> None:
    """Write the model as JSON; float repr keeps the round trip lossless."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(params), fh)
        fh.write("\n")


def load_model(path) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        return from_dict(json.load(fh))
