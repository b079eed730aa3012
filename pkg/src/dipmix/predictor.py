"""Prediction for the marginalized classifier and the raw baseline.

The marginalized ("dip") mode scores a point by drawing S (ratio, partner)
pairs, averaging the network outputs of the mixed inputs in logit space, and
applying softmax; the raw mode is softmax of the unmixed logits. Each scored
item derives its own random stream from (seed, item position), so batched
evaluation is independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .errors import ConfigurationError
from .mixing import BetaParams, sample_lambda
from .nn import ModelParams, forward

PREDICT_MODES = ("raw", "dip")
_STREAM_TAG = 2  # keeps prediction streams disjoint from training streams


@dataclass
class PredictorConfig:
    """Test-stage settings.

    prior None pins the mixing ratio at 1, collapsing dip onto raw.
    partner_pool must hold features in the same (post-standardization) space
    the model was trained on.
    """

    mode: str = "raw"
    s_test: int = 500
    prior: BetaParams | None = None
    partner_pool: np.ndarray = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in PREDICT_MODES:
            raise ConfigurationError(f"unknown predictor mode {self.mode!r}")
        if self.s_test < 1:
            raise ConfigurationError(f"s_test must be >= 1, got {self.s_test}")
        if self.partner_pool is not None:
            self.partner_pool = np.asarray(self.partner_pool, dtype=float)
        if self.mode == "dip" and (self.partner_pool is None or len(self.partner_pool) == 0):
            raise ConfigurationError("dip prediction requires a nonempty partner_pool")


class EvalMetrics(NamedTuple):
    accuracy: float
    misclassification_rate: float
    mean_loss: float


def _softmax_row(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _predict_one(params: ModelParams, x: np.ndarray, cfg: PredictorConfig,
                 item: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if cfg.mode == "raw" or cfg.prior is None:
        # the degenerate prior marginalizes over nothing: f == h exactly
        return _softmax_row(forward(params, x)[0])
    rng = np.random.default_rng([cfg.seed, _STREAM_TAG, item])
    lam = sample_lambda(cfg.prior, rng, size=cfg.s_test)[:, None]
    partners = rng.integers(0, len(cfg.partner_pool), size=cfg.s_test)
    mixed = lam * x + (1.0 - lam) * cfg.partner_pool[partners]
    return _softmax_row(forward(params, mixed).mean(axis=0))


def predict(params: ModelParams, x, cfg: PredictorConfig) -> np.ndarray:
    """Class probabilities for one feature vector; they sum to 1."""
    return _predict_one(params, x, cfg, item=0)


def predict_batch(params: ModelParams, features, cfg: PredictorConfig) -> np.ndarray:
    """Probabilities for each row, one derived stream per row position."""
    features = np.asarray(features, dtype=float)
    if cfg.mode == "raw" or cfg.prior is None:
        return _softmax_row(forward(params, features))
    return np.stack(
        [_predict_one(params, row, cfg, item=i) for i, row in enumerate(features)]
    )


def evaluate(params: ModelParams, dataset: Dataset, cfg: PredictorConfig) -> EvalMetrics:
    """Accuracy, misclassification rate, and mean cross-entropy of the
    predicted probability vectors; argmax ties break to the lowest index."""
    probs = predict_batch(params, dataset.features, cfg)
    preds = probs.argmax(axis=1)
    accuracy = float((preds == dataset.class_ids()).mean())
    losses = -np.log(np.clip((probs * dataset.labels).sum(axis=1), 1e-300, None))
    return EvalMetrics(accuracy, 1.0 - accuracy, float(losses.mean()))


def decision_grid(params: ModelParams, cfg: PredictorConfig, x_range, y_range,
                  resolution: int):
    """Score a row-major grid over the box; top row is the largest y.

    Returns (xs ascending, ys descending, classes, max_probs) with the two
    matrices shaped (resolution, resolution). Only 2-D models are supported.
    """
    if params.n_inputs != 2:
        raise ConfigurationError(
            f"decision grids need a 2-dimensional model, got d={params.n_inputs}"
        )
    if resolution < 1:
        raise ConfigurationError(f"resolution must be >= 1, got {resolution}")
    xs = np.linspace(x_range[0], x_range[1], resolution)
    ys = np.linspace(y_range[1], y_range[0], resolution)
    classes = np.empty((resolution, resolution), dtype=int)
    max_probs = np.empty((resolution, resolution))
    if cfg.mode == "raw" or cfg.prior is None:
        gx, gy = np.meshgrid(xs, ys)
        probs = _softmax_row(forward(params, np.column_stack([gx.ravel(), gy.ravel()])))
        classes[:] = probs.argmax(axis=1).reshape(resolution, resolution)
        max_probs[:] = probs.max(axis=1).reshape(resolution, resolution)
        return xs, ys, classes, max_probs
    for r, yv in enumerate(ys):
        for c, xv in enumerate(xs):
            probs = _predict_one(params, np.array([xv, yv]), cfg, item=r * resolution + c)
            classes[r, c] = int(probs.argmax())
            max_probs[r, c] = float(probs.max())
    return xs, ys, classes, max_probs
