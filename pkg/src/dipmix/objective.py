"""Training objectives for mixed and unmixed classifiers.

Plain empirical risk, the label-mixing (Mixup-style) loss, the S-draw
label-preserving Jensen surrogate whose inner average runs over logits, and
two verification oracles: a quadrature check of the label-mixing /
label-preserving equivalence, and a Monte-Carlo check that the surrogate is
monotone nonincreasing in the number of draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, DomainError, ShapeError
from .mixing import BetaParams, MixConfig, beta_pdf, lambda_prior, sample_lambda, sample_partners
from .nn import (
    Batch,
    ModelParams,
    OptimState,
    _backprop,
    _forward_cached,
    backward,
    forward,
    sgd_step,
    softmax_xent,
)


@dataclass(frozen=True)
class LossEstimate:
    """A Monte-Carlo loss estimate with its standard error."""

    value: float
    std_error: float
    n_reps: int

    def __post_init__(self):
        if self.std_error < 0 or self.n_reps < 1:
            raise ConfigurationError("std_error must be >= 0 and n_reps >= 1")


class EpochMetrics(NamedTuple):
    epoch: int
    train_loss: float
    train_acc: float
    lr: float


def _xent_rows(logits: np.ndarray, soft_labels: np.ndarray) -> np.ndarray:
    """Per-row softmax cross-entropy, max-shift stabilized."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return -(soft_labels * log_probs).sum(axis=1)


def plain_loss(params: ModelParams, batch: Batch) -> float:
    """Mean softmax cross-entropy on the raw features."""
    loss, _ = softmax_xent(forward(params, batch.features), batch.soft_labels)
    return loss


def _check_lam(lam, m: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape[0] != m:
        raise ShapeError(f"lam must have one entry per example, got shape {lam.shape}")
    if np.any(lam < 0) or np.any(lam > 1):
        raise DomainError("mixing ratios must lie in [0, 1]")
    return lam


def _mixup_core(params, batch, alpha, rng, lam, partners, with_grads):
    x, y = batch.features, batch.soft_labels
    m = x.shape[0]
    if lam is None:
        lam = sample_lambda(lambda_prior("label_mixing", alpha), rng, size=m)
    else:
        lam = _check_lam(lam, m)
    if partners is None:
        partners = sample_partners(m, m, "batch_permutation", rng)
    col = lam[:, None]
    mixed_x = col * x + (1.0 - col) * x[partners]
    mixed_y = col * y + (1.0 - col) * y[partners]
    if not with_grads:
        loss, _ = softmax_xent(forward(params, mixed_x), mixed_y)
        return loss, None
    logits, cache = _forward_cached(params, mixed_x)
    loss, dlogits = softmax_xent(logits, mixed_y)
    return loss, _backprop(params, cache, dlogits)


def mixup_loss(params: ModelParams, batch: Batch, alpha: float, rng, *,
               lam=None, partners=None) -> float:
    """Label-mixing loss: one Beta(alpha, alpha) ratio per example, partner by
    in-batch permutation, loss on mixed features with mixed soft labels.

    ``lam`` and ``partners`` override the random draws when given.
    """
    loss, _ = _mixup_core(params, batch, alpha, rng, lam, partners, with_grads=False)
    return loss


def mixup_loss_grad(params: ModelParams, batch: Batch, alpha: float, rng, *,
                    lam=None, partners=None):
    """mixup_loss together with its analytic parameter gradients."""
    return _mixup_core(params, batch, alpha, rng, lam, partners, with_grads=True)


def _dip_draws(m: int, cfg: MixConfig, rng):
    prior = lambda_prior(cfg.mode, cfg.alpha)
    if prior is None:
        lam = np.ones((m, cfg.s))
    else:
        lam = sample_lambda(prior, rng, size=m * cfg.s).reshape(m, cfg.s)
    if cfg.partner == "batch_permutation":
        partners = np.column_stack(
            [sample_partners(m, m, "batch_permutation", rng) for _ in range(cfg.s)]
        )
    else:
        partners = sample_partners(m, m * cfg.s, "dataset_uniform", rng).reshape(m, cfg.s)
    return lam, partners


def _dip_core(params, batch, cfg, rng, lam, partners, with_grads):
    if cfg.mode == "label_mixing":
        raise ConfigurationError(
            "label_mixing is handled by mixup_loss; this objective preserves labels"
        )
    x, y = batch.features, batch.soft_labels
    m, k = y.shape
    s = cfg.s
    if lam is None and partners is None:
        lam, partners = _dip_draws(m, cfg, rng)
    elif lam is None or partners is None:
        raise ConfigurationError("lam and partners must be overridden together")
    lam = np.asarray(lam, dtype=float).reshape(m, s)
    partners = np.asarray(partners).reshape(m, s)
    col = lam.reshape(-1, 1)
    own = np.repeat(np.arange(m), s)
    mixed = col * x[own] + (1.0 - col) * x[partners.reshape(-1)]
    if not with_grads:
        avg_logits = forward(params, mixed).reshape(m, s, k).mean(axis=1)
        loss, _ = softmax_xent(avg_logits, y)
        return loss, None
    logits, cache = _forward_cached(params, mixed)
    avg_logits = logits.reshape(m, s, k).mean(axis=1)
    loss, davg = softmax_xent(avg_logits, y)
    # each of the s branches of one example carries an equal share of its gradient
    dlogits = np.repeat(davg / s, s, axis=0)
    return loss, _backprop(params, cache, dlogits)


def dip_loss_preserving(params: ModelParams, batch: Batch, cfg: MixConfig, rng, *,
                        lam=None, partners=None) -> float:
    """Jensen surrogate of the marginalized risk, labels preserved.

    For each example, cfg.s (ratio, partner) pairs are drawn with
    ratio ~ Beta(alpha+1, alpha); the s network outputs of the mixed inputs
    are averaged in logit space before the cross-entropy. With cfg.mode
    "none" the ratios are pinned at 1 and the value equals plain_loss.
    """
    loss, _ = _dip_core(params, batch, cfg, rng, lam, partners, with_grads=False)
    return loss


def dip_loss_preserving_grad(params: ModelParams, batch: Batch, cfg: MixConfig, rng, *,
                             lam=None, partners=None):
    """dip_loss_preserving with analytic gradients flowing through all s branches."""
    return _dip_core(params, batch, cfg, rng, lam, partners, with_grads=True)


def prop1_check(params: ModelParams, dataset: Dataset, alpha: float,
                quad_nodes: int = 128, loss_rows=None):
    """Brute-force check that label-mixing under Beta(alpha, alpha) equals
    label-preserving under Beta(alpha+1, alpha) for losses linear in the label.

    Both sides average over all n^2 ordered pairs and integrate the ratio with
    Gauss-Legendre quadrature on [0, 1], the Beta density folded into the
    integrand and both integrals sharing one node set. Returns
    (lhs, rhs, abs_diff); a label-linear loss makes abs_diff vanish.

    ``loss_rows(logits, labels) -> per-row losses`` replaces the default
    cross-entropy, e.g. to demonstrate that a label-nonlinear loss breaks the
    equality.
    """
    n = dataset.n
    if n > 32:
        raise ConfigurationError(f"pair enumeration is quadratic; need n <= 32, got {n}")
    if quad_nodes < 64:
        raise ConfigurationError(f"need at least 64 quadrature nodes, got {quad_nodes}")
    if alpha < 0.5:
        raise ConfigurationError(
            f"alpha must be >= 0.5 (the ratio density is unbounded below that), got {alpha}"
        )
    if loss_rows is None:
        loss_rows = _xent_rows
    x, y = dataset.features, dataset.labels
    first = np.repeat(np.arange(n), n)
    second = np.tile(np.arange(n), n)
    xi, xk = x[first], x[second]
    yi, yk = y[first], y[second]
    nodes, weights = np.polynomial.legendre.leggauss(quad_nodes)
    lam_nodes = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    pdf_mixing = beta_pdf(lam_nodes, alpha, alpha)
    pdf_preserving = beta_pdf(lam_nodes, alpha + 1.0, alpha)
    lhs = 0.0
    rhs = 0.0
    for q in range(quad_nodes):
        lam = lam_nodes[q]
        logits = forward(params, lam * xi + (1.0 - lam) * xk)
        mixed_labels = lam * yi + (1.0 - lam) * yk
        lhs += w[q] * pdf_mixing[q] * float(loss_rows(logits, mixed_labels).mean())
        rhs += w[q] * pdf_preserving[q] * float(loss_rows(logits, yi).mean())
    return lhs, rhs, abs(lhs - rhs)


def jensen_check(params: ModelParams, dataset: Dataset, alpha: float, s_list,
                 reps: int, rng, *, s_proxy: int = 256, proxy_reps: int = 64,
                 loss_rows=None):
    """Monte-Carlo estimates of the Jensen surrogate for each draw count in
    s_list, on frozen params, plus a large-draw proxy for the marginalized
    risk itself.

    Ratios follow Beta(alpha+1, alpha); partners are i.i.d. uniform over the
    dataset. Returns (estimates aligned with s_list, proxy estimate); the
    estimates are monotone nonincreasing in s up to Monte-Carlo noise and the
    proxy is their common limit. ``loss_rows`` replaces the cross-entropy with
    another per-row functional of the averaged logits (a linear functional
    collapses the ordering to equality).
    """
    if reps < 1000:
        raise ConfigurationError(f"need reps >= 1000 for stable standard errors, got {reps}")
    if loss_rows is None:
        loss_rows = _xent_rows
    prior = BetaParams(alpha + 1.0, alpha)
    x, y = dataset.features, dataset.labels
    n, k = y.shape

    def estimate(s: int, n_reps: int) -> LossEstimate:
        vals = np.empty(n_reps)
        chunk = max(1, 200_000 // (n * s))
        own_one = np.repeat(np.arange(n), s)
        done = 0
        while done < n_reps:
            r = min(chunk, n_reps - done)
            rows = r * n * s
            lam = sample_lambda(prior, rng, size=rows)[:, None]
            partners = rng.integers(0, n, size=rows)
            own = np.tile(own_one, r)
            mixed = lam * x[own] + (1.0 - lam) * x[partners]
            avg_logits = forward(params, mixed).reshape(r, n, s, k).mean(axis=2)
            losses = loss_rows(avg_logits.reshape(r * n, k), np.tile(y, (r, 1)))
            vals[done:done + r] = losses.reshape(r, n).mean(axis=1)
            done += r
        return LossEstimate(float(vals.mean()),
                            float(vals.std(ddof=1) / np.sqrt(n_reps)) if n_reps > 1 else 0.0,
                            n_reps)

    estimates = [estimate(int(s), reps) for s in s_list]
    proxy = estimate(s_proxy, proxy_reps)
    return estimates, proxy


def train(params: ModelParams, train_set: Dataset, cfg: MixConfig, optim: OptimState,
          epochs: int, batch_size: int, rng):
    """Minibatch training loop dispatching on the mix mode.

    Shuffles every epoch, draws fresh mixing tables per batch, and records
    (epoch, mean objective loss, raw-feature argmax accuracy, learning rate).
    Configuration problems surface before any update runs.
    """
    if epochs < 1:
        raise ConfigurationError(f"epochs must be >= 1, got {epochs}")
    if not 1 <= batch_size <= train_set.n:
        raise ConfigurationError(
            f"batch_size must lie in [1, {train_set.n}], got {batch_size}"
        )
    if train_set.d != params.n_inputs or train_set.k != params.n_outputs:
        raise ShapeError(
            f"model is {params.n_inputs}->{params.n_outputs} but data is "
            f"{train_set.d}->{train_set.k}"
        )
    if cfg.mode != "none" and not cfg.alpha > 0:
        raise ConfigurationError(f"mode {cfg.mode!r} requires alpha > 0")
    x, y = train_set.features, train_set.labels
    n = train_set.n
    metrics = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            batch = Batch(x[idx], y[idx])
            if cfg.mode == "label_mixing":
                loss, grads = mixup_loss_grad(params, batch, cfg.alpha, rng)
            elif cfg.mode == "label_preserving":
                loss, grads = dip_loss_preserving_grad(params, batch, cfg, rng)
            else:
                loss, grads = backward(params, batch)
            sgd_step(params, grads, optim, epoch)
            total += loss * len(batch)
        preds = forward(params, x).argmax(axis=1)
        acc = float((preds == train_set.class_ids()).mean())
        metrics.append(EpochMetrics(epoch, total / n, acc, optim.lr_at(epoch)))
    return params, metrics
