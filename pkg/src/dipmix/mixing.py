"""Sample-mixing primitives.

The convex-combination map between two feature vectors, Beta priors over the
mixing ratio, draws from those priors, and partner selection. A prior of
``None`` stands everywhere for the degenerate distribution with all mass at
ratio 1, i.e. no mixing at all; under it a mixed classifier collapses to its
base network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError

MODES = ("none", "label_mixing", "label_preserving")
PARTNER_STRATEGIES = ("batch_permutation", "dataset_uniform")


@dataclass(frozen=True)
class BetaParams:
    """Shape pair (a, b) of a Beta prior on the mixing ratio."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigurationError(
                f"Beta shape parameters must be positive, got ({self.a}, {self.b})"
            )


@dataclass
class MixConfig:
    """How mixing enters training: mode, ratio prior, draw count, partners.

    ``s`` is the number of mix draws averaged inside the loss for
    label-preserving training; it is ignored for the other modes.
    """

    mode: str = "none"
    alpha: float = 0.0
    s: int = 1
    partner: str = "batch_permutation"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mix mode {self.mode!r}, expected one of {MODES}")
        if self.partner not in PARTNER_STRATEGIES:
            raise ConfigurationError(
                f"unknown partner strategy {self.partner!r}, expected one of {PARTNER_STRATEGIES}"
            )
        if self.alpha < 0:
            raise ConfigurationError(f"alpha must be nonnegative, got {self.alpha}")
        if self.mode != "none" and not self.alpha > 0:
            raise ConfigurationError(f"mode {self.mode!r} requires alpha > 0, got {self.alpha}")
        if self.s < 1:
            raise ConfigurationError(f"sample count s must be >= 1, got {self.s}")


def mix(x, x_prime, lam: float) -> np.ndarray:
    """Convex combination lam * x + (1 - lam) * x_prime.

    Endpoints are exact: lam=1 returns x, lam=0 returns x_prime.
    """
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape:
        raise ShapeError(f"mix operands differ in shape: {x.shape} vs {x_prime.shape}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"mixing ratio must lie in [0, 1], got {lam}")
    return lam * x + (1.0 - lam) * x_prime


def lambda_prior(mode: str, alpha: float) -> BetaParams | None:
    """Ratio prior for a training mode.

    label_preserving -> Beta(alpha+1, alpha); label_mixing -> Beta(alpha, alpha);
    none -> None, the point mass at 1.
    """
    if mode == "none":
        return None
    if mode not in MODES:
        raise ConfigurationError(f"unknown mix mode {mode!r}")
    if not alpha > 0:
        raise ConfigurationError(f"mode {mode!r} requires alpha > 0, got {alpha}")
    if mode == "label_mixing":
        return BetaParams(alpha, alpha)
    return BetaParams(alpha + 1.0, alpha)


def _gamma_mt(shape: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized Marsaglia-Tsang gamma variates, unit scale.

    Squeeze/rejection for shape >= 1; shapes below 1 use the standard
    boost G(a) = G(a+1) * U^(1/a).
    """
    if shape < 1.0:
        g = _gamma_mt(shape + 1.0, rng, size)
        u = rng.random(size)
        return g * u ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        x = rng.standard_normal(pending.size)
        v = (1.0 + c * x) ** 3
        u = rng.random(pending.size)
        pos = v > 0
        vs = np.where(pos, v, 1.0)  # placeholder keeps log finite; masked out below
        accept = pos & (
            (u < 1.0 - 0.0331 * x**4)
            | (np.log(u) < 0.5 * x**2 + d * (1.0 - vs + np.log(vs)))
        )
        out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    return out


def sample_lambda(prior: BetaParams | None, rng: np.random.Generator, size=None):
    """Draw mixing ratios from the prior.

    Beta draws come from two Marsaglia-Tsang gamma variates, clamped to [0, 1]
    against rounding. The degenerate prior (None) yields exactly 1. With
    ``size=None`` returns a scalar, otherwise an array of that length.
    """
    scalar = size is None
    n = 1 if scalar else int(size)
    if prior is None:
        lam = np.ones(n)
    else:
        ga = _gamma_mt(prior.a, rng, n)
        gb = _gamma_mt(prior.b, rng, n)
        lam = ga / (ga + gb)
        np.clip(lam, 0.0, 1.0, out=lam)
    return float(lam[0]) if scalar else lam


def sample_partners(n: int, m: int, strategy: str, rng: np.random.Generator) -> np.ndarray:
    """Indices of mix partners for m items drawn against a pool of size n.

    batch_permutation: a uniform random permutation of 0..m-1 (requires that
    m is the batch size itself). dataset_uniform: i.i.d. uniform indices in
    0..n-1, the empirical feature distribution.
    """
    if n < 1:
        raise ConfigurationError("partner pool is empty")
    if m < 1:
        raise ConfigurationError(f"need at least one partner index, got m={m}")
    if strategy == "batch_permutation":
        return rng.permutation(m)
    if strategy == "dataset_uniform":
        return rng.integers(0, n, size=m)
    raise ConfigurationError(f"unknown partner strategy {strategy!r}")


def beta_pdf(lam, a: float, b: float) -> np.ndarray:
    """Beta(a, b) density evaluated at interior points of (0, 1)."""
    lam = np.asarray(lam, dtype=float)
    log_norm = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return np.exp((a - 1.0) * np.log(lam) + (b - 1.0) * np.log1p(-lam) - log_norm)
