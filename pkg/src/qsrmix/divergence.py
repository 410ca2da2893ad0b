"""Monte Carlo Kullback-Leibler divergence between mixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gmm import GmmModel, gmm_logpdf, gmm_sample

DEFAULT_SAMPLES = 100_000


@dataclass(frozen=True)
class KlEstimate:
    """KL estimate in nats.

    ``value`` is clamped at zero; ``raw`` keeps the unclamped Monte Carlo mean.
    An infinite ``value`` signals that the second density is exactly zero
    somewhere the first one puts mass.
    """

    value: float
    std_error: float
    sample_count: int
    raw: float

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)


def _log_ratios(f1: GmmModel, f2: GmmModel, samples: int, seed) -> np.ndarray:
    x = gmm_sample(f1, samples, np.random.default_rng(seed))
    with np.errstate(divide="ignore"):
        return gmm_logpdf(f1, x) - gmm_logpdf(f2, x)


def kl_divergence(f1: GmmModel, f2: GmmModel, samples: int = DEFAULT_SAMPLES,
                  seed: int = 0) -> KlEstimate:
    """Estimate D(f1 || f2) from ``samples`` draws of ``f1``."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    d = _log_ratios(f1, f2, samples, seed)
    if np.any(np.isposinf(d)):
        return KlEstimate(math.inf, math.inf, samples, math.inf)
    raw = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return KlEstimate(max(0.0, raw), se, samples, raw)


def kl_symmetric(f1: GmmModel, f2: GmmModel, samples: int = DEFAULT_SAMPLES,
                 seed: int = 0) -> KlEstimate:
    """``(D(f1||f2) + D(f2||f1)) / 2``.

    Each direction samples its own first argument with the same seed, so
    swapping ``f1`` and ``f2`` swaps the two directional estimates and leaves
    the result bit-identical.
    """
    a = kl_divergence(f1, f2, samples, seed)
    b = kl_divergence(f2, f1, samples, seed)
    if a.infinite or b.infinite:
        return KlEstimate(math.inf, math.inf, samples, math.inf)
    raw = 0.5 * (a.raw + b.raw)
    se = 0.5 * math.hypot(a.std_error, b.std_error)
    return KlEstimate(max(0.0, raw), se, samples, raw)


def gaussian_kl(mean1, cov1, mean2, cov2) -> float:
    """Closed-form D(N1 || N2) for two single Gaussians."""
    mean1, mean2 = np.asarray(mean1, float), np.asarray(mean2, float)
    cov1, cov2 = np.asarray(cov1, float), np.asarray(cov2, float)
    inv2 = np.linalg.inv(cov2)
    delta = mean2 - mean1
    k = mean1.shape[0]
    return 0.5 * float(
        np.trace(inv2 @ cov1)
        + delta @ inv2 @ delta
        - k
        + math.log(np.linalg.det(cov2) / np.linalg.det(cov1))
    )
