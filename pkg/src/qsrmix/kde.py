"""Gaussian kernel density estimation used to populate small feature sets.

The kernel covariance is ``diag(h1**2, h2**2)`` where ``h1`` (km) and ``h2``
(degrees) come from the normal-reference rule of thumb

    h_b = sigma_b * (4 / ((d + 2) n)) ** (1 / (d + 4)),   d = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError

DIM = 2


def _as_features(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1 and arr.size == DIM:
        arr = arr.reshape(1, DIM)
    if arr.ndim != 2 or arr.shape[1] != DIM:
        raise ValueError(f"expected an (n, 2) feature array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("features must be finite")
    return arr


def rule_of_thumb_bandwidth(samples, floor: float | None = None) -> tuple[float, float]:
    """Per-dimension rule-of-thumb bandwidths ``(h1, h2)``.

    Parameters
    ----------
    samples : array_like, shape (n, 2)
        Distance/orientation features, ``n >= 2``.
    floor : float, optional
        If given, bandwidths are raised to at least this value instead of
        raising on zero-variance dimensions.

    Raises
    ------
    DegenerateDataError
        A dimension has zero sample variance and no floor was supplied.
    """
    x = _as_features(samples)
    n = x.shape[0]
    if n < 2:
        raise ValueError("rule-of-thumb bandwidth needs at least 2 samples")
    sigma = x.std(axis=0, ddof=1)
    factor = (4.0 / ((DIM + 2) * n)) ** (1.0 / (DIM + 4))
    h = sigma * factor
    if floor is not None:
        h = np.maximum(h, floor)
    bad = [name for name, v in zip(("distance", "orientation"), h) if not v > 0]
    if bad:
        raise DegenerateDataError(
            f"zero variance in {', '.join(bad)}; supply a bandwidth floor"
        )
    return float(h[0]), float(h[1])


@dataclass(frozen=True)
class KdeModel:
    samples: np.ndarray
    bandwidth: tuple[float, float]

    def __post_init__(self):
        x = _as_features(self.samples)
        if x.shape[0] < 2:
            raise ValueError("a KDE model needs at least 2 samples")
        h = tuple(float(v) for v in self.bandwidth)
        if len(h) != DIM or not all(v > 0 and math.isfinite(v) for v in h):
            raise ValueError(f"bandwidths must be positive, got {self.bandwidth}")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "bandwidth", h)

    @classmethod
    def fit(cls, samples, floor: float | None = None) -> "KdeModel":
        return cls(samples, rule_of_thumb_bandwidth(samples, floor=floor))

    @property
    def n(self) -> int:
        return self.samples.shape[0]


def kde_density(model: KdeModel, x) -> np.ndarray | float:
    """Evaluate the estimator at one feature or an ``(m, 2)`` array of them."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, DIM)
    h = np.asarray(model.bandwidth)
    norm = 1.0 / (2.0 * math.pi * h[0] * h[1])
    out = np.empty(pts.shape[0])
    # chunk to bound the (m, n) temporary
    step = max(1, 2_000_000 // model.n)
    for start in range(0, pts.shape[0], step):
        z = (pts[start:start + step, None, :] - model.samples[None, :, :]) / h
        out[start:start + step] = norm * np.exp(-0.5 * np.sum(z * z, axis=-1)).mean(axis=1)
    return float(out[0]) if single else out


def _draw(model: KdeModel, count: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.integers(0, model.n, size=count)
    noise = rng.standard_normal((count, DIM)) * np.asarray(model.bandwidth)
    return model.samples[idx] + noise


def kde_sample(model: KdeModel, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` semi-synthetic features, deterministic in ``seed``.

    Distances are clamped at zero and orientations wrapped into [0, 360).
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out = _draw(model, int(count), np.random.default_rng(seed))
    out[:, 0] = np.maximum(out[:, 0], 0.0)
    out[:, 1] = np.mod(out[:, 1], 360.0)
    out[out[:, 1] >= 360.0, 1] = 0.0
    return out
