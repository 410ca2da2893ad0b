"""Bivariate Gaussian mixture models and their EM fit.

A model stores its parameters as arrays: ``weights`` (M,), ``means`` (M, 2)
and ``covs`` (M, 2, 2). Features enter unnormalised (km, degrees). All
density work is done in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import (
    CollapsedComponentError,
    SingularCovarianceError,
    ZeroDensityError,
)

DIM = 2
LOG_2PI = math.log(2.0 * math.pi)
COVARIANCE_MODES = ("diagonal", "full")

# Responsibility mass below which a component is considered dead.
COLLAPSE_MASS = 1e-12


class GaussianComponent(NamedTuple):
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 500
    ll_tolerance: float = 1e-6
    variance_floor: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.ll_tolerance > 0:
            raise ValueError("ll_tolerance must be > 0")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be > 0")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GmmModel:
    """A weighted sum of bivariate Gaussians quantifying one relation."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    covariance_mode: str = "diagonal"
    relation_label: str = ""
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = _frozen(self.weights).reshape(-1)
        mu = _frozen(self.means).reshape(-1, DIM)
        cov = _frozen(self.covs).reshape(-1, DIM, DIM)
        m = w.shape[0]
        if m == 0:
            raise ValueError("a mixture needs at least one component")
        if mu.shape[0] != m or cov.shape[0] != m:
            raise ValueError("weights, means and covs disagree on component count")
        if self.covariance_mode not in COVARIANCE_MODES:
            raise ValueError(f"unknown covariance mode {self.covariance_mode!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
            raise ValueError("mixture parameters must be finite")
        if np.any(w < 0):
            raise ValueError("mixture weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        if self.covariance_mode == "diagonal" and np.any(cov[:, 0, 1] != 0) | np.any(cov[:, 1, 0] != 0):
            raise ValueError("diagonal mode requires zero off-diagonal covariance")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)
        object.__setattr__(self, "_chol", _frozen([_cholesky(c, i) for i, c in enumerate(cov)]))

    @classmethod
    def from_components(cls, components, covariance_mode="diagonal", relation_label=""):
        components = list(components)
        return cls(
            [c.weight for c in components],
            [c.mean for c in components],
            [c.cov for c in components],
            covariance_mode,
            relation_label,
        )

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(float(w), m, c)
            for w, m, c in zip(self.weights, self.means, self.covs)
        ]

    def replace(self, **changes) -> "GmmModel":
        kw = dict(
            weights=self.weights,
            means=self.means,
            covs=self.covs,
            covariance_mode=self.covariance_mode,
            relation_label=self.relation_label,
        )
        kw.update(changes)
        return GmmModel(**kw)


def _cholesky(cov, index=None):
    cov = np.asarray(cov, dtype=float)
    a, b, c, d = cov[0, 0], cov[0, 1], cov[1, 0], cov[1, 1]
    if abs(b - c) > 1e-12 * max(abs(a), abs(d), 1e-300):
        raise SingularCovarianceError(f"covariance {index} is not symmetric")
    if not a > 0:
        raise SingularCovarianceError(f"covariance {index} is not positive definite")
    l00 = math.sqrt(a)
    l10 = b / l00
    rem = d - l10 * l10
    if not rem > 0:
        raise SingularCovarianceError(f"covariance {index} is not positive definite")
    return np.array([[l00, 0.0], [l10, math.sqrt(rem)]])


def _log_gauss_chol(x: np.ndarray, mean, chol) -> np.ndarray:
    diff = x - mean
    with np.errstate(over="ignore", invalid="ignore"):
        z0 = diff[..., 0] / chol[0, 0]
        z1 = (diff[..., 1] - chol[1, 0] * z0) / chol[1, 1]
        maha = z0 * z0 + z1 * z1
    # overflow on finite input means the point is infinitely far away
    maha = np.where(np.isnan(maha) & np.all(np.isfinite(diff), axis=-1), np.inf, maha)
    log_det = 2.0 * (math.log(chol[0, 0]) + math.log(chol[1, 1]))
    return -LOG_2PI - 0.5 * log_det - 0.5 * maha


def gaussian_logpdf(x, mean, cov):
    x = np.asarray(x, dtype=float)
    return _log_gauss_chol(x, np.asarray(mean, dtype=float), _cholesky(cov))


def gaussian_pdf(x, mean, cov):
    """Bivariate normal density at ``x`` (one point or an ``(n, 2)`` array).

    Raises :class:`SingularCovarianceError` unless ``cov`` is symmetric
    positive definite.
    """
    out = np.exp(gaussian_logpdf(x, mean, cov))
    return float(out) if out.ndim == 0 else out


def _as_data(data) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1 and x.size == DIM:
        x = x.reshape(1, DIM)
    if x.ndim != 2 or x.shape[1] != DIM:
        raise ValueError(f"expected an (n, 2) feature array, got shape {x.shape}")
    return x


def log_joint(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """``log w_i + log g(x_j; mu_i, Sigma_i)`` as an ``(n, M)`` array."""
    out = np.empty(x.shape[:-1] + (model.n_components,))
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    for i in range(model.n_components):
        out[..., i] = log_w[i] + _log_gauss_chol(x, model.means[i], model._chol[i])
    return out


def gmm_logpdf(model: GmmModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return logsumexp(log_joint(model, x), axis=-1)


def gmm_pdf(model: GmmModel, x):
    out = np.exp(gmm_logpdf(model, x))
    return float(out) if out.ndim == 0 else out


def responsibilities(model: GmmModel, data) -> np.ndarray:
    lj = log_joint(model, _as_data(data))
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))


def _checked_sum(log_p: np.ndarray) -> float:
    bad = np.flatnonzero(~np.isfinite(log_p))
    if bad.size:
        raise ZeroDensityError(int(bad[0]))
    return float(np.sum(log_p))


def log_likelihood(model: GmmModel, data) -> float:
    """Natural-log likelihood of ``data`` under ``model``.

    Raises :class:`ZeroDensityError` naming the first point whose density is
    zero in floating point.
    """
    x = _as_data(data)
    if x.shape[0] == 0:
        raise ValueError("log-likelihood of an empty dataset")
    return _checked_sum(gmm_logpdf(model, x))


def floor_covariance(cov: np.ndarray, mode: str, floor: float) -> np.ndarray:
    """Project a scatter matrix onto the allowed covariance set.

    Diagonal mode zeroes the off-diagonal and clamps the variances; full mode
    clips eigenvalues. Both are the exact constrained maximisers of the
    Gaussian likelihood, so EM stays monotone.
    """
    if mode == "diagonal":
        return np.diag(np.maximum(np.diag(cov), floor))
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def weighted_moments(x, r, mode, floor):
    """Mean and floored covariance of ``x`` under non-negative weights ``r``."""
    mass = r.sum()
    mean = r @ x / mass
    diff = x - mean
    scatter = (diff * r[:, None]).T @ diff / mass
    return mean, floor_covariance(scatter, mode, floor)


def em_step(model: GmmModel, x: np.ndarray, lj: np.ndarray, floor: float) -> GmmModel:
    resp = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    mass = resp.sum(axis=0)
    for i, m in enumerate(mass):
        if m < COLLAPSE_MASS:
            raise CollapsedComponentError(i, m)
    weights = mass / x.shape[0]
    weights = weights / weights.sum()
    means = np.empty_like(model.means)
    covs = np.empty_like(model.covs)
    for i in range(model.n_components):
        means[i], covs[i] = weighted_moments(x, resp[:, i], model.covariance_mode, floor)
    return model.replace(weights=weights, means=means, covs=covs)


def em_fit(model: GmmModel, data, cfg: EmConfig = EmConfig()):
    """Refine ``model`` on ``data`` by EM.

    Returns the fitted model and the log-likelihood trace, whose first entry
    is the likelihood of the starting model. Iteration stops once the
    relative improvement drops below ``cfg.ll_tolerance``.
    """
    x = _as_data(data)
    if x.shape[0] < model.n_components:
        raise ValueError(
            f"{x.shape[0]} points cannot support {model.n_components} components"
        )
    lj = log_joint(model, x)
    ll = _checked_sum(logsumexp(lj, axis=1))
    trace = [ll]
    for _ in range(cfg.max_iterations):
        model = em_step(model, x, lj, cfg.variance_floor)
        lj = log_joint(model, x)
        new_ll = _checked_sum(logsumexp(lj, axis=1))
        trace.append(new_ll)
        if new_ll - ll < cfg.ll_tolerance * abs(ll):
            break
        ll = new_ll
    return model, trace


def gmm_sample(model: GmmModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral sampling: pick a component by weight, then draw from it."""
    comp = rng.choice(model.n_components, size=count, p=model.weights)
    z = rng.standard_normal((count, DIM))
    chol = model._chol[comp]
    return model.means[comp] + np.einsum("nij,nj->ni", chol, z)
