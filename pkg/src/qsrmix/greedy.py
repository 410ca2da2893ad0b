"""Greedy component-by-component mixture learning.

Start from the maximum-likelihood single Gaussian, then repeatedly:
propose candidate components, blend the best one in as
``(1 - w) * p_M + w * g``, run full EM, and keep the result only if the
converged log-likelihood beats the previous model. Stops on the first
rejected insertion or at ``max_components``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InsufficientDataError
from .gmm import (
    COLLAPSE_MASS,
    COVARIANCE_MODES,
    EmConfig,
    GaussianComponent,
    GmmModel,
    _as_data,
    em_fit,
    floor_covariance,
    gaussian_logpdf,
    log_joint,
    log_likelihood,
    weighted_moments,
)

log = logging.getLogger(__name__)

# Upper bound on a candidate's mixing weight so the existing mixture keeps mass.
MAX_CANDIDATE_WEIGHT = 1.0 - 1e-6


@dataclass(frozen=True)
class GreedyConfig:
    max_components: int = 10
    candidates_per_component: int = 2
    partial_em_iterations: int = 20
    em: EmConfig = field(default_factory=EmConfig)
    seed: int = 42
    covariance_mode: str = "diagonal"

    def __post_init__(self):
        if self.max_components < 1:
            raise ValueError("max_components must be >= 1")
        if self.candidates_per_component < 1:
            raise ValueError("candidates_per_component must be >= 1")
        if self.partial_em_iterations < 1:
            raise ValueError("partial_em_iterations must be >= 1")
        if self.covariance_mode not in COVARIANCE_MODES:
            raise ValueError(f"unknown covariance mode {self.covariance_mode!r}")


@dataclass(frozen=True)
class GreedyStep:
    component_count: int
    log_likelihood: float
    accepted: bool


@dataclass
class GreedyTrace:
    steps: list[GreedyStep] = field(default_factory=list)

    @property
    def accepted(self) -> list[GreedyStep]:
        return [s for s in self.steps if s.accepted]

    @property
    def final_log_likelihood(self) -> float:
        return self.accepted[-1].log_likelihood

    @property
    def baseline_log_likelihood(self) -> float:
        return self.steps[0].log_likelihood


def fit_one_component(data, covariance_mode: str = "diagonal",
                      variance_floor: float = EmConfig().variance_floor,
                      relation_label: str = "") -> GmmModel:
    """Closed-form ML single Gaussian: sample mean and (1/n) covariance."""
    x = _as_data(data)
    if x.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 feature vectors, got {x.shape[0]}"
        )
    mean, cov = weighted_moments(x, np.ones(x.shape[0]), covariance_mode, variance_floor)
    return GmmModel([1.0], [mean], [cov], covariance_mode, relation_label)


def _partial_em(x, log_p, mean, cov, weight, cfg: GreedyConfig):
    """EM on one candidate (mean, cov, weight) with the current mixture held fixed."""
    mode, floor = cfg.covariance_mode, cfg.em.variance_floor
    n = x.shape[0]
    for _ in range(cfg.partial_em_iterations):
        a = np.log1p(-weight) + log_p
        b = np.log(weight) + gaussian_logpdf(x, mean, cov)
        r = np.exp(b - np.logaddexp(a, b))
        mass = r.sum()
        if mass < COLLAPSE_MASS:
            return None
        weight = min(mass / n, MAX_CANDIDATE_WEIGHT)
        mean, cov = weighted_moments(x, r, mode, floor)
    return weight, mean, cov


def propose_candidates(model: GmmModel, data, cfg: GreedyConfig, seed=None):
    """Candidate components for insertion into ``model``.

    For every existing component, ``cfg.candidates_per_component`` pairs of
    points are drawn with probability proportional to that component's
    responsibilities. The member of the pair worse explained by the current
    mixture becomes the candidate mean, the covariance starts at half the
    parent's, and the weight at ``0.5 / (M + 1)``. Each candidate is then
    refined by partial EM.

    Returns a list of ``(GaussianComponent, weight)``; it may be empty.
    """
    x = _as_data(data)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    lj = log_joint(model, x)
    log_p = logsumexp(lj, axis=1)
    resp = np.exp(lj - log_p[:, None])
    m = model.n_components
    w0 = 0.5 / (m + 1)
    out = []
    for i in range(m):
        r = resp[:, i]
        if np.count_nonzero(r > 0) < 2:
            continue
        prob = r / r.sum()
        cov0 = floor_covariance(0.5 * model.covs[i], cfg.covariance_mode, cfg.em.variance_floor)
        for _ in range(cfg.candidates_per_component):
            pair = rng.choice(x.shape[0], size=2, replace=False, p=prob)
            seed_pt = pair[np.argmin(log_p[pair])]
            refined = _partial_em(x, log_p, x[seed_pt].copy(), cov0, w0, cfg)
            if refined is None:
                continue
            w, mean, cov = refined
            out.append((GaussianComponent(float(w), mean, cov), float(w)))
    return out


def insert_component(model: GmmModel, component: GaussianComponent, weight: float) -> GmmModel:
    weights = np.append((1.0 - weight) * model.weights, weight)
    return model.replace(
        weights=weights / weights.sum(),
        means=np.vstack([model.means, component.mean[None, :]]),
        covs=np.concatenate([model.covs, component.cov[None, :, :]]),
    )


def _blend_log_likelihood(log_p, x, cand: GaussianComponent, weight: float) -> float:
    lg = gaussian_logpdf(x, cand.mean, cand.cov)
    return float(np.sum(np.logaddexp(np.log1p(-weight) + log_p, np.log(weight) + lg)))


def fit_greedy(data, cfg: GreedyConfig = GreedyConfig(), relation_label: str = ""):
    """Greedy EM. Returns ``(model, trace)``.

    An insertion is accepted when the converged log-likelihood exceeds the
    previous one by more than ``cfg.em.ll_tolerance`` relative, the
    resolution to which EM itself converges.
    """
    x = _as_data(data)
    model = fit_one_component(x, cfg.covariance_mode, cfg.em.variance_floor, relation_label)
    ll = log_likelihood(model, x)
    trace = GreedyTrace([GreedyStep(1, ll, True)])
    while model.n_components < cfg.max_components and x.shape[0] > model.n_components:
        m = model.n_components
        cands = propose_candidates(model, x, cfg, seed=[cfg.seed, m])
        if not cands:
            log.debug("no viable candidates at M=%d", m)
            break
        log_p = logsumexp(log_joint(model, x), axis=1)
        scores = [_blend_log_likelihood(log_p, x, c, w) for c, w in cands]
        best = int(np.argmax(scores))
        cand, w = cands[best]
        fitted, em_trace = em_fit(insert_component(model, cand, w), x, cfg.em)
        new_ll = em_trace[-1]
        if new_ll > ll + cfg.em.ll_tolerance * abs(ll):
            model, ll = fitted, new_ll
            trace.steps.append(GreedyStep(m + 1, new_ll, True))
        else:
            trace.steps.append(GreedyStep(m + 1, new_ll, False))
            break
    return model, trace
