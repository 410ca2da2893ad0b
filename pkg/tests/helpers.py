"""Synthetic data generators shared by the test modules."""

import numpy as np

from qsrmix.kde import KdeModel, kde_sample
from qsrmix.greedy import GreedyConfig, fit_greedy


def truncated_normal(rng, mean, sd, size, low=-np.inf, high=np.inf):
    out = rng.normal(mean, sd, size)
    bad = (out < low) | (out >= high)
    while bad.any():
        out[bad] = rng.normal(mean, sd, bad.sum())
        bad = (out < low) | (out >= high)
    return out


def north_features(rng, n, distance=(5.0, 2.0), orientation=(90.0, 15.0)):
    d = truncated_normal(rng, *distance, n, low=0.0)
    o = truncated_normal(rng, *orientation, n, low=0.0, high=360.0)
    return np.column_stack([d, o])


def near_features(rng, n, distance=(5.0, 2.0)):
    d = truncated_normal(rng, *distance, n, low=0.0)
    o = rng.uniform(0.0, 360.0, n)
    return np.column_stack([d, o])


def clusters(rng, centers, n_each, sd=1.0):
    return np.vstack([rng.normal(c, sd, size=(n_each, 2)) for c in centers])


THREE_CENTERS = ([0.0, 0.0], [12.0, 0.0], [0.0, 12.0])


def train_relation(observed, seed, count=1000, cfg=None, label=""):
    """KDE-augment a small observed set and fit greedy EM on the synthetic rows."""
    kde = KdeModel.fit(observed)
    synth = kde_sample(kde, count, seed)
    cfg = cfg or GreedyConfig(seed=seed)
    return fit_greedy(synth, cfg, relation_label=label)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_REPORT: list[str] = []
