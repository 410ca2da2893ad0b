"""Quantify qualitative spatial relations as Gaussian mixtures over
distance and orientation, and use them to locate unknown places."""

__version__ = "0.1.0"

from .divergence import KlEstimate, kl_divergence, kl_symmetric
from .geo import (
    CartesianPoint,
    GeoPoint,
    ProjectionConfig,
    SpatialFeature,
    extract_feature,
    feature_to_point,
    project,
)
from .gmm import EmConfig, GaussianComponent, GmmModel, em_fit, gaussian_pdf, gmm_pdf, log_likelihood
from .greedy import GreedyConfig, GreedyTrace, fit_greedy, fit_one_component, propose_candidates
from .grid import GridSpec, Observation, ProbabilityGrid, infer_location, relation_heatmap, sweep_components
from .kde import KdeModel, kde_density, kde_sample, rule_of_thumb_bandwidth

__all__ = [
    "CartesianPoint", "EmConfig", "GaussianComponent", "GeoPoint", "GmmModel",
    "GreedyConfig", "GreedyTrace", "GridSpec", "KdeModel", "KlEstimate",
    "Observation", "ProbabilityGrid", "ProjectionConfig", "SpatialFeature",
    "em_fit", "extract_feature", "feature_to_point", "fit_greedy",
    "fit_one_component", "gaussian_pdf", "gmm_pdf", "infer_location",
    "kde_density", "kde_sample", "kl_divergence", "kl_symmetric",
    "log_likelihood", "project", "propose_candidates", "relation_heatmap",
    "rule_of_thumb_bandwidth", "sweep_components",
]
