"""Positional-probability grids, multi-observation fusion and component sweeps.

Cells are evaluated at their centres. Every grid shares one planar frame
centred on the bbox centre. Row 0 is the northernmost row.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .divergence import kl_symmetric
from .errors import InfeasibleFusionError
from .geo import COINCIDENT_KM, GeoPoint, ProjectionConfig, features_from_offsets, project, project_arrays
from .gmm import GmmModel, gmm_logpdf
from .greedy import GreedyConfig, fit_greedy, fit_one_component

DEFAULT_BBOX = (-1.0, 1.0, 51.0, 52.0)
DEFAULT_SHAPE = 50


@dataclass(frozen=True)
class GridSpec:
    bbox: tuple[float, float, float, float] = DEFAULT_BBOX
    nx: int = DEFAULT_SHAPE
    ny: int = DEFAULT_SHAPE
    projection: ProjectionConfig | None = None

    def __post_init__(self):
        lon_min, lon_max, lat_min, lat_max = (float(v) for v in self.bbox)
        if not (lon_min < lon_max and lat_min < lat_max):
            raise ValueError(f"empty bbox {self.bbox}")
        GeoPoint(lon_min, lat_min).validate()
        GeoPoint(lon_max, lat_max).validate()
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one row and column")
        object.__setattr__(self, "bbox", (lon_min, lon_max, lat_min, lat_max))
        if self.projection is None:
            object.__setattr__(self, "projection", ProjectionConfig(self.center.lat))

    @property
    def center(self) -> GeoPoint:
        lon_min, lon_max, lat_min, lat_max = self.bbox
        return GeoPoint(0.5 * (lon_min + lon_max), 0.5 * (lat_min + lat_max))

    @property
    def cell_size(self) -> tuple[float, float]:
        """Cell width and height in degrees."""
        lon_min, lon_max, lat_min, lat_max = self.bbox
        return (lon_max - lon_min) / self.nx, (lat_max - lat_min) / self.ny

    @property
    def cell_area_km2(self) -> float:
        dlon, dlat = self.cell_size
        return dlon * self.projection.km_per_lon_degree * dlat * self.projection.km_per_lat_degree

    def cell_centers(self):
        """``(lon, lat)`` arrays of shape ``(ny, nx)``."""
        lon_min, _, _, lat_max = self.bbox
        dlon, dlat = self.cell_size
        lon = lon_min + (np.arange(self.nx) + 0.5) * dlon
        lat = lat_max - (np.arange(self.ny) + 0.5) * dlat
        return np.meshgrid(lon, lat)

    def cell_center(self, row: int, col: int) -> GeoPoint:
        lon_min, _, _, lat_max = self.bbox
        dlon, dlat = self.cell_size
        return GeoPoint(lon_min + (col + 0.5) * dlon, lat_max - (row + 0.5) * dlat)

    def cell_of(self, p: GeoPoint) -> tuple[int, int]:
        lon_min, lon_max, lat_min, lat_max = self.bbox
        if not (lon_min <= p[0] <= lon_max and lat_min <= p[1] <= lat_max):
            raise ValueError(f"{tuple(p)} is outside the grid")
        dlon, dlat = self.cell_size
        col = min(int((p[0] - lon_min) / dlon), self.nx - 1)
        row = min(int((lat_max - p[1]) / dlat), self.ny - 1)
        return row, col

    def to_km(self, lon, lat):
        return project_arrays(lon, lat, self.center, self.projection)


@dataclass(frozen=True, eq=False)
class ProbabilityGrid:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.spec.ny, self.spec.nx):
            raise ValueError(f"values shape {v.shape} != ({self.spec.ny}, {self.spec.nx})")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("grid values must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def argmax(self) -> tuple[int, int]:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.values), self.values.shape))

    def top_cells(self, k: int):
        """``[(lon, lat, probability), ...]`` for the ``k`` most probable cells."""
        flat = self.values.ravel()
        order = np.argsort(-flat, kind="stable")[:k]
        out = []
        for idx in order:
            row, col = divmod(int(idx), self.spec.nx)
            c = self.spec.cell_center(row, col)
            out.append((c.lon, c.lat, float(flat[idx])))
        return out


@dataclass(frozen=True)
class Observation:
    known: GeoPoint
    relation_model: GmmModel


def _neighbour_fill(log_mass: np.ndarray, holes: np.ndarray) -> np.ndarray:
    out = log_mass.copy()
    ny, nx = log_mass.shape
    for row, col in zip(*np.nonzero(holes)):
        r0, r1 = max(row - 1, 0), min(row + 2, ny)
        c0, c1 = max(col - 1, 0), min(col + 2, nx)
        window = log_mass[r0:r1, c0:c1][~holes[r0:r1, c0:c1]]
        window = window[np.isfinite(window)]
        if window.size:
            out[row, col] = np.logaddexp.reduce(window) - math.log(window.size)
        else:
            out[row, col] = 0.0 if log_mass.size == 1 else -np.inf
    return out


def log_cell_masses(model: GmmModel, spec: GridSpec, known: GeoPoint) -> np.ndarray:
    """Log of density times cell area at every cell centre, before normalisation.

    A cell whose centre coincides with ``known`` gets the mean mass of its
    evaluable neighbours.
    """
    GeoPoint(*known).validate()
    lon, lat = spec.cell_centers()
    x, y = spec.to_km(lon, lat)
    kx, ky = project(known, spec.center, spec.projection)
    feats = features_from_offsets(x - kx, y - ky)
    log_mass = gmm_logpdf(model, feats) + math.log(spec.cell_area_km2)
    holes = feats[..., 0] < COINCIDENT_KM
    if holes.any():
        log_mass = _neighbour_fill(log_mass, holes)
    return log_mass


def _normalise(log_mass: np.ndarray, spec: GridSpec) -> ProbabilityGrid:
    v = np.exp(log_mass - np.max(log_mass))
    return ProbabilityGrid(spec, v / v.sum())


def relation_heatmap(model: GmmModel, spec: GridSpec, known: GeoPoint) -> ProbabilityGrid:
    return infer_location([Observation(GeoPoint(*known), model)], spec)


def infer_location(observations, spec: GridSpec) -> ProbabilityGrid:
    """Fuse observations under conditional independence.

    Log cell masses are summed across observations, exponentiated after a max
    shift, and normalised.
    """
    observations = list(observations)
    if not observations:
        raise ValueError("at least one observation is required")
    total = None
    for i, obs in enumerate(observations):
        lm = log_cell_masses(obs.relation_model, spec, obs.known)
        if not np.any(np.isfinite(lm)):
            raise InfeasibleFusionError(i)
        total = lm if total is None else total + lm
    if not np.any(np.isfinite(total)):
        raise InfeasibleFusionError(None, "observations have no cell in common")
    return _normalise(total, spec)


@dataclass(frozen=True)
class SweepRow:
    cap: int
    mean_log_likelihood: float
    std_log_likelihood: float
    mean_kl_to_baseline: float
    std_kl_to_baseline: float
    mean_components: float
    log_likelihoods: tuple = field(default=(), repr=False)
    kls: tuple = field(default=(), repr=False)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def sweep_components(data, max_range, repetitions: int, cfg: GreedyConfig = GreedyConfig(),
                     kl_samples: int = 10_000, workers: int = 1) -> list[SweepRow]:
    """Repeat greedy fits for each component cap.

    For every cap, ``repetitions`` fits are run with seeds derived from
    ``cfg.seed``, the cap and the repetition index. Each final model is
    compared with the one-component fit by symmetric KL.
    """
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("sweep needs data")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    baseline = fit_one_component(data, cfg.covariance_mode, cfg.em.variance_floor)

    def run(cap: int, rep: int):
        run_cfg = replace(cfg, max_components=cap, seed=derive_seed(cfg.seed, cap, rep))
        model, trace = fit_greedy(data, run_cfg)
        kl = kl_symmetric(model, baseline, kl_samples, derive_seed(cfg.seed, cap, rep, 1))
        return trace.final_log_likelihood, kl.value, model.n_components

    jobs = [(int(cap), rep) for cap in max_range for rep in range(repetitions)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda j: run(*j), jobs))
    else:
        results = [run(*j) for j in jobs]

    rows = []
    for k, cap in enumerate(max_range):
        chunk = results[k * repetitions:(k + 1) * repetitions]
        lls = np.array([r[0] for r in chunk])
        kls = np.array([r[1] for r in chunk])
        comps = np.array([r[2] for r in chunk])
        rows.append(SweepRow(int(cap), float(lls.mean()), float(lls.std()),
                             float(kls.mean()), float(kls.std()), float(comps.mean()),
                             tuple(lls.tolist()), tuple(kls.tolist())))
    return rows
