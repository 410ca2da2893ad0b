"""Local planar projection and distance/orientation feature extraction.

Coordinates are projected into a km frame centred on an origin with a simple
equirectangular mapping. Orientation is the counterclockwise angle of the
segment known -> unknown measured from the +x (east) axis, in degrees, and is
treated as a linear variable: the 0/360 seam is not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegeneratePairError, InvalidCoordinateError

KM_PER_DEGREE = 111.32

# Below this separation the orientation of a pair is meaningless.
COINCIDENT_KM = 1e-12


class GeoPoint(NamedTuple):
    lon: float
    lat: float

    def validate(self) -> "GeoPoint":
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise InvalidCoordinateError(f"non-finite coordinate {self}")
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise InvalidCoordinateError(f"coordinate out of range {self}")
        return self


class CartesianPoint(NamedTuple):
    x: float
    y: float


class SpatialFeature(NamedTuple):
    """Distance in km and orientation in degrees, ``0 <= orientation < 360``."""

    distance: float
    orientation: float

    def validate(self) -> "SpatialFeature":
        if not (math.isfinite(self.distance) and math.isfinite(self.orientation)):
            raise ValueError(f"non-finite feature {self}")
        if self.distance < 0:
            raise ValueError(f"negative distance {self.distance}")
        if not 0.0 <= self.orientation < 360.0:
            raise ValueError(f"orientation {self.orientation} outside [0, 360)")
        return self


@dataclass(frozen=True)
class ProjectionConfig:
    """How degrees are turned into km.

    ``mode="corrected"`` scales longitude by ``cos(ref_lat)``;
    ``mode="raw-degrees"`` uses 111.32 km per degree on both axes.
    """

    ref_lat: float = 0.0
    mode: str = "corrected"

    def __post_init__(self):
        if self.mode not in ("corrected", "raw-degrees"):
            raise ValueError(f"unknown projection mode {self.mode!r}")
        if not math.isfinite(self.ref_lat):
            raise InvalidCoordinateError("ref_lat must be finite")
        if self.mode == "corrected" and not -89.0 <= self.ref_lat <= 89.0:
            raise InvalidCoordinateError(
                f"ref_lat {self.ref_lat} outside [-89, 89] for corrected mode"
            )

    @property
    def km_per_lon_degree(self) -> float:
        if self.mode == "raw-degrees":
            return KM_PER_DEGREE
        return KM_PER_DEGREE * math.cos(math.radians(self.ref_lat))

    @property
    def km_per_lat_degree(self) -> float:
        return KM_PER_DEGREE


def project(p: GeoPoint, origin: GeoPoint, cfg: ProjectionConfig) -> CartesianPoint:
    """Project ``p`` into km east/north of ``origin``."""
    GeoPoint(*p).validate()
    GeoPoint(*origin).validate()
    return CartesianPoint(
        (p[0] - origin[0]) * cfg.km_per_lon_degree,
        (p[1] - origin[1]) * cfg.km_per_lat_degree,
    )


def project_arrays(lon, lat, origin: GeoPoint, cfg: ProjectionConfig):
    """Vectorised :func:`project`; returns ``(x, y)`` arrays in km."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    if not (np.all(np.isfinite(lon)) and np.all(np.isfinite(lat))):
        raise InvalidCoordinateError("non-finite coordinate in array")
    return (
        (lon - origin[0]) * cfg.km_per_lon_degree,
        (lat - origin[1]) * cfg.km_per_lat_degree,
    )


def unproject(c: CartesianPoint, origin: GeoPoint, cfg: ProjectionConfig) -> GeoPoint:
    """Inverse of :func:`project`."""
    return GeoPoint(
        origin[0] + c[0] / cfg.km_per_lon_degree,
        origin[1] + c[1] / cfg.km_per_lat_degree,
    )


def _wrap_degrees(theta):
    theta = np.mod(theta, 360.0)
    # mod of a tiny negative number rounds up to exactly 360.0
    return np.where(theta >= 360.0, 0.0, theta)


def extract_feature(known: CartesianPoint, unknown: CartesianPoint) -> SpatialFeature:
    dx = unknown[0] - known[0]
    dy = unknown[1] - known[1]
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise InvalidCoordinateError("non-finite cartesian coordinate")
    distance = math.hypot(dx, dy)
    if distance < COINCIDENT_KM:
        raise DegeneratePairError(
            f"known {tuple(known)} and unknown {tuple(unknown)} coincide"
        )
    orientation = float(_wrap_degrees(math.degrees(math.atan2(dy, dx))))
    return SpatialFeature(distance, orientation)


def features_from_offsets(dx, dy) -> np.ndarray:
    """Feature matrix ``(n, 2)`` for offset arrays; no coincidence check."""
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    out = np.empty(dx.shape + (2,))
    out[..., 0] = np.hypot(dx, dy)
    out[..., 1] = _wrap_degrees(np.degrees(np.arctan2(dy, dx)))
    return out


def feature_to_point(known: CartesianPoint, f: SpatialFeature) -> CartesianPoint:
    SpatialFeature(*f).validate()
    theta = math.radians(f[1])
    return CartesianPoint(
        known[0] + f[0] * math.cos(theta), known[1] + f[0] * math.sin(theta)
    )


def geo_feature(
    known: GeoPoint, unknown: GeoPoint, mode: str = "corrected", ref_lat: float | None = None
) -> SpatialFeature:
    """Feature between two geographic points in a frame centred on ``known``.

    ``ref_lat`` defaults to the latitude of the known point.
    """
    cfg = ProjectionConfig(known[1] if ref_lat is None else ref_lat, mode)
    origin = GeoPoint(*known)
    return extract_feature(
        project(origin, origin, cfg), project(GeoPoint(*unknown), origin, cfg)
    )
