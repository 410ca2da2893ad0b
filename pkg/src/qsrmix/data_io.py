"""File formats: observation tuples, feature tables, model files and grids.

All numeric text uses ``.`` as decimal separator and Python's shortest
round-trip float repr, so written values re-read bit-identically.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidCoordinateError, ParseError, QsrError, UnsupportedVersionError
from .geo import GeoPoint, ProjectionConfig
from .gmm import COVARIANCE_MODES, GmmModel
from .grid import GridSpec, ProbabilityGrid

OBSERVATION_FIELDS = (
    "known_id", "known_lon", "known_lat", "relation",
    "unknown_id", "unknown_lon", "unknown_lat",
)
FEATURE_FIELDS = ("distance_km", "orientation_deg")
MANIFEST_FIELDS = ("known_id", "known_lon", "known_lat", "model")
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ObservationRecord:
    known_id: str
    known_lon: float
    known_lat: float
    relation: str
    unknown_id: str
    unknown_lon: float | None = None
    unknown_lat: float | None = None

    @property
    def known(self) -> GeoPoint:
        return GeoPoint(self.known_lon, self.known_lat)

    @property
    def unknown(self) -> GeoPoint | None:
        if self.unknown_lon is None:
            return None
        return GeoPoint(self.unknown_lon, self.unknown_lat)


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), str(source)
    return source, getattr(source, "name", None)


def _data_lines(handle):
    """Yield ``(line_no, text)`` skipping ``#`` comments and blank lines."""
    for no, line in enumerate(handle, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield no, line


def _parse_header(row, expected, line, path, required=None):
    names = [c.strip() for c in row]
    unknown = [n for n in names if n not in expected]
    if unknown:
        raise ParseError(f"unknown header field {unknown[0]!r}", line, path)
    if len(set(names)) != len(names):
        raise ParseError("duplicate header field", line, path)
    missing = [n for n in (required or expected) if n not in names]
    if missing:
        raise ParseError(f"missing header field {missing[0]!r}", line, path)
    return names


def _float_field(value, name, line, path, allow_empty=False):
    value = value.strip()
    if value == "" and allow_empty:
        return None
    try:
        out = float(value)
    except ValueError:
        raise ParseError(f"column {name!r}: not a number: {value!r}", line, path) from None
    if not math.isfinite(out):
        raise ParseError(f"column {name!r}: non-finite value", line, path)
    return out


def _rows(handle, expected, path, required=None):
    lines = _data_lines(handle)
    try:
        header_no, header = next(lines)
    except StopIteration:
        raise ParseError("missing header line", None, path) from None
    names = _parse_header(next(csv.reader([header])), expected, header_no, path, required)
    for no, text in lines:
        row = next(csv.reader([text]))
        if len(row) != len(names):
            raise ParseError(
                f"expected {len(names)} fields ({', '.join(names)}), got {len(row)}", no, path
            )
        yield no, dict(zip(names, row))


def read_observations(source, require_unknown: bool | None = None) -> list[ObservationRecord]:
    """Parse an observation CSV.

    ``require_unknown=True`` rejects rows without unknown coordinates
    (training input); ``False`` rejects rows that have them (inference input).
    Relation labels are stripped and lower-cased.
    """
    handle, path = _open_text(source)
    out = []
    try:
        for no, row in _rows(handle, OBSERVATION_FIELDS, path):
            relation = row["relation"].strip().lower()
            if not relation:
                raise ParseError("column 'relation': empty label", no, path)
            klon = _float_field(row["known_lon"], "known_lon", no, path)
            klat = _float_field(row["known_lat"], "known_lat", no, path)
            ulon = _float_field(row["unknown_lon"], "unknown_lon", no, path, allow_empty=True)
            ulat = _float_field(row["unknown_lat"], "unknown_lat", no, path, allow_empty=True)
            if (ulon is None) != (ulat is None):
                raise ParseError("unknown_lon and unknown_lat must both be present or both empty", no, path)
            if require_unknown and ulon is None:
                raise ParseError("training records require unknown coordinates", no, path)
            if require_unknown is False and ulon is not None:
                raise ParseError("inference records must omit unknown coordinates", no, path)
            try:
                GeoPoint(klon, klat).validate()
                if ulon is not None:
                    GeoPoint(ulon, ulat).validate()
            except InvalidCoordinateError as exc:
                raise ParseError(str(exc), no, path) from None
            out.append(ObservationRecord(
                row["known_id"].strip(), klon, klat, relation,
                row["unknown_id"].strip(), ulon, ulat,
            ))
    finally:
        if handle is not source:
            handle.close()
    return out


def group_by_relation(records) -> dict[str, list[ObservationRecord]]:
    groups: dict[str, list[ObservationRecord]] = {}
    for rec in records:
        groups.setdefault(rec.relation, []).append(rec)
    return groups


def write_features(path, features, source=None) -> None:
    """Write a feature table; ``source`` adds a provenance column."""
    features = np.asarray(features, dtype=float).reshape(-1, 2)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if source is None:
            w.writerow(FEATURE_FIELDS)
            w.writerows((repr(float(d)), repr(float(o))) for d, o in features)
        else:
            w.writerow(FEATURE_FIELDS + ("source",))
            w.writerows((repr(float(d)), repr(float(o)), s) for (d, o), s in zip(features, source))


def read_features(path, with_source: bool = False):
    """Read a feature table; returns an ``(n, 2)`` array (and sources)."""
    feats, sources = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for no, row in _rows(fh, FEATURE_FIELDS + ("source",), str(path), FEATURE_FIELDS):
            d = _float_field(row["distance_km"], "distance_km", no, str(path))
            o = _float_field(row["orientation_deg"], "orientation_deg", no, str(path))
            feats.append((d, o))
            sources.append(row.get("source", "observed").strip() or "observed")
    arr = np.array(feats, dtype=float).reshape(-1, 2)
    return (arr, sources) if with_source else arr


def model_to_dict(model: GmmModel, trace=None, metadata=None) -> dict:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "relation_label": model.relation_label,
        "covariance_mode": model.covariance_mode,
        "components": [
            {
                "weight": float(c.weight),
                "mean": [float(v) for v in c.mean],
                "cov": [[float(v) for v in row] for row in c.cov],
            }
            for c in model.components
        ],
        "metadata": dict(metadata or {}),
    }
    if trace is not None:
        doc["trace"] = [
            {"component_count": s.component_count, "log_likelihood": s.log_likelihood,
             "accepted": s.accepted}
            for s in trace.steps
        ]
    return doc


def write_model(model: GmmModel, trace, path, metadata=None) -> None:
    text = json.dumps(model_to_dict(model, trace, metadata), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def model_from_dict(doc, path=None) -> GmmModel:
    if not isinstance(doc, dict):
        raise ParseError("model document must be an object", None, path)
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format_version {version!r}", None, path)
    try:
        mode = doc["covariance_mode"]
        if mode not in COVARIANCE_MODES:
            raise ParseError(f"unknown covariance_mode {mode!r}", None, path)
        comps = doc["components"]
        if not isinstance(comps, list) or not comps:
            raise ParseError("components must be a non-empty list", None, path)
        return GmmModel(
            [c["weight"] for c in comps],
            [c["mean"] for c in comps],
            [c["cov"] for c in comps],
            mode,
            str(doc.get("relation_label", "")),
        )
    except QsrError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid model document: {exc}", None, path) from None


def read_model(path) -> GmmModel:
    return read_model_document(path)[0]


def read_model_document(path):
    """Return ``(model, document)`` so callers can reach metadata and trace."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"corrupt model file: {exc.msg}", exc.lineno, str(path)) from None
    return model_from_dict(doc, str(path)), doc


def _grid_header(spec: GridSpec) -> str:
    lon_min, lon_max, lat_min, lat_max = spec.bbox
    p = spec.projection
    return (
        f"# bbox={lon_min!r},{lon_max!r},{lat_min!r},{lat_max!r} nx={spec.nx} ny={spec.ny}"
        f" projection={p.mode} ref_lat={p.ref_lat!r}"
    )


def export_grid(grid: ProbabilityGrid, path, format: str = "csv") -> None:
    """Write a grid as CSV (row 0 northernmost) or 16-bit P2 PGM."""
    try:
        if format == "csv":
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(_grid_header(grid.spec) + "\n")
                for row in grid.values:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
        elif format == "pgm":
            vmax = grid.values.max()
            pixels = np.rint(grid.values / vmax * 65535).astype(int) if vmax > 0 else np.zeros_like(grid.values, dtype=int)
            with open(path, "w", encoding="ascii") as fh:
                fh.write(f"P2\n{_grid_header(grid.spec)}\n{grid.spec.nx} {grid.spec.ny}\n65535\n")
                for row in pixels:
                    fh.write(" ".join(str(v) for v in row) + "\n")
        else:
            raise ValueError(f"unknown grid format {format!r}")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def read_grid(path) -> ProbabilityGrid:
    """Re-read a CSV grid written by :func:`export_grid`."""
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise ParseError("missing grid header comment", 1, path)
        try:
            fields = dict(tok.split("=", 1) for tok in header[2:].split())
            bbox = tuple(float(v) for v in fields["bbox"].split(","))
            spec = GridSpec(bbox, int(fields["nx"]), int(fields["ny"]),
                            ProjectionConfig(float(fields["ref_lat"]), fields["projection"]))
        except (KeyError, ValueError) as exc:
            raise ParseError(f"bad grid header: {exc}", 1, path) from None
        rows = []
        for no, line in enumerate(fh, start=2):
            cells = line.strip().split(",")
            if len(cells) != spec.nx:
                raise ParseError(f"expected {spec.nx} values, got {len(cells)}", no, path)
            rows.append([_float_field(c, f"col{j}", no, path) for j, c in enumerate(cells)])
    if len(rows) != spec.ny:
        raise ParseError(f"expected {spec.ny} rows, got {len(rows)}", None, path)
    return ProbabilityGrid(spec, np.array(rows))


def read_pgm(path):
    """Parse a P2 PGM; returns ``(pixels, maxval)``."""
    tokens = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ParseError("not a P2 PGM", 1, str(path))
    nx, ny, maxval = (int(t) for t in tokens[1:4])
    pix = np.array([int(t) for t in tokens[4:]])
    if pix.size != nx * ny:
        raise ParseError(f"expected {nx * ny} pixels, got {pix.size}", None, str(path))
    return pix.reshape(ny, nx), maxval


@dataclass(frozen=True)
class ManifestEntry:
    known_id: str
    known: GeoPoint
    model_path: Path


def read_manifest(path) -> list[ManifestEntry]:
    """Inference manifest: ``known_id,known_lon,known_lat,model``.

    Model paths are resolved relative to the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for no, row in _rows(fh, MANIFEST_FIELDS, str(path)):
            lon = _float_field(row["known_lon"], "known_lon", no, str(path))
            lat = _float_field(row["known_lat"], "known_lat", no, str(path))
            try:
                known = GeoPoint(lon, lat).validate()
            except InvalidCoordinateError as exc:
                raise ParseError(str(exc), no, str(path)) from None
            model = row["model"].strip()
            if not model:
                raise ParseError("column 'model': empty path", no, str(path))
            out.append(ManifestEntry(row["known_id"].strip(), known, base / model))
    return out


def observations_text(records) -> str:
    """Serialise records back into the observation CSV format."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OBSERVATION_FIELDS)
    for r in records:
        w.writerow([
            r.known_id, repr(r.known_lon), repr(r.known_lat), r.relation, r.unknown_id,
            "" if r.unknown_lon is None else repr(r.unknown_lon),
            "" if r.unknown_lat is None else repr(r.unknown_lat),
        ])
    return buf.getvalue()
