"""``qsrmix`` command-line interface.

Subcommands run the pipeline one inspectable step at a time::

    features -> augment -> train -> {compare, sweep, heatmap, infer}

Failures print a single ``error: <code>: <message>`` line on stderr and exit
non-zero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (
    export_grid,
    group_by_relation,
    read_features,
    read_manifest,
    read_model,
    read_observations,
    write_features,
    write_model,
)
from .divergence import DEFAULT_SAMPLES, kl_symmetric
from .errors import DegenerateDataError, DegeneratePairError, QsrError
from .geo import GeoPoint, ProjectionConfig, geo_feature
from .gmm import EmConfig
from .greedy import GreedyConfig, fit_greedy
from .grid import GridSpec, Observation, infer_location, relation_heatmap, sweep_components
from .kde import KdeModel, kde_sample

log = logging.getLogger("qsrmix")

DEFAULT_SEED = 42
DEFAULT_AUGMENT_COUNT = 1000


class UsageError(Exception):
    pass


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9_-]+", "_", label.lower()).strip("_") or "relation"


def _parse_caps(text: str) -> list[int]:
    """``"1..10"``, ``"1-10"`` or ``"1,2,5"``."""
    text = text.strip()
    m = re.fullmatch(r"(\d+)\s*(?:\.\.|-)\s*(\d+)", text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if lo < 1 or hi < lo:
            raise argparse.ArgumentTypeError(f"bad cap range {text!r}")
        return list(range(lo, hi + 1))
    try:
        caps = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cap list {text!r}") from None
    if not caps or min(caps) < 1:
        raise argparse.ArgumentTypeError(f"bad cap list {text!r}")
    return caps


def _add_seed(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed")


def _add_greedy(p):
    p.add_argument("--covariance", choices=("diagonal", "full"), default="diagonal",
                   help="uncorrelated (diagonal) or correlated (full) components")
    p.add_argument("--max-components", type=int, default=10, help="component cap")
    p.add_argument("--candidates", type=int, default=2, help="candidates per existing component")
    p.add_argument("--partial-em-iterations", type=int, default=20,
                   help="EM iterations spent refining each candidate")
    p.add_argument("--max-iterations", type=int, default=500, help="EM iteration cap")
    p.add_argument("--tolerance", type=float, default=1e-6,
                   help="relative log-likelihood change that ends EM")
    p.add_argument("--variance-floor", type=float, default=1e-6,
                   help="minimum covariance eigenvalue (km^2 / deg^2)")
    _add_seed(p)


def _greedy_config(args) -> GreedyConfig:
    return GreedyConfig(
        max_components=args.max_components,
        candidates_per_component=args.candidates,
        partial_em_iterations=args.partial_em_iterations,
        em=EmConfig(args.max_iterations, args.tolerance, args.variance_floor),
        seed=args.seed,
        covariance_mode=args.covariance,
    )


def _add_grid(p):
    p.add_argument("--lon-min", type=float, default=-1.0, help="grid west edge [deg]")
    p.add_argument("--lon-max", type=float, default=1.0, help="grid east edge [deg]")
    p.add_argument("--lat-min", type=float, default=51.0, help="grid south edge [deg]")
    p.add_argument("--lat-max", type=float, default=52.0, help="grid north edge [deg]")
    p.add_argument("--nx", type=int, default=50, help="grid columns")
    p.add_argument("--ny", type=int, default=50, help="grid rows")
    p.add_argument("--projection", choices=("corrected", "raw-degrees"), default="corrected",
                   help="degree-to-km convention")
    p.add_argument("--ref-lat", type=float, default=None,
                   help="latitude for the longitude correction (default: grid centre)")
    p.add_argument("--format", choices=("csv", "pgm"), default="csv", help="grid file format")
    p.add_argument("--out", required=True, help="grid output path")
    p.add_argument("--figure", default=None, help="also render a PNG heat map here")


def _grid_spec(args) -> GridSpec:
    bbox = (args.lon_min, args.lon_max, args.lat_min, args.lat_max)
    ref_lat = 0.5 * (args.lat_min + args.lat_max) if args.ref_lat is None else args.ref_lat
    return GridSpec(bbox, args.nx, args.ny, ProjectionConfig(ref_lat, args.projection))


def cmd_features(args) -> int:
    records = read_observations(args.observations, require_unknown=True)
    groups = group_by_relation(records)
    if args.relation:
        wanted = args.relation.strip().lower()
        if wanted not in groups:
            raise QsrError(f"no records for relation {wanted!r}")
        groups = {wanted: groups[wanted]}
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    skipped_total = 0
    for relation, recs in sorted(groups.items()):
        feats, skipped = [], 0
        for rec in recs:
            try:
                feats.append(geo_feature(rec.known, rec.unknown, args.projection, args.ref_lat))
            except DegeneratePairError:
                log.warning("skipping coincident pair %s -> %s", rec.known_id, rec.unknown_id)
                skipped += 1
        skipped_total += skipped
        path = out_dir / f"{_slug(relation)}.features.csv"
        write_features(path, np.array(feats, dtype=float).reshape(-1, 2))
        print(f"relation={relation} count={len(feats)} skipped={skipped} file={path}")
    print(f"relations={len(groups)} skipped_degenerate={skipped_total}")
    return 0


def cmd_augment(args) -> int:
    feats = read_features(args.features)
    try:
        kde = KdeModel.fit(feats, floor=args.bandwidth_floor)
    except DegenerateDataError as exc:
        raise DegenerateDataError(f"{exc} (hint: pass --bandwidth-floor)") from None
    synth = kde_sample(kde, args.count, args.seed)
    rows = np.vstack([feats, synth])
    sources = ["observed"] * len(feats) + ["synthetic"] * len(synth)
    write_features(args.out, rows, sources)
    print(f"observed={len(feats)} synthetic={len(synth)} "
          f"bandwidth_km={kde.bandwidth[0]!r} bandwidth_deg={kde.bandwidth[1]!r} file={args.out}")
    if args.figure:
        from .figures import render_features

        render_features(rows, args.figure, synthetic=[s == "synthetic" for s in sources])
    return 0


def cmd_train(args) -> int:
    feats, sources = read_features(args.features, with_source=True)
    label = args.relation or Path(args.features).name.split(".")[0]
    cfg = _greedy_config(args)
    model, trace = fit_greedy(feats, cfg, relation_label=label)
    metadata = {
        "sample_count": int(feats.shape[0]),
        "synthetic_count": int(sum(s == "synthetic" for s in sources)),
        "seed": cfg.seed,
        "config": {
            "max_components": cfg.max_components,
            "candidates_per_component": cfg.candidates_per_component,
            "partial_em_iterations": cfg.partial_em_iterations,
            "max_iterations": cfg.em.max_iterations,
            "ll_tolerance": cfg.em.ll_tolerance,
            "variance_floor": cfg.em.variance_floor,
            "covariance_mode": cfg.covariance_mode,
        },
    }
    write_model(model, trace, args.out, metadata)
    trace_path = args.trace or f"{args.out}.trace.csv"
    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("component_count", "log_likelihood", "accepted"))
        for s in trace.steps:
            w.writerow((s.component_count, repr(s.log_likelihood), int(s.accepted)))
    print(f"relation={label} components={model.n_components} "
          f"log_likelihood={trace.final_log_likelihood!r} "
          f"baseline_log_likelihood={trace.baseline_log_likelihood!r} file={args.out}")
    return 0


def cmd_compare(args) -> int:
    a, b = read_model(args.model_a), read_model(args.model_b)
    est = kl_symmetric(a, b, args.samples, args.seed)
    print(f"symmetric_kl={est.value!r} std_error={est.std_error!r} "
          f"raw={est.raw!r} samples={est.sample_count}")
    return 0


def cmd_sweep(args) -> int:
    feats = read_features(args.features)
    rows = sweep_components(feats, args.caps, args.repetitions, _greedy_config(args),
                            kl_samples=args.kl_samples, workers=args.threads)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cap", "mean_log_likelihood", "std_log_likelihood",
                    "mean_kl_to_baseline", "std_kl_to_baseline", "mean_components"))
        for r in rows:
            w.writerow((r.cap, repr(r.mean_log_likelihood), repr(r.std_log_likelihood),
                        repr(r.mean_kl_to_baseline), repr(r.std_kl_to_baseline),
                        repr(r.mean_components)))
    for r in rows:
        print(f"cap={r.cap} mean_ll={r.mean_log_likelihood:.6g} "
              f"mean_kl={r.mean_kl_to_baseline:.6g} mean_components={r.mean_components:.3g}")
    if args.figure:
        from .figures import render_sweep

        render_sweep(rows, args.figure, title=Path(args.features).name.split(".")[0])
    return 0


def _emit_grid(grid, args, markers, title):
    export_grid(grid, args.out, args.format)
    if args.figure:
        from .figures import render_heatmap

        render_heatmap(grid, args.figure, title=title, markers=markers)


def cmd_heatmap(args) -> int:
    spec = _grid_spec(args)
    model = read_model(args.model)
    known = GeoPoint(
        spec.center.lon if args.known_lon is None else args.known_lon,
        spec.center.lat if args.known_lat is None else args.known_lat,
    ).validate()
    grid = relation_heatmap(model, spec, known)
    _emit_grid(grid, args, [(known.lon, known.lat, "K")], model.relation_label or None)
    row, col = grid.argmax()
    c = spec.cell_center(row, col)
    print(f"argmax_row={row} argmax_col={col} lon={c.lon!r} lat={c.lat!r} "
          f"probability={grid.values[row, col]!r} file={args.out}")
    return 0


def cmd_infer(args) -> int:
    entries = read_manifest(args.manifest)
    if not entries:
        raise UsageError(f"manifest {args.manifest} lists no observations")
    spec = _grid_spec(args)
    observations = [Observation(e.known, read_model(e.model_path)) for e in entries]
    grid = infer_location(observations, spec)
    _emit_grid(grid, args, [(e.known.lon, e.known.lat, e.known_id) for e in entries], None)
    print("rank,lon,lat,probability")
    for rank, (lon, lat, p) in enumerate(grid.top_cells(args.top_k), start=1):
        print(f"{rank},{lon!r},{lat!r},{p!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="qsrmix", description="Quantify qualitative spatial relations and locate unknown places.",
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", help="logging level")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for parallel steps")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="observation tuples -> per-relation feature files",
                       formatter_class=fmt)
    p.add_argument("--observations", required=True, help="observation CSV")
    p.add_argument("--out-dir", default=".", help="directory for <relation>.features.csv")
    p.add_argument("--relation", default=None, help="only this relation label")
    p.add_argument("--projection", choices=("corrected", "raw-degrees"), default="corrected",
                   help="degree-to-km convention")
    p.add_argument("--ref-lat", type=float, default=None,
                   help="latitude for the longitude correction (default: each known POI)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("augment", help="KDE semi-synthetic feature generation", formatter_class=fmt)
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--count", type=int, default=DEFAULT_AUGMENT_COUNT, help="synthetic rows")
    p.add_argument("--bandwidth-floor", type=float, default=None,
                   help="minimum bandwidth, for zero-variance inputs")
    p.add_argument("--out", required=True, help="augmented feature CSV")
    p.add_argument("--figure", default=None, help="also render a PNG scatter here")
    _add_seed(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="greedy EM mixture fit", formatter_class=fmt)
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--trace", default=None, help="trace CSV (default: <out>.trace.csv)")
    p.add_argument("--relation", default=None, help="label (default: features file stem)")
    _add_greedy(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="symmetric KL between two models", formatter_class=fmt)
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="Monte Carlo samples")
    _add_seed(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="log-likelihood and KL versus component cap",
                       formatter_class=fmt)
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--caps", type=_parse_caps, default=_parse_caps("1..10"),
                   help="caps as 'lo..hi' or comma list")
    p.add_argument("--repetitions", type=int, default=10, help="greedy runs per cap")
    p.add_argument("--kl-samples", type=int, default=10_000, help="Monte Carlo samples per KL")
    p.add_argument("--out", required=True, help="sweep CSV")
    p.add_argument("--figure", default=None, help="also render a PNG plot here")
    _add_greedy(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heatmap", help="positional-probability grid for one model",
                       formatter_class=fmt)
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--known-lon", type=float, default=None, help="known POI lon (default: centre)")
    p.add_argument("--known-lat", type=float, default=None, help="known POI lat (default: centre)")
    _add_grid(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("infer", help="fuse observations into a location grid", formatter_class=fmt)
    p.add_argument("--manifest", required=True, help="CSV: known_id,known_lon,known_lat,model")
    p.add_argument("--top-k", type=int, default=5, help="cells to list")
    _add_grid(p)
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except QsrError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        code = "io_error" if isinstance(exc, OSError) else "invalid_value"
        print(f"error: {code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
