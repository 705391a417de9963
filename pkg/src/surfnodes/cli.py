"""Command-line front end.

Subcommands::

    surfnodes generate --surface circle --h 0.1 --alg pa --seed 1 --out run/
    surfnodes compare  --surface polar_curve --h 0.003 --alg pa,sd,na --out cmp/
    surfnodes bench    --surface polar_curve --h 1e-3 3e-4 1e-4 --reps 9 --out bench/
    surfnodes bounds   --surface torus --h 0.4 0.2 0.1 0.05 --out bounds/
    surfnodes replay   run/manifest.json --out again/

Every command writes ``manifest.json`` holding its full parameter set, from
which ``replay`` reproduces the other outputs byte for byte.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .directions import RNG_ID
from .geometry import (EARTH_H_MAX, EARTH_H_MIN, GALLERY_NAMES, AltitudeGrid, SpacingField,
                       as_spacing, gallery, load_altitude_spacing)
from .nodegen import GenerationConfig, NodeSet, run_algorithm
from .quality import (bound_conformance, histogram, max_empty_sphere, min_pairwise_distance,
                      nn_stats, random_pairs, separation_distance, spacing_error_bounds)

log = logging.getLogger("surfnodes")

ALGORITHMS = ("pa", "sd", "na")
COMMANDS = ("generate", "compare", "bench", "bounds")
# Parameters recorded in manifests and replayed verbatim.
SPEC_KEYS = ("command", "surface", "alg", "h", "h_grid", "h_min", "h_max", "n", "tau", "seed",
             "refinement", "reps", "samples", "bins")


class UsageError(Exception):
    """Invalid flag combination or value (exit code 2)."""


class InvariantViolation(Exception):
    """Outputs were written but a checked property failed (exit code 3)."""


# ---------------------------------------------------------------- helpers

def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else format(v, ".17g") for v in row))
    path.write_text("\n".join(lines) + "\n")


def spacing_from_spec(spec: dict) -> tuple[SpacingField, float]:
    """Spacing field plus a representative scalar h (h_max for variable fields)."""
    if spec["h_grid"] is not None:
        if spec["surface"] != "sphere":
            raise UsageError("--h-grid requires --surface sphere")
        src = spec["h_grid"]
        if src.startswith("synthetic"):
            _, _, seed = src.partition(":")
            grid = AltitudeGrid.synthetic(seed=int(seed or 0))
        else:
            grid = AltitudeGrid.from_csv(src)
        h_min = spec["h_min"] if spec["h_min"] is not None else EARTH_H_MIN
        h_max = spec["h_max"] if spec["h_max"] is not None else EARTH_H_MAX
        return load_altitude_spacing(grid, h_min, h_max), h_max
    h = spec["h"][0]
    return as_spacing(h), h


def config_from_spec(spec: dict) -> GenerationConfig:
    return GenerationConfig(n_candidates=spec["n"], rng_seed=spec["seed"])


def single_h(spec: dict) -> None:
    if spec["h_grid"] is None and (spec["h"] is None or len(spec["h"]) != 1):
        raise UsageError(f"{spec['command']} needs exactly one --h value (or --h-grid)")


def sweep_h(spec: dict) -> list[float]:
    if spec["h_grid"] is not None:
        raise UsageError(f"{spec['command']} takes a constant --h sweep, not --h-grid")
    if not spec["h"]:
        raise UsageError(f"{spec['command']} needs at least one --h value")
    return spec["h"]


def validate(spec: dict) -> None:
    if spec["surface"] not in GALLERY_NAMES:
        raise UsageError(f"unknown surface {spec['surface']!r}; choose from {', '.join(GALLERY_NAMES)}")
    for alg in spec["alg"]:
        if alg not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {alg!r}; choose from {', '.join(ALGORITHMS)}")
    if spec["h"] is not None and any(not (math.isfinite(h) and h > 0) for h in spec["h"]):
        raise UsageError("--h values must be positive and finite")
    if spec["h"] is None and spec["h_grid"] is None:
        raise UsageError("one of --h or --h-grid is required")
    if spec["h_grid"] is not None and spec["h"] is not None:
        raise UsageError("--h and --h-grid are mutually exclusive")
    if not (math.isfinite(spec["tau"]) and spec["tau"] > 0):
        raise UsageError("--tau must be positive")
    if spec["n"] is not None and spec["n"] < 1:
        raise UsageError("--n must be at least 1")
    if not 0.0 < spec["refinement"] < 1.0:
        raise UsageError("--refinement must lie strictly between 0 and 1")
    if spec["reps"] < 1 or spec["samples"] < 1 or spec["bins"] < 1:
        raise UsageError("--reps, --samples and --bins must be at least 1")


def _report(alg: str, spec: dict, h, n: int, metrics: dict, bounds: dict | None = None) -> dict:
    return {"algorithm": alg, "surface": spec["surface"], "h": h, "n": n, "tau": spec["tau"],
            "seed": spec["seed"], "rng_id": RNG_ID, "metrics": metrics, "bounds": bounds or {}}


# ---------------------------------------------------------------- commands

def cmd_generate(spec: dict, out: Path) -> dict:
    single_h(spec)
    if len(spec["alg"]) != 1:
        raise UsageError("generate takes a single --alg")
    alg = spec["alg"][0]
    surface = gallery(spec["surface"])
    spacing, _ = spacing_from_spec(spec)
    if alg != "pa" and not spacing.kind == "constant":
        raise UsageError(f"--alg {alg} needs a constant --h")
    t0 = time.perf_counter()
    nodes = run_algorithm(alg, surface, spacing, config_from_spec(spec), spec["tau"])
    wall = time.perf_counter() - t0
    nodes.to_csv(out / "nodes.csv")
    return {"outputs": ["nodes.csv"], "n": len(nodes), "wall_time_s": wall, "capped": nodes.capped}


def _series_rows(stats):
    return zip(range(len(stats.mean_dist)), stats.mean_norm, stats.min_norm, stats.max_norm)


def cmd_compare(spec: dict, out: Path) -> dict:
    single_h(spec)
    if len(spec["alg"]) < 2:
        raise UsageError("compare needs at least two algorithms, e.g. --alg pa,sd,na")
    surface = gallery(spec["surface"])
    spacing, h = spacing_from_spec(spec)
    if spacing.kind != "constant":
        raise UsageError("compare needs a constant --h")
    outputs, counts, wall, problems = [], {}, {}, []
    for alg in spec["alg"]:
        t0 = time.perf_counter()
        nodes = run_algorithm(alg, surface, spacing, config_from_spec(spec), spec["tau"])
        wall[alg] = time.perf_counter() - t0
        stats = nn_stats(nodes)
        metrics = stats.summary()
        metrics["r_min"] = separation_distance(nodes)
        metrics["r_max"] = max_empty_sphere(surface, nodes, h, spec["refinement"], seed=spec["seed"])
        metrics["r_min_over_h"] = metrics["r_min"] / h
        metrics["r_max_over_h"] = metrics["r_max"] / h
        counts[alg] = len(nodes)
        if alg == "sd" and 2.0 * metrics["r_min"] < h:
            problems.append(f"sd minimum distance {2.0 * metrics['r_min']:.6g} < h")
        write_json(out / f"report_{alg}.json", _report(alg, spec, h, len(nodes), metrics))
        write_csv(out / f"hist_{alg}.csv", ("bin_left", "bin_right", "count"),
                  histogram(stats.mean_norm, spec["bins"]))
        write_csv(out / f"dbar_{alg}.csv", ("i", "dbar_norm", "dmin_norm", "dmax_norm"),
                  _series_rows(stats))
        outputs += [f"report_{alg}.json", f"hist_{alg}.csv", f"dbar_{alg}.csv"]
    return {"outputs": outputs, "n": counts, "wall_time_s": wall, "problems": problems}


def bench_fit(n, t) -> dict:
    """Least-squares slope of log t against log N; unreliable if N spans < 1 decade."""
    n = np.asarray(n, dtype=float)
    t = np.asarray(t, dtype=float)
    ok = (n > 0) & (t > 0)
    if ok.sum() < 2:
        return {"slope": None, "intercept": None, "reliable": False}
    slope, icpt = np.polyfit(np.log10(n[ok]), np.log10(t[ok]), 1)
    span = math.log10(n[ok].max() / n[ok].min())
    return {"slope": float(slope), "intercept": float(icpt), "decades": span, "reliable": span >= 1.0}


def run_bench(surface, alg: str, hs, cfg: GenerationConfig, reps: int, tau: float = 5.0):
    """Median wall time of ``reps`` runs per h, after one untimed warm-up run."""
    run_algorithm(alg, surface, hs[0], cfg, tau)
    rows = []
    for h in hs:
        times, n = [], 0
        for _ in range(reps):
            t0 = time.perf_counter()
            nodes = run_algorithm(alg, surface, h, cfg, tau)
            times.append(time.perf_counter() - t0)
            n = len(nodes)
        rows.append((h, n, float(np.median(times)), float(np.min(times))))
    return rows


def cmd_bench(spec: dict, out: Path) -> dict:
    hs = sweep_h(spec)
    if len(spec["alg"]) != 1:
        raise UsageError("bench takes a single --alg")
    alg = spec["alg"][0]
    rows = run_bench(gallery(spec["surface"]), alg, hs, config_from_spec(spec), spec["reps"], spec["tau"])
    fit = bench_fit([r[1] for r in rows], [r[2] for r in rows])
    write_csv(out / "bench.csv", ("h", "n", "median_s", "min_s"), rows)
    write_json(out / "bench.json", {"algorithm": alg, "surface": spec["surface"], "reps": spec["reps"],
                                    "seed": spec["seed"], "rng_id": RNG_ID, "fit": fit,
                                    "points": [dict(zip(("h", "n", "median_s", "min_s"), r)) for r in rows]})
    if not fit["reliable"]:
        log.warning("N spans less than one decade; the fitted slope is unreliable")
    return {"outputs": ["bench.csv", "bench.json"], "n": [r[1] for r in rows], "wall_time_s": None}


def cmd_bounds(spec: dict, out: Path) -> dict:
    hs = sweep_h(spec)
    surface = gallery(spec["surface"])
    if not surface.has_hessians:
        raise UsageError(f"surface {spec['surface']!r} has no Hessians; bounds are unavailable")
    pairs = random_pairs(surface, spec["samples"], seed=spec["seed"])
    cfg = config_from_spec(spec)
    bounds, rows, problems = {}, [], []
    t0 = time.perf_counter()
    for h in hs:
        rep = spacing_error_bounds(surface, h, pairs, seed=spec["seed"])
        nodes = run_algorithm("pa", surface, h, cfg)
        conf = bound_conformance(surface, h, nodes, seed=spec["seed"])
        summary = rep.summary()
        summary.update(n=len(nodes), min_distance=conf.min_distance, conforms=conf.conforms)
        bounds[format(h, ".17g")] = summary
        rows.append(conf.row())
        if not conf.conforms:
            problems.append(f"h={h:g}: min distance {conf.min_distance:.6g} below h - bound")
        if not rep.conforms:
            problems.append(f"h={h:g}: measured spacing error exceeds the per-pair bound")
        if not rep.ordered:
            log.warning("h=%g: bound ordering flagged at %d samples (sampling slack)",
                        h, int(rep.order_flags.sum()))
    wall = time.perf_counter() - t0
    write_json(out / "bounds.json", _report("pa", spec, hs, None, {}, bounds))
    write_csv(out / "bounds.csv", ("h", "r_min_over_h", "lower_bound_over_h"), rows)
    return {"outputs": ["bounds.json", "bounds.csv"], "wall_time_s": wall, "problems": problems}


HANDLERS = {"generate": cmd_generate, "compare": cmd_compare, "bench": cmd_bench, "bounds": cmd_bounds}


def execute(spec: dict, out: Path) -> dict:
    """Validate ``spec``, run its command into ``out`` and write the manifest."""
    validate(spec)
    out.mkdir(parents=True, exist_ok=True)
    result = HANDLERS[spec["command"]](spec, out)
    manifest = {"version": __version__, "rng_id": RNG_ID, "spec": spec, **result}
    write_json(out / "manifest.json", manifest)
    if result.get("problems"):
        raise InvariantViolation("; ".join(result["problems"]))
    return manifest


# ---------------------------------------------------------------- argument parsing

def _alg_list(text: str) -> list[str]:
    return [a.strip() for a in text.split(",") if a.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surfnodes", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = {"generate": "pa", "compare": "pa,sd,na", "bench": "pa", "bounds": "pa"}
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--surface", required=True, help="gallery surface: " + ", ".join(GALLERY_NAMES))
        p.add_argument("--alg", type=_alg_list, default=_alg_list(defaults[name]),
                       help="algorithm(s), comma separated: pa, sd, na")
        p.add_argument("--h", type=float, nargs="+", help="constant spacing (a sweep for bench/bounds)")
        p.add_argument("--h-grid", help="altitude CSV for variable spacing on the sphere, "
                                        "or 'synthetic[:seed]'")
        p.add_argument("--h-min", type=float, help=f"spacing at lowest altitude (default {EARTH_H_MIN})")
        p.add_argument("--h-max", type=float, help=f"spacing at highest altitude (default {EARTH_H_MAX})")
        p.add_argument("--n", type=int, help="candidates per expansion (default 2 / 15)")
        p.add_argument("--tau", type=float, default=5.0, help="supersampling parameter")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--refinement", type=float, default=0.2,
                       help="probe spacing factor for the max-empty-sphere estimate")
        p.add_argument("--reps", type=int, default=9, help="benchmark repetitions per point")
        p.add_argument("--samples", type=int, default=1000, help="(xi, s) samples for bounds")
        p.add_argument("--bins", type=int, default=50, help="histogram bins")
        p.add_argument("--out", required=True, type=Path, help="output directory")
    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", required=True, type=Path)
    return parser


def spec_from_args(args: argparse.Namespace) -> dict:
    return {k: getattr(args, k) for k in SPEC_KEYS}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "replay":
            spec = json.loads(args.manifest.read_text())["spec"]
        else:
            spec = spec_from_args(args)
        manifest = execute(spec, args.out)
    except (UsageError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    log.info("wrote %s", ", ".join(manifest["outputs"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
