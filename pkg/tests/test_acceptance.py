"""Acceptance criteria, one test each; every test records a PASS/FAIL line that is
repeated in the terminal summary.

Timed criteria exclude one-off compilation: each timed run is preceded by an
untimed warm-up at coarse spacing.  Set ``SURFNODES_FULL=1`` to also run the
full-scale polar-curve reproduction (about a million nodes).
"""
import math
import os
import time

import numpy as np
import pytest
from scipy.spatial import cKDTree

from surfnodes.cli import bench_fit, main, run_bench
from surfnodes.geometry import (EARTH_H_MAX, EARTH_H_MIN, GALLERY_NAMES, AltitudeGrid, gallery,
                                load_altitude_spacing)
from surfnodes.nodegen import GenerationConfig, generate_proposed, run_algorithm
from surfnodes.quality import (bound_conformance, max_empty_sphere, min_pairwise_distance,
                               nn_stats, random_pairs, spacing_error_bounds)
from surfnodes.spatial import KDTreeIndex

CFG = GenerationConfig()  # default seed

# 1: polar curve, reduced scale
C1_H = 0.003
C1_PA_MEAN = (0.99, 1.05)
C1_SD_MEAN = (1.05, 1.25)
C1_SECONDS = 10.0
C1_FULL_H = 3e-5
C1_FULL_MEAN, C1_FULL_MEAN_TOL = 1.0001, 0.005
C1_FULL_STD, C1_FULL_STD_FACTOR = 5.15e-4, 3.0
# 2: heart, reduced scale
C2_H = 0.01
C2_PA_MEAN = (1.0, 1.08)
C2_SECONDS = 60.0
# 3: torus bound
C3_HS = (0.4, 0.2, 0.1, 0.05)
C3_CONST = 3.0
C3_LINEARITY = (0.35, 0.65)
C3_SAMPLES = 1000
# 4: complexity
C4_N_RANGE = (1e4, 1e6)
C4_SLOPE = (0.9, 1.2)
C4_REPS = 9
C4_ABS_SECONDS = 30.0  # non-gating
# 5: r_max stability
C5_HS = (0.01, 0.003, 0.001)
C5_PA_VARIATION = 0.5
C5_NA_GROWTH = 2.0
# 6: index oracle
C6_OPS = 100_000
# 7: supersampling separation
C7_SEEDS = 5
C7_H = {"circle": 0.02, "polar_curve": 0.01, "identity_square": 0.02, "heart": 0.05,
        "torus": 0.1, "roman": 0.02, "sine_sheet": 0.2, "sphere_patch": 0.03, "sphere": 0.05}
# 9: bound ordering
C9_SAMPLES = 1000
C9_SLACK = 0.01
# 10: Earth demo
C10_N = (5e4, 2e5)
C10_SECONDS = 5.0


def _std_order(std):
    return std["pa"] < std["sd"] < std["na"]


def _fmt(d):
    return ", ".join(f"{k}={v:.4g}" for k, v in d.items())


def test_c1_polar_curve_statistics(acceptance):
    s = gallery("polar_curve")
    for alg in ("pa", "sd", "na"):
        run_algorithm(alg, s, 0.05, CFG)
    t0 = time.perf_counter()
    sets = {alg: run_algorithm(alg, s, C1_H, CFG) for alg in ("pa", "sd", "na")}
    wall = time.perf_counter() - t0
    stats = {a: nn_stats(ns).summary() for a, ns in sets.items()}
    mean = {a: stats[a]["mean_dbar"] for a in stats}
    std = {a: stats[a]["std_dbar"] for a in stats}
    ok = (C1_PA_MEAN[0] <= mean["pa"] <= C1_PA_MEAN[1] and C1_SD_MEAN[0] <= mean["sd"] <= C1_SD_MEAN[1]
          and _std_order(std) and wall < C1_SECONDS)
    acceptance("C1 polar_curve h=0.003", ok,
               f"mean {_fmt(mean)}; std {_fmt(std)}; time {wall:.2f}s")


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("SURFNODES_FULL") != "1", reason="full scale: set SURFNODES_FULL=1")
def test_c1_full_scale(acceptance):
    s = gallery("polar_curve")
    st = nn_stats(generate_proposed(s, C1_FULL_H, cfg=CFG)).summary()
    ok = (abs(st["mean_dbar"] - C1_FULL_MEAN) <= C1_FULL_MEAN_TOL
          and C1_FULL_STD / C1_FULL_STD_FACTOR <= st["std_dbar"] <= C1_FULL_STD * C1_FULL_STD_FACTOR)
    acceptance("C1 polar_curve h=3e-5 (full scale)", ok,
               f"N={st['n']}, mean={st['mean_dbar']:.6f}, std={st['std_dbar']:.3e}")


def test_c2_heart_statistics(acceptance):
    s = gallery("heart")
    for alg in ("pa", "sd", "na"):
        run_algorithm(alg, s, 0.2, CFG)
    t0 = time.perf_counter()
    sets = {alg: run_algorithm(alg, s, C2_H, CFG) for alg in ("pa", "sd", "na")}
    wall = time.perf_counter() - t0
    stats = {a: nn_stats(ns).summary() for a, ns in sets.items()}
    mean = {a: stats[a]["mean_dbar"] for a in stats}
    std = {a: stats[a]["std_dbar"] for a in stats}
    ok = C2_PA_MEAN[0] <= mean["pa"] <= C2_PA_MEAN[1] and _std_order(std) and wall < C2_SECONDS
    acceptance("C2 heart h=0.01", ok, f"mean {_fmt(mean)}; std {_fmt(std)}; time {wall:.2f}s")


def test_c3_torus_bound(acceptance):
    s = gallery("torus")
    pairs = random_pairs(s, C3_SAMPLES, seed=0)
    rel, details, ok = [], [], True
    for h in C3_HS:
        rep = spacing_error_bounds(s, h, pairs)
        r = float(np.max(rep.measured[rep.valid]) / h)
        rel.append(r)
        rel_bound = math.sqrt(2) / 2 * C3_CONST * h
        dmin = min_pairwise_distance(generate_proposed(s, h, cfg=CFG))
        lower = h - math.sqrt(2) / 2 * C3_CONST * h * h
        ok &= r <= rel_bound and dmin >= lower
        details.append(f"h={h}: |dh|/h={r:.3e}<= {rel_bound:.3e}, dmin={dmin:.4g}>= {lower:.4g}")
    ratios = [rel[i + 1] / rel[i] for i in range(len(rel) - 1)]
    ok &= all(C3_LINEARITY[0] <= q <= C3_LINEARITY[1] for q in ratios)
    acceptance("C3 torus bound", ok, "; ".join(details) + f"; halving ratios {np.round(ratios, 3).tolist()}")


def test_c4_complexity(acceptance):
    s = gallery("polar_curve")
    # N is about 12.3 / h on this curve
    hs = [1.2e-3, 4e-4, 1.2e-4, 4e-5, 1.23e-5]
    rows = run_bench(s, "pa", hs, CFG, C4_REPS)
    n = np.array([r[1] for r in rows], dtype=float)
    t = np.array([r[2] for r in rows])
    fit = bench_fit(n, t)
    in_range = (n.min() >= C4_N_RANGE[0] * 0.95) and (n.max() <= C4_N_RANGE[1] * 1.05)
    ok = in_range and fit["reliable"] and C4_SLOPE[0] <= fit["slope"] <= C4_SLOPE[1]
    t_max = t[np.argmax(n)]
    acceptance("C4 PA complexity", ok,
               f"N={n.astype(int).tolist()}, median s={np.round(t, 4).tolist()}, slope={fit['slope']:.3f}; "
               f"(non-gating) {int(n.max())} nodes in {t_max:.2f}s vs {C4_ABS_SECONDS}s target")


def test_c5_r_max_stability(acceptance):
    s = gallery("polar_curve")
    ratio = {"pa": [], "na": []}
    for h in C5_HS:
        for alg in ratio:
            ns = run_algorithm(alg, s, h, CFG)
            ratio[alg].append(max_empty_sphere(s, ns, h, seed=0) / h)
    pa, na = np.array(ratio["pa"]), np.array(ratio["na"])
    pa_var = pa.max() / pa.min() - 1.0
    na_growth = na[-1] / na[0]
    na_mono = bool(np.all(np.diff(na) > 0))
    ok = pa_var < C5_PA_VARIATION and na_mono and na_growth > C5_NA_GROWTH
    acceptance("C5 r_max/h stability", ok,
               f"PA r_max/h={np.round(pa, 3).tolist()} (variation {pa_var:.0%}); "
               f"NA r_max/h={np.round(na, 3).tolist()} (monotone={na_mono}, growth {na_growth:.2f}x)")


def test_c6_index_oracle(acceptance):
    rng = np.random.default_rng(2024)
    tree = KDTreeIndex(3)
    pts = np.empty((C6_OPS, 3))
    n = mismatches = queries = 0
    for _ in range(C6_OPS):
        p = rng.random(3)
        if n == 0 or rng.random() < 0.5:
            tree.insert(p)
            pts[n] = p
            n += 1
        else:
            queries += 1
            d2 = np.sum((pts[:n] - p) ** 2, axis=1)
            j = int(np.argmin(d2))
            if tree.nearest_id(p) != (j, float(d2[j])):
                mismatches += 1
    acceptance("C6 k-d index vs linear scan", mismatches == 0,
               f"{n} inserts, {queries} queries, {mismatches} mismatches")


def test_c7_supersampling_separation(acceptance):
    worst, details = math.inf, []
    for name in GALLERY_NAMES:
        s, h = gallery(name), C7_H[name]
        for seed in range(C7_SEEDS):
            ns = run_algorithm("sd", s, h, GenerationConfig(rng_seed=seed))
            dmin = float(cKDTree(ns.points).query(ns.points, k=2)[0][:, 1].min())
            worst = min(worst, dmin / h)
        details.append(f"{name}:{dmin / h:.6f}")
    acceptance("C7 SD min distance >= h", worst >= 1.0,
               f"min dmin/h over {len(GALLERY_NAMES)} surfaces x {C7_SEEDS} seeds = {worst:.9f} ({', '.join(details)})")


def test_c8_determinism(acceptance, tmp_path):
    commands = {
        "generate": ["generate", "--surface", "heart", "--h", "0.05", "--seed", "5"],
        "generate-sd": ["generate", "--surface", "torus", "--h", "0.1", "--alg", "sd"],
        "generate-earth": ["generate", "--surface", "sphere", "--h-grid", "synthetic:1",
                           "--h-min", "0.02", "--h-max", "0.04", "--seed", "2"],
        "compare": ["compare", "--surface", "polar_curve", "--h", "0.003", "--seed", "3"],
        "bounds": ["bounds", "--surface", "torus", "--h", "0.2", "0.1", "--samples", "100"],
        "bench": ["bench", "--surface", "circle", "--h", "0.01", "0.001", "--reps", "1"],
    }
    bad = []
    for key, args in commands.items():
        outs = [tmp_path / f"{key}-{r}" for r in (0, 1)]
        for out in outs:
            assert main(args + ["--out", str(out)]) == 0
        for f in sorted(outs[0].iterdir()):
            if f.name == "manifest.json":
                continue  # records wall time
            a, b = f.read_bytes(), (outs[1] / f.name).read_bytes()
            if key == "bench":  # timing columns differ by nature; compare h and N
                a = [ln.split(",")[:2] for ln in a.decode().splitlines()] if f.suffix == ".csv" else None
                b = [ln.split(",")[:2] for ln in b.decode().splitlines()] if f.suffix == ".csv" else None
            if a != b:
                bad.append(f"{key}/{f.name}")
    acceptance("C8 byte-identical outputs", not bad,
               f"{len(commands)} command runs repeated; differing files: {bad or 'none'}")


def test_c9_bound_ordering(acceptance):
    details, ok = [], True
    for name, h in (("torus", 0.1), ("circle", 0.1)):
        s = gallery(name)
        rep = spacing_error_bounds(s, h, random_pairs(s, C9_SAMPLES, seed=1), slack=C9_SLACK)
        v = rep.valid
        pair_le_point = bool(np.all(rep.per_pair[v] <= rep.per_point[v] * (1 + C9_SLACK)))
        point_le_glob = bool(np.all(rep.per_point[v] <= rep.global_bound * (1 + C9_SLACK)))
        ok &= pair_le_point and point_le_glob and int(v.sum()) == C9_SAMPLES
        details.append(f"{name}: {int(v.sum())} samples, pair<=point {pair_le_point}, point<=global {point_le_glob}")
    acceptance("C9 bound ordering", ok, "; ".join(details))


def test_c10_earth_demo(acceptance):
    s = gallery("sphere")
    spacing = load_altitude_spacing(AltitudeGrid.synthetic(seed=0), EARTH_H_MIN, EARTH_H_MAX)
    generate_proposed(s, spacing.scaled(10.0), cfg=CFG)
    t0 = time.perf_counter()
    ns = generate_proposed(s, spacing, cfg=CFG)
    wall = time.perf_counter() - t0
    ok = C10_N[0] <= len(ns) <= C10_N[1] and wall < C10_SECONDS
    acceptance("C10 Earth demo", ok,
               f"h in [{EARTH_H_MIN}, {EARTH_H_MAX}] from synthetic altitudes: N={len(ns)}, time {wall:.2f}s")
