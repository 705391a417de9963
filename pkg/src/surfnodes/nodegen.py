"""Surface node generators: advancing front (proposed), naive grid mapping and
supersampling with decimation.

The advancing-front generator keeps its queue implicitly in the output array:
node ``i`` is expanded once, every accepted candidate is appended at the end
and inserted into the proximity index, and generation stops when the cursor
catches up with the end of the array.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .directions import RNG_ID, SplitMix64, base_pattern, default_count, rng_uniform, rotate_into
from .geometry import (ParamDomain, SpacingField, Surface, as_spacing, box_contains, builtin_h,
                       builtin_jac, builtin_map, builtin_spacing_id, builtin_surface_id)
from .spatial import GridIndex, KDTreeIndex, kd_insert, kd_nearest, kd_rebuild

log = logging.getLogger(__name__)

_jit = njit(cache=True, error_model="numpy")

SINGULAR_TOL = 1e-14
SEED_TRIES = 1_000_000

# diagnostic counters, same order in both generator paths
DIAG_KEYS = ("singular", "outside", "degenerate", "too_close", "accepted")


class SingularDirectionError(ValueError):
    """The Jacobian (nearly) annihilates the requested direction."""


class SeedError(RuntimeError):
    pass


@dataclass
class GenerationConfig:
    n_candidates: int | None = None  # None: 2 for curves, 15 for surfaces
    rng_seed: int = 0
    max_nodes: int = 10_000_000
    index_kind: str = "kdtree"
    rebuild_every: int | None = None
    compiled: bool = True  # use the compiled kernel when the surface allows it

    def __post_init__(self):
        if self.n_candidates is not None and self.n_candidates < 1:
            raise ValueError("n_candidates must be at least 1")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be at least 1")
        if self.index_kind not in ("kdtree", "grid"):
            raise ValueError(f"unknown index kind {self.index_kind!r}")


@dataclass(frozen=True, eq=False)
class NodeSet:
    params: np.ndarray
    points: np.ndarray
    spacing: np.ndarray
    algorithm: str = "pa"
    capped: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def param_dim(self) -> int:
        return self.params.shape[1]

    def header(self) -> list[str]:
        return ([f"x{i}" for i in range(self.ambient_dim)]
                + [f"xi{i}" for i in range(self.param_dim)] + ["h"])

    def to_csv(self, path) -> None:
        """Write ``x0..,xi0..,h`` rows with 17 significant digits (exact round trip)."""
        table = np.column_stack([self.points, self.params, self.spacing])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join(self.header()),
                   comments="")

    @classmethod
    def from_csv(cls, path, param_dim: int) -> "NodeSet":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2).reshape(-1, len(header))
        d = len(header) - param_dim - 1
        return cls(table[:, d:d + param_dim], table[:, :d], table[:, -1])


# ---------------------------------------------------------------- shared arithmetic

@_jit
def propose_into(xi, s, h, J, eta):
    """First-order step: eta = xi + (h / |J s|) s.  Returns alpha, or -1 if |J s| is degenerate."""
    d, k = J.shape
    nrm2 = 0.0
    for r in range(d):
        acc = 0.0
        for c in range(k):
            acc += J[r, c] * s[c]
        nrm2 += acc * acc
    nrm = math.sqrt(nrm2)
    if not (nrm >= SINGULAR_TOL) or not np.isfinite(nrm):
        return -1.0
    alpha = h / nrm
    for c in range(k):
        eta[c] = xi[c] + alpha * s[c]
    return alpha


@_jit
def distance(a, b):
    acc = 0.0
    for k in range(a.shape[0]):
        t = a[k] - b[k]
        acc += t * t
    return math.sqrt(acc)


@_jit
def _all_finite(v):
    for k in range(v.shape[0]):
        if not np.isfinite(v[k]):
            return False
    return True


@_jit
def _grow2(a, cap):
    out = np.empty((cap, a.shape[1]), dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@_jit
def _grow1(a, cap):
    out = np.empty(cap, dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


# ---------------------------------------------------------------- compiled kernels
# Kernel arguments are either compiled functions or None; None selects the
# built-in kernel with the given integer id (the None branches are resolved at
# compile time).

@_jit
def _eval_map(kind, fmap, xi, prm, out):
    if fmap is None:
        builtin_map(kind, xi, prm, out)
    else:
        fmap(xi, prm, out)


@_jit
def _eval_jac(kind, fjac, xi, prm, out):
    if fjac is None:
        builtin_jac(kind, xi, prm, out)
    else:
        fjac(xi, prm, out)


@_jit
def _eval_h(kind, fh, p, prm):
    if fh is None:
        return builtin_h(kind, p, prm)
    return fh(p, prm)


@_jit
def _eval_pred(pred, xi):
    if pred is None:
        return True
    return pred(xi)


@_jit
def _advance_front(skind, fmap, fjac, pred, hkind, fh, sprm, box, hprm, seeds, seed_pts,
                   pattern, state, max_nodes, rebuild_every):
    ns, k = seeds.shape
    d = seed_pts.shape[1]
    m = pattern.shape[0]
    cap = max(1024, 2 * ns)
    params = np.empty((cap, k))
    pts = np.empty((cap, d))
    hv = np.empty(cap)
    nodes = np.empty((cap, 4), dtype=np.int64)
    stack_n = np.empty(cap + 1, dtype=np.int64)
    stack_b = np.empty(cap + 1)
    meta = np.array([-1, 0], dtype=np.int64)
    params[:ns] = seeds
    pts[:ns] = seed_pts
    meta[1] = ns
    kd_rebuild(pts, nodes, meta)

    diag = np.zeros(5, dtype=np.int64)
    dirs = np.empty_like(pattern)
    J = np.empty((d, k))
    eta = np.empty(k)
    c = np.empty(d)
    capped = False
    n = ns
    i = 0
    while i < n:
        xi = params[i]
        p = pts[i]
        hi = _eval_h(hkind, fh, p, hprm)
        hv[i] = hi
        _eval_jac(skind, fjac, xi, sprm, J)
        rotate_into(pattern, state, dirs)
        for j in range(m):
            if propose_into(xi, dirs[j], hi, J, eta) < 0.0:
                diag[0] += 1
                continue
            if not (box_contains(eta, box) and _eval_pred(pred, eta)):
                diag[1] += 1
                continue
            _eval_map(skind, fmap, eta, sprm, c)
            hhat = distance(c, p)
            if not (hhat > 0.0) or not np.isfinite(hhat) or not _all_finite(c):
                diag[2] += 1
                continue
            nid, d2 = kd_nearest(pts, nodes, meta, c, stack_n, stack_b)
            if math.sqrt(d2) >= hhat:
                if n >= max_nodes:
                    capped = True
                    break
                if n == cap:
                    cap *= 2
                    params = _grow2(params, cap)
                    pts = _grow2(pts, cap)
                    hv = _grow1(hv, cap)
                    nodes = _grow2(nodes, cap)
                    stack_n = np.empty(cap + 1, dtype=np.int64)
                    stack_b = np.empty(cap + 1)
                params[n] = eta
                kd_insert(pts, nodes, meta, c, stack_n)
                n += 1
                diag[4] += 1
                if rebuild_every > 0 and n % rebuild_every == 0:
                    kd_rebuild(pts, nodes, meta)
            else:
                diag[3] += 1
        if capped:
            break
        i += 1
    for t in range(i, n):
        hv[t] = _eval_h(hkind, fh, pts[t], hprm)
    return params[:n].copy(), pts[:n].copy(), hv[:n].copy(), capped, diag


@_jit
def _decimate(skind, fmap, sprm, X, h, d):
    n_all, k = X.shape
    cap = 1024
    keep = np.empty(cap, dtype=np.int64)
    pts = np.empty((cap, d))
    nodes = np.empty((cap, 4), dtype=np.int64)
    stack_n = np.empty(cap + 1, dtype=np.int64)
    stack_b = np.empty(cap + 1)
    meta = np.array([-1, 0], dtype=np.int64)
    c = np.empty(d)
    n = 0
    for t in range(n_all):
        _eval_map(skind, fmap, X[t], sprm, c)
        if not _all_finite(c):
            continue
        if n > 0:
            nid, d2 = kd_nearest(pts, nodes, meta, c, stack_n, stack_b)
            if math.sqrt(d2) < h:
                continue
        if n == cap:
            cap *= 2
            keep = _grow1(keep, cap)
            pts = _grow2(pts, cap)
            nodes = _grow2(nodes, cap)
            stack_n = np.empty(cap + 1, dtype=np.int64)
            stack_b = np.empty(cap + 1)
        keep[n] = t
        kd_insert(pts, nodes, meta, c, stack_n)
        n += 1
    return keep[:n].copy(), pts[:n].copy()


# ---------------------------------------------------------------- public API

def propose_candidate(xi, s, h_i: float, surface: Surface) -> tuple[np.ndarray, float]:
    """Candidate parameter one spacing ``h_i`` away from ``xi`` along unit direction ``s``."""
    if not h_i > 0:
        raise ValueError("spacing must be positive")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    J = surface.jacobian(xi)
    eta = np.empty_like(xi)
    alpha = propose_into(xi, s, float(h_i), J, eta)
    if alpha < 0:
        raise SingularDirectionError(f"|J s| below {SINGULAR_TOL:g} at xi={xi}, s={s}")
    return eta, alpha


def random_seed_param(domain: ParamDomain, rng: SplitMix64, tries: int = SEED_TRIES) -> np.ndarray:
    """Uniform rejection sample from the domain's bounding box."""
    for _ in range(tries):
        xi = np.array([domain.lo[k] + rng.random() * domain.extent[k] for k in range(domain.dim)])
        if domain.contains(xi):
            return xi
    raise SeedError(f"no parameter inside the domain after {tries} tries")


def _diag_dict(counts, seeds: int) -> dict:
    out = {k: int(v) for k, v in zip(DIAG_KEYS, counts)}
    out["seeds"] = seeds
    return out


def generate_proposed(surface: Surface, h, seeds=None, cfg: GenerationConfig | None = None) -> NodeSet:
    """Advancing-front node placement on ``surface`` with spacing ``h``.

    ``h`` is a SpacingField, a positive number or a callable ``h(p)``.  With no
    seeds a single start parameter is drawn uniformly from the domain.  The
    result is flagged ``capped`` if ``cfg.max_nodes`` stopped the front early.
    """
    cfg = cfg or GenerationConfig()
    spacing = as_spacing(h)
    dom = surface.domain
    k = dom.dim
    rng = SplitMix64(cfg.rng_seed)
    if seeds is None or len(seeds) == 0:
        seeds = random_seed_param(dom, rng)[None, :]
    else:
        seeds = np.asarray(seeds, dtype=float).reshape(-1, k)
        for x in seeds:
            if not dom.contains(x):
                raise ValueError(f"seed {x} lies outside the parametric domain")
    seeds = np.ascontiguousarray(seeds)
    pattern = base_pattern(cfg.n_candidates or default_count(k), k).vectors

    use_kernel = (cfg.compiled and cfg.index_kind == "kdtree" and surface.compiled
                  and spacing.compiled)
    if use_kernel:
        seed_pts = surface.map_many(seeds)
        skind = builtin_surface_id(surface)
        hkind = builtin_spacing_id(spacing)
        params, pts, hv, capped, diag = _advance_front(
            skind, None if skind >= 0 else surface.map_kernel,
            None if skind >= 0 else surface.jac_kernel, dom.predicate,
            hkind, None if hkind >= 0 else spacing.kernel, surface.params, dom.box,
            spacing.params, seeds, seed_pts, pattern, rng.state, cfg.max_nodes,
            cfg.rebuild_every or 0)
    else:
        params, pts, hv, capped, diag = _advance_front_py(surface, spacing, seeds, pattern, rng, cfg)
    if capped:
        log.warning("node cap of %d reached; returning partial node set", cfg.max_nodes)
    return NodeSet(params, pts, hv, "pa", bool(capped), _diag_dict(diag, len(seeds)))


def _make_index(cfg: GenerationConfig, spacing: SpacingField, d: int, seed_pts):
    if cfg.index_kind == "grid":
        if spacing.kind != "constant":
            raise ValueError("grid index requires a constant spacing")
        index = GridIndex(float(spacing.params[0]), d)
        for p in seed_pts:
            index.insert(p)
        return index
    return KDTreeIndex.build(seed_pts, rebuild_every=cfg.rebuild_every, dim=d)


def _advance_front_py(surface, spacing, seeds, pattern, rng, cfg):
    dom = surface.domain
    X = [x.copy() for x in seeds]
    P = [surface.map(x) for x in X]
    H = []
    index = _make_index(cfg, spacing, surface.ambient_dim, P)
    diag = [0] * 5
    dirs = np.empty_like(pattern)
    eta = np.empty(dom.dim)
    capped = False
    i = 0
    while i < len(X):
        xi, p = X[i], P[i]
        hi = spacing(p)
        H.append(hi)
        J = surface.jacobian(xi)
        rotate_into(pattern, rng.state, dirs)
        for s in dirs:
            if propose_into(xi, s, hi, J, eta) < 0.0:
                diag[0] += 1
                continue
            if not dom.contains(eta):
                diag[1] += 1
                continue
            c = surface.map(eta)
            hhat = distance(c, p)
            if not (hhat > 0.0) or not math.isfinite(hhat) or not np.all(np.isfinite(c)):
                diag[2] += 1
                continue
            _, d2 = index.nearest_id(c)
            if math.sqrt(d2) >= hhat:
                if len(X) >= cfg.max_nodes:
                    capped = True
                    break
                X.append(eta.copy())
                P.append(c)
                index.insert(c)
                diag[4] += 1
            else:
                diag[3] += 1
        if capped:
            break
        i += 1
    H.extend(spacing(p) for p in P[i:])
    return (np.array(X).reshape(-1, dom.dim), np.array(P).reshape(-1, surface.ambient_dim),
            np.array(H), capped, diag)


def parametric_lattice(domain: ParamDomain, step) -> np.ndarray:
    """Axis-aligned lattice anchored at the box minimum, row-major (last axis fastest),
    filtered by domain membership."""
    step = np.broadcast_to(np.asarray(step, dtype=float), (domain.dim,))
    counts = np.floor(domain.extent / step * (1.0 + 1e-12)).astype(np.int64) + 1
    axes = [domain.lo[k] + np.arange(counts[k]) * step[k] for k in range(domain.dim)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    inside = np.all(X >= domain.lo, axis=1)
    upper = np.where(domain.closed_hi, X <= domain.hi, X < domain.hi)
    X = X[inside & np.all(upper, axis=1)]
    if domain.predicate is not None:
        X = X[np.array([bool(domain.predicate(x)) for x in X], dtype=bool)]
    return np.ascontiguousarray(X)


def _constant_value(h) -> float:
    if isinstance(h, SpacingField):
        if h.kind != "constant":
            raise ValueError("this sampler needs a constant spacing")
        return float(h.params[0])
    h = float(h)
    if not h > 0:
        raise ValueError("spacing must be positive")
    return h


def generate_naive(surface: Surface, h, cfg: GenerationConfig | None = None) -> NodeSet:
    """Map a parametric lattice of spacing ``h`` straight onto the surface."""
    h = _constant_value(h)
    X = parametric_lattice(surface.domain, h)
    P = surface.map_many(X)
    ok = np.all(np.isfinite(P), axis=1)
    return NodeSet(X[ok], P[ok], np.full(int(ok.sum()), h), "na", False,
                   {"lattice": len(X)})


def supersampling_factor(surface: Surface, tau: float, area_samples: int = 1_000_000) -> float:
    """gamma = tau * (|surface| / |Xi|)^(1/d_xi)."""
    ratio = surface.surface_area(area_samples) / surface.domain.volume(area_samples)
    return tau * ratio ** (1.0 / surface.param_dim)


def generate_supersampled(surface: Surface, h, tau: float = 5.0, cfg: GenerationConfig | None = None,
                          area_samples: int = 1_000_000) -> NodeSet:
    """Supersampling-decimation: lattice of spacing ``h/gamma``, thinned in lattice order
    so that accepted points are pairwise at least ``h`` apart."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    h = _constant_value(h)
    gamma = supersampling_factor(surface, tau, area_samples)
    if gamma <= 1.0:
        warnings.warn(f"supersampling factor {gamma:.3g} <= 1 samples no denser than the naive grid")
    X = parametric_lattice(surface.domain, h / gamma)
    d = surface.ambient_dim
    if surface.map_kernel is not None:
        skind = builtin_surface_id(surface)
        fmap = None if skind >= 0 else surface.map_kernel
        keep, P = _decimate(skind, fmap, surface.params, X, h, d)
    else:
        index = KDTreeIndex(d)
        keep, rows = [], []
        for t, x in enumerate(X):
            c = surface.map(x)
            if not np.all(np.isfinite(c)):
                continue
            if len(index) and math.sqrt(index.nearest_id(c)[1]) < h:
                continue
            index.insert(c)
            keep.append(t)
            rows.append(c)
        keep, P = np.array(keep, dtype=np.int64), np.array(rows).reshape(-1, d)
    return NodeSet(X[keep], P, np.full(len(keep), h), "sd", False,
                   {"lattice": len(X), "gamma": gamma})


def run_algorithm(alg: str, surface: Surface, h, cfg: GenerationConfig | None = None,
                  tau: float = 5.0, seeds=None) -> NodeSet:
    if alg == "pa":
        return generate_proposed(surface, h, seeds, cfg)
    if alg == "sd":
        return generate_supersampled(surface, h, tau, cfg)
    if alg == "na":
        return generate_naive(surface, h, cfg)
    raise ValueError(f"unknown algorithm {alg!r}")


__all__ = [
    "GenerationConfig", "NodeSet", "SingularDirectionError", "SeedError", "RNG_ID",
    "propose_candidate", "generate_proposed", "generate_naive", "generate_supersampled",
    "parametric_lattice", "supersampling_factor", "run_algorithm",
]
