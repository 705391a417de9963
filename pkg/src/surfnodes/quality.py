"""Node-set quality metrics and the linearization error bounds of the
advancing-front step.

The bound routines evaluate, for a parameter ``xi`` and unit direction ``s``,
the gap between the requested spacing h(p) and the realised step
``|r(xi + alpha s) - r(xi)|`` with ``alpha = h / |J s|``, together with three
progressively coarser upper bounds: per (xi, s) pair, per parameter, global.

All three share the prefactor ``sqrt(m) / 2 * h^2``.  The published form uses
``m = d_xi``; bounding the norm of a d-component Taylor remainder by its
largest component strictly needs ``m = d``, so ``dim_factor="ambient"`` gives
the rigorous variant (identical when d_xi = d).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import SpacingField, Surface, as_spacing
from .nodegen import GenerationConfig, NodeSet, generate_proposed


# relative allowance for floating-point rounding in bound comparisons
ROUNDING = 1e-12


def _points(nodes) -> np.ndarray:
    pts = nodes.points if isinstance(nodes, NodeSet) else nodes
    return np.asarray(pts, dtype=float).reshape(len(pts), -1)


def default_neighbours(param_dim: int) -> int:
    return 2 if param_dim == 1 else 3


# ---------------------------------------------------------------- neighbour statistics

@dataclass
class NNStats:
    c: int
    mean_dist: np.ndarray
    min_dist: np.ndarray
    max_dist: np.ndarray
    spacing: np.ndarray

    @property
    def mean_norm(self) -> np.ndarray:
        return self.mean_dist / self.spacing

    @property
    def min_norm(self) -> np.ndarray:
        return self.min_dist / self.spacing

    @property
    def max_norm(self) -> np.ndarray:
        return self.max_dist / self.spacing

    def summary(self) -> dict:
        m = self.mean_norm
        return {
            "c": self.c,
            "n": int(m.size),
            "mean_dbar": float(m.mean()),
            "std_dbar": float(m.std()),
            "mean_range": float((self.max_norm - self.min_norm).mean()),
            "min_dmin": float(self.min_norm.min()),
            "max_dmax": float(self.max_norm.max()),
        }


def nn_stats(nodes, c: int | None = None, h=None) -> NNStats:
    """Distances from every node to its ``c`` nearest neighbours, raw and divided by h(p_i).

    ``h`` defaults to the spacing recorded in the node set.
    """
    pts = _points(nodes)
    if c is None:
        if not isinstance(nodes, NodeSet):
            raise ValueError("neighbour count c is required for bare point arrays")
        c = default_neighbours(nodes.param_dim)
    if c < 1:
        raise ValueError("c must be at least 1")
    if len(pts) <= c:
        raise ValueError(f"need more than {c} points, got {len(pts)}")
    dist, _ = cKDTree(pts).query(pts, k=c + 1)
    dist = dist[:, 1:]
    if h is None:
        if not isinstance(nodes, NodeSet):
            raise ValueError("spacing h is required for bare point arrays")
        spacing = nodes.spacing
    else:
        spacing = as_spacing(h).eval_many(pts)
    return NNStats(c, dist.mean(axis=1), dist.min(axis=1), dist.max(axis=1), spacing)


def histogram(values, bins: int = 50) -> list[tuple[float, float, int]]:
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]


# ---------------------------------------------------------------- uniformity

def separation_distance(nodes) -> float:
    """Half of the smallest pairwise distance."""
    pts = _points(nodes)
    if len(pts) < 2:
        raise ValueError("separation distance needs at least two points")
    dist, _ = cKDTree(pts).query(pts, k=2)
    return 0.5 * float(dist[:, 1].min())


def min_pairwise_distance(nodes) -> float:
    return 2.0 * separation_distance(nodes)


def max_empty_sphere(surface: Surface, nodes, h=None, refinement: float = 0.2,
                     probes=None, seed: int = 0) -> float:
    """Estimate of the largest distance from the surface to the nearest node.

    The surface is probed with a dense advancing-front set at spacing
    ``refinement * h`` unless ``probes`` are given.
    """
    pts = _points(nodes)
    if len(pts) == 0:
        raise ValueError("no nodes")
    if probes is None:
        if not 0.0 < refinement < 1.0:
            raise ValueError("refinement must lie strictly between 0 and 1")
        if h is None:
            raise ValueError("spacing h is needed to generate probes")
        dense = generate_proposed(surface, as_spacing(h).scaled(refinement), None,
                                  GenerationConfig(rng_seed=seed))
        probes = dense.points
    dist, _ = cKDTree(pts).query(np.asarray(probes, dtype=float))
    return float(np.max(dist))


@dataclass
class UniformityReport:
    r_min: float
    r_max: float
    h_reference: float

    def summary(self) -> dict:
        return {"r_min": self.r_min, "r_max": self.r_max, "h": self.h_reference,
                "r_min_over_h": self.r_min / self.h_reference,
                "r_max_over_h": self.r_max / self.h_reference}


def uniformity(surface: Surface, nodes, h: float, refinement: float = 0.2, seed: int = 0,
               probes=None) -> UniformityReport:
    return UniformityReport(separation_distance(nodes),
                            max_empty_sphere(surface, nodes, h, refinement, probes, seed), float(h))


# ---------------------------------------------------------------- linearization bounds

def _sigma_min_jac(J) -> np.ndarray:
    """Smallest singular value(s) via eigenvalues of J^T J; J shape (..., d, k)."""
    G = np.swapaxes(J, -1, -2) @ J
    lam = np.linalg.eigvalsh(G)[..., 0]
    return np.sqrt(np.clip(lam, 0.0, None))


def _sigma_max_hess(H) -> np.ndarray:
    """Max over ambient components of the largest singular value; H shape (..., d, k, k)."""
    ev = np.linalg.eigvalsh(H)
    return np.abs(ev).max(axis=(-1, -2))


def random_pairs(surface: Surface, count: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Uniform parameters paired with uniform unit directions."""
    xs = surface.domain.sample(count, seed=seed)
    rng = np.random.default_rng(seed + 1)
    s = rng.normal(size=(count, surface.param_dim))
    s /= np.linalg.norm(s, axis=1)[:, None]
    return list(zip(xs, s))


def _ball_offsets(k: int, count: int, rng) -> np.ndarray:
    """Unit-ball sample: centre, +-axis points, then half interior / half boundary."""
    fixed = np.vstack([np.zeros(k), np.eye(k), -np.eye(k)])
    rest = max(count - len(fixed), 0)
    g = rng.normal(size=(rest, k))
    g /= np.linalg.norm(g, axis=1)[:, None]
    radii = np.ones(rest)
    inner = rest // 2
    radii[:inner] = rng.random(inner) ** (1.0 / k)
    return np.vstack([fixed, g * radii[:, None]])


@dataclass
class BoundReport:
    params: np.ndarray
    directions: np.ndarray
    spacing: np.ndarray
    measured: np.ndarray  # |h(p) - |r(eta) - r(xi)||
    per_pair: np.ndarray
    per_point: np.ndarray
    global_bound: float
    skipped: np.ndarray
    violations: np.ndarray  # measured > per-pair after refinement
    order_flags: np.ndarray  # per-pair > per-point or per-point > global beyond slack
    constants: dict = field(default_factory=dict)

    @property
    def valid(self) -> np.ndarray:
        return ~self.skipped

    @property
    def conforms(self) -> bool:
        return not self.violations[self.valid].any()

    @property
    def ordered(self) -> bool:
        return not self.order_flags[self.valid].any()

    def summary(self) -> dict:
        v = self.valid
        rel = self.measured[v] / self.spacing[v]
        return {
            "samples": int(v.size),
            "skipped": int((~v).sum()),
            "max_measured": float(self.measured[v].max()) if v.any() else 0.0,
            "max_measured_rel": float(rel.max()) if v.any() else 0.0,
            "max_per_pair": float(self.per_pair[v].max()) if v.any() else 0.0,
            "max_per_point": float(self.per_point[v].max()) if v.any() else 0.0,
            "global": self.global_bound,
            "measured_within_per_pair": bool(self.conforms),
            "ordering_holds": bool(self.ordered),
            **self.constants,
        }


def global_constants(surface: Surface, h: SpacingField, samples: int = 10_000, seed: int = 0) -> dict:
    """h_M, max Hessian singular value and min Jacobian singular value over the domain.

    Monte Carlo maxima/minima are merged with the surface's analytic constants
    when it declares them.
    """
    X = surface.domain.sample(samples, seed=seed)
    sig_h = float(np.nanmax(_sigma_max_hess(surface.hessians_many(X))))
    sig_j = float(np.nanmin(_sigma_min_jac(surface.jacobians_many(X))))
    if surface.hessian_sigma_max is not None:
        sig_h = max(sig_h, surface.hessian_sigma_max)
    if surface.jacobian_sigma_min is not None:
        sig_j = min(sig_j, surface.jacobian_sigma_min)
    h_m = h.h_max if h.h_max is not None else float(np.max(h.eval_many(surface.map_many(X))))
    return {"h_max": h_m, "hessian_sigma_max": sig_h, "jacobian_sigma_min": sig_j}


def _prefactor(surface: Surface, dim_factor: str) -> float:
    if dim_factor == "param":
        return math.sqrt(surface.param_dim) / 2.0
    if dim_factor == "ambient":
        return math.sqrt(surface.ambient_dim) / 2.0
    raise ValueError(f"dim_factor must be 'param' or 'ambient', not {dim_factor!r}")


def global_bound(surface: Surface, h, samples: int = 10_000, seed: int = 0,
                 dim_factor: str = "param") -> tuple[float, dict]:
    spacing = as_spacing(h)
    c = _prefactor(surface, dim_factor)
    const = global_constants(surface, spacing, samples, seed)
    if const["jacobian_sigma_min"] <= 0.0:
        return math.inf, const
    b = c * const["h_max"] ** 2 * const["hessian_sigma_max"] / const["jacobian_sigma_min"] ** 2
    return b, const


def _pair_numerator(surface, xi, s, alpha, points):
    theta = np.linspace(0.0, alpha, points)
    H = surface.hessians_many(xi[None, :] + theta[:, None] * s[None, :])
    quad = np.einsum("j,tijl,l->ti", s, H, s)
    return float(np.abs(quad).max())


def spacing_error_bounds(surface: Surface, h, samples, scan_points: int = 64, ball_samples: int = 256,
                         global_samples: int = 10_000, seed: int = 0, slack: float = 0.01,
                         dim_factor: str = "param") -> BoundReport:
    """Measured linearization error and its three upper bounds at each (xi, s) sample.

    Samples with a rank-deficient Jacobian or non-finite values are skipped and
    flagged in ``skipped``.
    """
    if not surface.has_hessians:
        raise ValueError(f"surface {surface.name!r} has no Hessians")
    spacing = as_spacing(h)
    k = surface.param_dim
    c = _prefactor(surface, dim_factor)
    gb, const = global_bound(surface, spacing, global_samples, seed, dim_factor)
    rng = np.random.default_rng(seed)
    offsets = _ball_offsets(k, ball_samples, rng)
    n = len(samples)
    out = {name: np.zeros(n) for name in ("spacing", "measured", "per_pair", "per_point")}
    skipped = np.zeros(n, dtype=bool)
    violations = np.zeros(n, dtype=bool)
    order_flags = np.zeros(n, dtype=bool)
    params = np.zeros((n, k))
    dirs = np.zeros((n, k))
    for t, (xi, s) in enumerate(samples):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        s = np.atleast_1d(np.asarray(s, dtype=float))
        s = s / np.linalg.norm(s)
        params[t], dirs[t] = xi, s
        p = surface.map(xi)
        hp = spacing(p)
        J = surface.jacobian(xi)
        js = float(np.linalg.norm(J @ s))
        smin = float(_sigma_min_jac(J))
        if not (np.isfinite(js) and js > 1e-14 and smin > 1e-14):
            skipped[t] = True
            continue
        alpha = hp / js
        eta = xi + alpha * s
        measured = abs(hp - float(np.linalg.norm(surface.map(eta) - p)))
        pair = c * hp * hp * _pair_numerator(surface, xi, s, alpha, scan_points) / js ** 2
        if not (math.isfinite(measured) and math.isfinite(pair)):
            skipped[t] = True
            continue
        if measured > pair + ROUNDING * hp:
            pair = max(pair, c * hp * hp * _pair_numerator(surface, xi, s, alpha, 4 * scan_points) / js ** 2)
            violations[t] = measured > pair + ROUNDING * hp
        rho = hp / smin
        ball = _sigma_max_hess(surface.hessians_many(xi[None, :] + rho * offsets)).max()
        point = c * hp * hp * ball / smin ** 2
        out["spacing"][t] = hp
        out["measured"][t] = measured
        out["per_pair"][t] = pair
        out["per_point"][t] = point
        order_flags[t] = pair > point * (1.0 + slack) or point > gb * (1.0 + slack)
    return BoundReport(params, dirs, out["spacing"], out["measured"], out["per_pair"],
                       out["per_point"], gb, skipped, violations, order_flags, const)


@dataclass
class Conformance:
    h: float
    min_distance: float
    global_bound: float
    r_min_over_h: float
    lower_bound_over_h: float  # (h - bound) / (2h): lower bound for r_min / h

    @property
    def conforms(self) -> bool:
        return self.min_distance >= self.h - self.global_bound - ROUNDING * self.h

    def row(self) -> tuple[float, float, float]:
        return (self.h, self.r_min_over_h, self.lower_bound_over_h)


def bound_conformance(surface: Surface, h: float, nodes, global_samples: int = 10_000,
                      seed: int = 0, dim_factor: str = "param") -> Conformance:
    """Check that the node set's minimum pairwise distance respects h minus the global bound."""
    if not surface.has_hessians:
        raise ValueError(f"surface {surface.name!r} has no Hessians")
    h = float(h)
    gb, _ = global_bound(surface, h, global_samples, seed, dim_factor)
    dmin = min_pairwise_distance(nodes)
    return Conformance(h, dmin, gb, 0.5 * dmin / h, (h - gb) / (2.0 * h))
