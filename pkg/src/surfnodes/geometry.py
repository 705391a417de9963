"""Parametric domains, surfaces, spacing fields and the built-in surface gallery.

Gallery surfaces carry compiled evaluation kernels with the signatures

    map(xi, params, out)        out: (d,)
    jac(xi, params, out)        out: (d, d_xi)
    hess(xi, params, out)       out: (d, d_xi, d_xi), one Hessian per ambient component

which lets the generators run entirely in compiled code.  Surfaces built from
plain Python callables work everywhere too, only slower.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit
from numba.core.dispatcher import Dispatcher

_jit = njit(cache=True, error_model="numpy")


def is_kernel(f) -> bool:
    return isinstance(f, Dispatcher)


# ---------------------------------------------------------------- domains

@_jit
def box_contains(xi, box):
    """``box`` = [lo..., hi..., closed_hi...] with closed_hi as 0/1."""
    n = xi.shape[0]
    for k in range(n):
        x = xi[k]
        if not x >= box[k]:
            return False
        hi = box[n + k]
        if box[2 * n + k] > 0.5:
            if x > hi:
                return False
        elif not x < hi:
            return False
    return True


@_jit
def always_true(xi):
    return True


@dataclass(frozen=True, eq=False)
class ParamDomain:
    """Parametric domain as bounding box plus optional membership predicate.

    ``closed_hi`` marks per axis whether the upper bound belongs to the domain;
    half-open axes model periodic parameters without wrapping them.
    """

    lo: np.ndarray
    hi: np.ndarray
    closed_hi: np.ndarray | None = None
    predicate: Callable | None = None
    measure: float | None = None

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if not np.all(hi > lo):
            raise ValueError("bounding box needs positive extent on every axis")
        closed = np.ones(lo.size, dtype=bool) if self.closed_hi is None else \
            np.broadcast_to(np.asarray(self.closed_hi, dtype=bool), lo.shape).copy()
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "closed_hi", closed)
        object.__setattr__(self, "box", np.concatenate([lo, hi, closed.astype(float)]))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def compiled(self) -> bool:
        return self.predicate is None or is_kernel(self.predicate)

    @property
    def predicate_kernel(self):
        return always_true if self.predicate is None else self.predicate

    def contains(self, xi) -> bool:
        xi = np.asarray(xi, dtype=float)
        if not box_contains(xi, self.box):
            return False
        return self.predicate is None or bool(self.predicate(xi))

    def volume(self, samples: int = 1_000_000, seed: int = 0) -> float:
        """|Xi|: the declared measure, the box volume, or a Monte Carlo estimate."""
        if self.measure is not None:
            return float(self.measure)
        box_vol = float(np.prod(self.extent))
        if self.predicate is None:
            return box_vol
        X = np.random.default_rng(seed).uniform(self.lo, self.hi, size=(samples, self.dim))
        return box_vol * float(np.mean([self.contains(x) for x in X]))

    def sample(self, count: int, seed: int = 0, margin: float = 0.0) -> np.ndarray:
        """Uniform in-domain parameters by rejection from the (shrunk) box."""
        rng = np.random.default_rng(seed)
        lo = self.lo + margin * self.extent
        hi = self.hi - margin * self.extent
        out = []
        tries = 0
        while len(out) < count:
            batch = rng.uniform(lo, hi, size=(max(count, 64), self.dim))
            out.extend(x for x in batch if self.contains(x))
            tries += len(batch)
            if tries > 1_000_000 and not out:
                raise RuntimeError("could not sample any parameter inside the domain")
        return np.array(out[:count])


# ---------------------------------------------------------------- surfaces

@dataclass(frozen=True, eq=False)
class Surface:
    """Parametrization ``r: Xi -> R^d`` with its Jacobian and optional Hessians.

    Either compiled kernels (``map_kernel`` etc. plus ``params``) or plain
    callables ``map_fn(xi) -> (d,)``, ``jac_fn(xi) -> (d, d_xi)``,
    ``hess_fn(xi) -> (d, d_xi, d_xi)`` must be given.
    """

    name: str
    domain: ParamDomain
    ambient_dim: int
    map_kernel: Callable | None = None
    jac_kernel: Callable | None = None
    hess_kernel: Callable | None = None
    params: np.ndarray = field(default_factory=lambda: np.zeros(1))
    map_fn: Callable | None = None
    jac_fn: Callable | None = None
    hess_fn: Callable | None = None
    area: float | None = None
    hessian_sigma_max: float | None = None
    jacobian_sigma_min: float | None = None

    def __post_init__(self):
        if self.map_kernel is None and self.map_fn is None:
            raise ValueError("surface needs a map")
        if self.jac_kernel is None and self.jac_fn is None:
            raise ValueError("surface needs a Jacobian")
        object.__setattr__(self, "params", np.asarray(self.params, dtype=float))

    @property
    def param_dim(self) -> int:
        return self.domain.dim

    @property
    def compiled(self) -> bool:
        return self.map_kernel is not None and self.jac_kernel is not None and self.domain.compiled

    @property
    def has_hessians(self) -> bool:
        return self.hess_kernel is not None or self.hess_fn is not None

    def map(self, xi) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if self.map_kernel is not None:
            out = np.empty(self.ambient_dim)
            self.map_kernel(xi, self.params, out)
            return out
        return np.asarray(self.map_fn(xi), dtype=float).reshape(self.ambient_dim)

    def jacobian(self, xi) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if self.jac_kernel is not None:
            out = np.empty((self.ambient_dim, self.param_dim))
            self.jac_kernel(xi, self.params, out)
            return out
        return np.asarray(self.jac_fn(xi), dtype=float).reshape(self.ambient_dim, self.param_dim)

    def hessians(self, xi) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        k = self.param_dim
        if self.hess_kernel is not None:
            out = np.empty((self.ambient_dim, k, k))
            self.hess_kernel(xi, self.params, out)
            return out
        if self.hess_fn is None:
            raise ValueError(f"surface {self.name!r} has no Hessians")
        return np.asarray(self.hess_fn(xi), dtype=float).reshape(self.ambient_dim, k, k)

    def map_many(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(X, dtype=float).reshape(-1, self.param_dim))
        if self.map_kernel is not None:
            out = np.empty((len(X), self.ambient_dim))
            _map_rows(self.map_kernel, X, self.params, out)
            return out
        return np.array([self.map(x) for x in X]).reshape(-1, self.ambient_dim)

    def jacobians_many(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(X, dtype=float).reshape(-1, self.param_dim))
        if self.jac_kernel is not None:
            out = np.empty((len(X), self.ambient_dim, self.param_dim))
            _eval_rows(self.jac_kernel, X, self.params, out)
            return out
        return np.array([self.jacobian(x) for x in X]).reshape(len(X), self.ambient_dim, self.param_dim)

    def hessians_many(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(X, dtype=float).reshape(-1, self.param_dim))
        k = self.param_dim
        if self.hess_kernel is not None:
            out = np.empty((len(X), self.ambient_dim, k, k))
            _eval_rows(self.hess_kernel, X, self.params, out)
            return out
        return np.array([self.hessians(x) for x in X]).reshape(len(X), self.ambient_dim, k, k)

    def surface_area(self, samples: int = 1_000_000, seed: int = 0) -> float:
        """|r(Xi)|: declared area or Monte Carlo integral of sqrt(det(J^T J)) over the box."""
        if self.area is not None:
            return float(self.area)
        dom = self.domain
        X = np.random.default_rng(seed).uniform(dom.lo, dom.hi, size=(samples, dom.dim))
        if self.jac_kernel is not None and dom.compiled:
            total = _gram_sum(self.jac_kernel, dom.predicate_kernel, X, self.params, dom.box,
                              self.ambient_dim)
        else:
            total = 0.0
            for x in X:
                if dom.contains(x):
                    J = self.jacobian(x)
                    g = np.linalg.det(J.T @ J)
                    if np.isfinite(g) and g > 0:
                        total += math.sqrt(g)
        return float(np.prod(dom.extent)) * total / samples


@_jit
def _map_rows(fmap, X, prm, out):
    for i in range(X.shape[0]):
        fmap(X[i], prm, out[i])


@_jit
def _eval_rows(f, X, prm, out):
    for i in range(X.shape[0]):
        f(X[i], prm, out[i])


@_jit
def _gram_sum(fjac, pred, X, prm, box, d):
    k = X.shape[1]
    J = np.empty((d, k))
    total = 0.0
    for i in range(X.shape[0]):
        xi = X[i]
        if not (box_contains(xi, box) and pred(xi)):
            continue
        fjac(xi, prm, J)
        g = np.linalg.det(J.T @ J)
        if np.isfinite(g) and g > 0.0:
            total += math.sqrt(g)
    return total


# ---------------------------------------------------------------- gallery kernels

@_jit
def _circle_map(xi, prm, out):
    out[0] = math.cos(xi[0])
    out[1] = math.sin(xi[0])


@_jit
def _circle_jac(xi, prm, out):
    out[0, 0] = -math.sin(xi[0])
    out[1, 0] = math.cos(xi[0])


@_jit
def _circle_hess(xi, prm, out):
    out[0, 0, 0] = -math.cos(xi[0])
    out[1, 0, 0] = -math.sin(xi[0])


@_jit
def _square_map(xi, prm, out):
    out[0] = xi[0]
    out[1] = xi[1]


@_jit
def _square_jac(xi, prm, out):
    out[0, 0] = 1.0
    out[0, 1] = 0.0
    out[1, 0] = 0.0
    out[1, 1] = 1.0


@_jit
def _zero_hess(xi, prm, out):
    out[:] = 0.0


@_jit
def _polar_radius(phi):
    return np.abs(np.cos(1.5 * phi)) ** np.sin(3.0 * phi)


@_jit
def _polar_map(xi, prm, out):
    phi = xi[0]
    r = _polar_radius(phi)
    out[0] = r * math.cos(phi)
    out[1] = r * math.sin(phi)


@_jit
def _polar_jac(xi, prm, out):
    phi = xi[0]
    r = _polar_radius(phi)
    s15 = math.sin(1.5 * phi)
    # d/dphi log r = 3 cos(3phi) log|cos(1.5phi)| - 3 sin^2(1.5phi)
    dr = r * (3.0 * math.cos(3.0 * phi) * np.log(np.abs(math.cos(1.5 * phi))) - 3.0 * s15 * s15)
    c = math.cos(phi)
    s = math.sin(phi)
    out[0, 0] = dr * c - r * s
    out[1, 0] = dr * s + r * c


@_jit
def _heart_map(xi, prm, out):
    u = xi[0]
    v = xi[1]
    w = math.sqrt(max(1.0 - v * v, 0.0))
    out[0] = w * math.cos(u) + v * v
    out[1] = w * math.sin(u)
    out[2] = v


@_jit
def _heart_jac(xi, prm, out):
    u = xi[0]
    v = xi[1]
    w = math.sqrt(max(1.0 - v * v, 0.0))
    cu = math.cos(u)
    su = math.sin(u)
    q = v / w
    out[0, 0] = -w * su
    out[1, 0] = w * cu
    out[2, 0] = 0.0
    out[0, 1] = -q * cu + 2.0 * v
    out[1, 1] = -q * su
    out[2, 1] = 1.0


@_jit
def _heart_hess(xi, prm, out):
    u = xi[0]
    v = xi[1]
    w = math.sqrt(max(1.0 - v * v, 0.0))
    cu = math.cos(u)
    su = math.sin(u)
    q = v / w
    w3 = 1.0 / (w * w * w)
    out[0, 0, 0] = -w * cu
    out[0, 0, 1] = q * su
    out[0, 1, 0] = q * su
    out[0, 1, 1] = -cu * w3 + 2.0
    out[1, 0, 0] = -w * su
    out[1, 0, 1] = -q * cu
    out[1, 1, 0] = -q * cu
    out[1, 1, 1] = -su * w3
    out[2, :, :] = 0.0


@_jit
def _torus_map(xi, prm, out):
    R = prm[0]
    a = prm[1]
    rho = a * math.cos(xi[1]) + R
    out[0] = rho * math.cos(xi[0])
    out[1] = rho * math.sin(xi[0])
    out[2] = a * math.sin(xi[1])


@_jit
def _torus_jac(xi, prm, out):
    R = prm[0]
    a = prm[1]
    c1 = math.cos(xi[0])
    s1 = math.sin(xi[0])
    c2 = math.cos(xi[1])
    s2 = math.sin(xi[1])
    rho = a * c2 + R
    out[0, 0] = -rho * s1
    out[1, 0] = rho * c1
    out[2, 0] = 0.0
    out[0, 1] = -a * s2 * c1
    out[1, 1] = -a * s2 * s1
    out[2, 1] = a * c2


@_jit
def _torus_hess(xi, prm, out):
    R = prm[0]
    a = prm[1]
    c1 = math.cos(xi[0])
    s1 = math.sin(xi[0])
    c2 = math.cos(xi[1])
    s2 = math.sin(xi[1])
    rho = a * c2 + R
    out[0, 0, 0] = -rho * c1
    out[0, 0, 1] = a * s2 * s1
    out[0, 1, 0] = a * s2 * s1
    out[0, 1, 1] = -a * c2 * c1
    out[1, 0, 0] = -rho * s1
    out[1, 0, 1] = -a * s2 * c1
    out[1, 1, 0] = -a * s2 * c1
    out[1, 1, 1] = -a * c2 * s1
    out[2, 0, 0] = 0.0
    out[2, 0, 1] = 0.0
    out[2, 1, 0] = 0.0
    out[2, 1, 1] = -a * s2


@_jit
def _roman_map(xi, prm, out):
    A = prm[0] * prm[0]
    ct = math.cos(xi[0])
    st = math.sin(xi[0])
    cp = math.cos(xi[1])
    sp = math.sin(xi[1])
    out[0] = A * ct * st * sp
    out[1] = A * ct * st * cp
    out[2] = A * ct * ct * cp * sp


@_jit
def _roman_jac(xi, prm, out):
    A = prm[0] * prm[0]
    c2t = math.cos(2.0 * xi[0])
    s2t = math.sin(2.0 * xi[0])
    ct = math.cos(xi[0])
    cp = math.cos(xi[1])
    sp = math.sin(xi[1])
    out[0, 0] = A * c2t * sp
    out[0, 1] = 0.5 * A * s2t * cp
    out[1, 0] = A * c2t * cp
    out[1, 1] = -0.5 * A * s2t * sp
    out[2, 0] = -0.5 * A * s2t * math.sin(2.0 * xi[1])
    out[2, 1] = A * ct * ct * math.cos(2.0 * xi[1])


@_jit
def _roman_hess(xi, prm, out):
    A = prm[0] * prm[0]
    c2t = math.cos(2.0 * xi[0])
    s2t = math.sin(2.0 * xi[0])
    cp = math.cos(xi[1])
    sp = math.sin(xi[1])
    c2p = math.cos(2.0 * xi[1])
    s2p = math.sin(2.0 * xi[1])
    out[0, 0, 0] = -2.0 * A * s2t * sp
    out[0, 0, 1] = A * c2t * cp
    out[0, 1, 0] = A * c2t * cp
    out[0, 1, 1] = -0.5 * A * s2t * sp
    out[1, 0, 0] = -2.0 * A * s2t * cp
    out[1, 0, 1] = -A * c2t * sp
    out[1, 1, 0] = -A * c2t * sp
    out[1, 1, 1] = -0.5 * A * s2t * cp
    out[2, 0, 0] = -A * c2t * s2p
    out[2, 0, 1] = -A * s2t * c2p
    out[2, 1, 0] = -A * s2t * c2p
    out[2, 1, 1] = -A * (1.0 + c2t) * s2p


@_jit
def _sine_map(xi, prm, out):
    out[0] = xi[0]
    out[1] = xi[1]
    out[2] = prm[0] * math.sin(xi[0]) * math.sin(xi[1])


@_jit
def _sine_jac(xi, prm, out):
    a = prm[0]
    out[0, 0] = 1.0
    out[0, 1] = 0.0
    out[1, 0] = 0.0
    out[1, 1] = 1.0
    out[2, 0] = a * math.cos(xi[0]) * math.sin(xi[1])
    out[2, 1] = a * math.sin(xi[0]) * math.cos(xi[1])


@_jit
def _sine_hess(xi, prm, out):
    a = prm[0]
    out[:2, :, :] = 0.0
    ss = a * math.sin(xi[0]) * math.sin(xi[1])
    cc = a * math.cos(xi[0]) * math.cos(xi[1])
    out[2, 0, 0] = -ss
    out[2, 0, 1] = cc
    out[2, 1, 0] = cc
    out[2, 1, 1] = -ss


@_jit
def _patch_map(xi, prm, out):
    t = xi[1] * xi[1]
    st = math.sin(t)
    out[0] = math.cos(xi[0]) * st
    out[1] = math.sin(xi[0]) * st
    out[2] = math.cos(t)


@_jit
def _patch_jac(xi, prm, out):
    t = xi[1] * xi[1]
    st = math.sin(t)
    ct = math.cos(t)
    c1 = math.cos(xi[0])
    s1 = math.sin(xi[0])
    g = 2.0 * xi[1]
    out[0, 0] = -s1 * st
    out[1, 0] = c1 * st
    out[2, 0] = 0.0
    out[0, 1] = g * c1 * ct
    out[1, 1] = g * s1 * ct
    out[2, 1] = -g * st


@_jit
def _patch_hess(xi, prm, out):
    t = xi[1] * xi[1]
    st = math.sin(t)
    ct = math.cos(t)
    c1 = math.cos(xi[0])
    s1 = math.sin(xi[0])
    g = 2.0 * xi[1]
    dd = 2.0 * ct - 4.0 * t * st  # second derivative of sin(x^2)
    out[0, 0, 0] = -c1 * st
    out[0, 0, 1] = -s1 * ct * g
    out[0, 1, 0] = -s1 * ct * g
    out[0, 1, 1] = c1 * dd
    out[1, 0, 0] = -s1 * st
    out[1, 0, 1] = c1 * ct * g
    out[1, 1, 0] = c1 * ct * g
    out[1, 1, 1] = s1 * dd
    out[2, 0, 0] = 0.0
    out[2, 0, 1] = 0.0
    out[2, 1, 0] = 0.0
    out[2, 1, 1] = -2.0 * st - 4.0 * t * ct


@_jit
def _sphere_map(xi, prm, out):
    clat = math.cos(xi[1])
    out[0] = clat * math.cos(xi[0])
    out[1] = clat * math.sin(xi[0])
    out[2] = math.sin(xi[1])


@_jit
def _sphere_jac(xi, prm, out):
    cl = math.cos(xi[0])
    sl = math.sin(xi[0])
    ct = math.cos(xi[1])
    st = math.sin(xi[1])
    out[0, 0] = -ct * sl
    out[1, 0] = ct * cl
    out[2, 0] = 0.0
    out[0, 1] = -st * cl
    out[1, 1] = -st * sl
    out[2, 1] = ct


@_jit
def _sphere_hess(xi, prm, out):
    cl = math.cos(xi[0])
    sl = math.sin(xi[0])
    ct = math.cos(xi[1])
    st = math.sin(xi[1])
    out[0, 0, 0] = -ct * cl
    out[0, 0, 1] = st * sl
    out[0, 1, 0] = st * sl
    out[0, 1, 1] = -ct * cl
    out[1, 0, 0] = -ct * sl
    out[1, 0, 1] = -st * cl
    out[1, 1, 0] = -st * cl
    out[1, 1, 1] = -ct * sl
    out[2, 0, 0] = 0.0
    out[2, 0, 1] = 0.0
    out[2, 1, 0] = 0.0
    out[2, 1, 1] = -st


TWO_PI = 2.0 * math.pi


def _gallery_table():
    half_open = [False]
    return {
        "circle": lambda: Surface(
            "circle", ParamDomain([0.0], [TWO_PI], half_open), 2,
            _circle_map, _circle_jac, _circle_hess, area=TWO_PI,
            hessian_sigma_max=1.0, jacobian_sigma_min=1.0),
        "identity_square": lambda: Surface(
            "identity_square", ParamDomain([0.0, 0.0], [1.0, 1.0]), 2,
            _square_map, _square_jac, _zero_hess, area=1.0,
            hessian_sigma_max=0.0, jacobian_sigma_min=1.0),
        "polar_curve": lambda: Surface(
            "polar_curve", ParamDomain([0.0], [TWO_PI], half_open), 2,
            _polar_map, _polar_jac),
        "heart": lambda: Surface(
            "heart", ParamDomain([0.0, -1.0], [TWO_PI, 1.0], [False, False]), 3,
            _heart_map, _heart_jac, _heart_hess),
        "torus": lambda: Surface(
            "torus", ParamDomain([0.0, 0.0], [TWO_PI, TWO_PI]), 3,
            _torus_map, _torus_jac, _torus_hess, params=np.array([2.0, 1.0]),
            area=4.0 * math.pi ** 2 * 2.0, hessian_sigma_max=3.0, jacobian_sigma_min=1.0),
        "roman": lambda: Surface(
            "roman", ParamDomain([-math.pi / 2, 0.0], [math.pi / 2, math.pi]), 3,
            _roman_map, _roman_jac, _roman_hess, params=np.array([1.0])),
        "sine_sheet": lambda: Surface(
            "sine_sheet", ParamDomain([0.0, 0.0], [3 * math.pi, 3 * math.pi]), 3,
            _sine_map, _sine_jac, _sine_hess, params=np.array([3.0])),
        "sphere_patch": lambda: Surface(
            "sphere_patch", ParamDomain([0.0, 0.0], [math.pi, math.sqrt(math.pi / 2)]), 3,
            _patch_map, _patch_jac, _patch_hess, area=math.pi),
        "sphere": lambda: Surface(
            "sphere", ParamDomain([-math.pi, -math.pi / 2], [math.pi, math.pi / 2], [False, True]), 3,
            _sphere_map, _sphere_jac, _sphere_hess, area=4.0 * math.pi,
            hessian_sigma_max=1.0),
    }


GALLERY_NAMES = tuple(_gallery_table())

# Built-in kernels in GALLERY_NAMES order; the switch functions below let the
# generators call them through an integer id, which keeps the compiled
# generators cacheable on disk (function-valued arguments are not).
_BUILTIN_MAPS = (_circle_map, _square_map, _polar_map, _heart_map, _torus_map, _roman_map,
                 _sine_map, _patch_map, _sphere_map)
_BUILTIN_JACS = (_circle_jac, _square_jac, _polar_jac, _heart_jac, _torus_jac, _roman_jac,
                 _sine_jac, _patch_jac, _sphere_jac)


@_jit
def builtin_map(kind, xi, prm, out):
    if kind == 0:
        _circle_map(xi, prm, out)
    elif kind == 1:
        _square_map(xi, prm, out)
    elif kind == 2:
        _polar_map(xi, prm, out)
    elif kind == 3:
        _heart_map(xi, prm, out)
    elif kind == 4:
        _torus_map(xi, prm, out)
    elif kind == 5:
        _roman_map(xi, prm, out)
    elif kind == 6:
        _sine_map(xi, prm, out)
    elif kind == 7:
        _patch_map(xi, prm, out)
    else:
        _sphere_map(xi, prm, out)


@_jit
def builtin_jac(kind, xi, prm, out):
    if kind == 0:
        _circle_jac(xi, prm, out)
    elif kind == 1:
        _square_jac(xi, prm, out)
    elif kind == 2:
        _polar_jac(xi, prm, out)
    elif kind == 3:
        _heart_jac(xi, prm, out)
    elif kind == 4:
        _torus_jac(xi, prm, out)
    elif kind == 5:
        _roman_jac(xi, prm, out)
    elif kind == 6:
        _sine_jac(xi, prm, out)
    elif kind == 7:
        _patch_jac(xi, prm, out)
    else:
        _sphere_jac(xi, prm, out)


def builtin_surface_id(surface: "Surface") -> int:
    """Index of the surface's kernels among the built-ins, or -1."""
    for i, (m, j) in enumerate(zip(_BUILTIN_MAPS, _BUILTIN_JACS)):
        if surface.map_kernel is m and surface.jac_kernel is j:
            return i
    return -1


def gallery(name: str) -> Surface:
    """Built-in test surface by name (see ``GALLERY_NAMES``)."""
    table = _gallery_table()
    if name not in table:
        raise KeyError(f"unknown surface {name!r}; choose from {', '.join(table)}")
    return table[name]()


# ---------------------------------------------------------------- checks

@dataclass
class JacobianCheck:
    samples: int
    max_rel_deviation: float
    worst_param: np.ndarray
    failures: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.failures == 0


def _fd_step(surface: Surface) -> np.ndarray:
    return 1e-6 * surface.domain.extent


def _richardson(f, x, k, step):
    """Central difference along axis ``k`` with one Richardson step (error O(step^4))."""
    e = np.zeros(x.size)
    e[k] = step
    wide = (f(x + e) - f(x - e)) / (2.0 * step)
    narrow = (f(x + e / 2) - f(x - e / 2)) / step
    return (4.0 * narrow - wide) / 3.0


def jacobian_check(surface: Surface, samples: int = 1000, rng_seed: int = 0,
                   tolerance: float = 1e-5) -> JacobianCheck:
    """Compare the analytic Jacobian with central differences at random parameters."""
    if samples < 1:
        raise ValueError("need at least one sample")
    step = _fd_step(surface)
    X = surface.domain.sample(samples, seed=rng_seed, margin=1e-5)
    worst, worst_x, failures = 0.0, X[0], 0
    for x in X:
        J = surface.jacobian(x)
        fd = np.empty_like(J)
        for k in range(surface.param_dim):
            fd[:, k] = _richardson(surface.map, x, k, step[k])
        dev = np.linalg.norm(fd - J) / max(np.linalg.norm(J), 1e-300)
        if not np.isfinite(dev):
            dev = math.inf
        if dev > tolerance:
            failures += 1
        if dev > worst:
            worst, worst_x = dev, x
    return JacobianCheck(samples, worst, worst_x, failures, tolerance)


def hessian_check(surface: Surface, samples: int = 200, rng_seed: int = 0,
                  tolerance: float = 1e-4) -> JacobianCheck:
    """Compare analytic Hessians with central differences of the Jacobian."""
    step = _fd_step(surface)
    X = surface.domain.sample(samples, seed=rng_seed, margin=1e-4)
    k = surface.param_dim
    worst, worst_x, failures = 0.0, X[0], 0
    for x in X:
        H = surface.hessians(x)
        fd = np.empty_like(H)
        for j in range(k):
            fd[:, :, j] = _richardson(surface.jacobian, x, j, step[j])
        scale = max(np.linalg.norm(H), 1.0)
        dev = np.linalg.norm(fd - H) / scale
        if dev > tolerance:
            failures += 1
        if dev > worst:
            worst, worst_x = dev, x
        if not np.allclose(H, np.transpose(H, (0, 2, 1)), atol=1e-12 * scale):
            failures += 1
    return JacobianCheck(samples, worst, worst_x, failures, tolerance)


# ---------------------------------------------------------------- spacing

@_jit
def _constant_h(p, prm):
    return prm[0]


@_jit
def _altitude_h(p, prm):
    # prm: nlat, nlon, lat0, lon0, dlat, dlon, wrap, a_lo, a_hi, h_min, h_max, values...
    nlat = int(prm[0])
    nlon = int(prm[1])
    r = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    lat = math.degrees(math.asin(min(1.0, max(-1.0, p[2] / r))))
    lon = math.degrees(math.atan2(p[1], p[0]))
    fi = (lat - prm[2]) / prm[4]
    fj = (lon - prm[3]) / prm[5]
    fi = min(max(fi, 0.0), nlat - 1.0)
    i0 = min(int(math.floor(fi)), max(nlat - 2, 0))
    ti = fi - i0
    i1 = min(i0 + 1, nlat - 1)
    if prm[6] > 0.5:
        fj = fj - nlon * math.floor(fj / nlon)
        j0 = min(int(math.floor(fj)), nlon - 1)
        tj = fj - j0
        j1 = (j0 + 1) % nlon
    else:
        fj = min(max(fj, 0.0), nlon - 1.0)
        j0 = min(int(math.floor(fj)), max(nlon - 2, 0))
        tj = fj - j0
        j1 = min(j0 + 1, nlon - 1)
    base = 11
    a00 = prm[base + i0 * nlon + j0]
    a01 = prm[base + i0 * nlon + j1]
    a10 = prm[base + i1 * nlon + j0]
    a11 = prm[base + i1 * nlon + j1]
    alt = (1.0 - ti) * ((1.0 - tj) * a00 + tj * a01) + ti * ((1.0 - tj) * a10 + tj * a11)
    a_lo = prm[7]
    a_hi = prm[8]
    h_min = prm[9]
    h_max = prm[10]
    if a_hi > a_lo:
        t = (alt - a_lo) / (a_hi - a_lo)
    else:
        t = 0.5
    t = min(1.0, max(0.0, t))
    return h_min + t * (h_max - h_min)


@_jit
def builtin_h(kind, p, prm):
    if kind == 0:
        return _constant_h(p, prm)
    return _altitude_h(p, prm)


def builtin_spacing_id(spacing: "SpacingField") -> int:
    """0 for constant, 1 for altitude-grid spacing, -1 for anything else."""
    if spacing.kernel is _constant_h:
        return 0
    if spacing.kernel is _altitude_h:
        return 1
    return -1


@dataclass(frozen=True, eq=False)
class SpacingField:
    """Nodal spacing h(p) > 0 over ambient space."""

    kind: str
    kernel: Callable | None = None
    params: np.ndarray = field(default_factory=lambda: np.zeros(1))
    func: Callable | None = None
    h_max: float | None = None

    @property
    def compiled(self) -> bool:
        return self.kernel is not None

    def __call__(self, p) -> float:
        p = np.asarray(p, dtype=float)
        if self.kernel is not None:
            return float(self.kernel(p, self.params))
        return float(self.func(p))

    def eval_many(self, P) -> np.ndarray:
        return np.array([self(p) for p in np.asarray(P, dtype=float)])

    def scaled(self, factor: float) -> "SpacingField":
        """Same field multiplied by ``factor``."""
        if self.kind == "constant":
            return constant_spacing(float(self.params[0]) * factor)
        if self.kind == "grid-interpolated":
            prm = self.params.copy()
            prm[9:11] *= factor
            return SpacingField(self.kind, self.kernel, prm, h_max=prm[10])
        hm = None if self.h_max is None else self.h_max * factor
        return SpacingField("callable", None, func=lambda p: factor * self(p), h_max=hm)

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "h": float(self.params[0])}
        if self.kind == "grid-interpolated":
            return {"kind": self.kind, "h_min": float(self.params[9]), "h_max": float(self.params[10])}
        return {"kind": self.kind}


def constant_spacing(h: float) -> SpacingField:
    h = float(h)
    if not h > 0:
        raise ValueError("spacing must be positive")
    return SpacingField("constant", _constant_h, np.array([h]), h_max=h)


def callable_spacing(func: Callable, h_max: float | None = None) -> SpacingField:
    if is_kernel(func):
        # compiled user spacing with signature h(p, params)
        return SpacingField("callable", func, np.zeros(1), h_max=h_max)
    return SpacingField("callable", None, func=func, h_max=h_max)


def as_spacing(h) -> SpacingField:
    if isinstance(h, SpacingField):
        return h
    if callable(h):
        return callable_spacing(h)
    return constant_spacing(h)


@dataclass(frozen=True, eq=False)
class AltitudeGrid:
    """Regular latitude/longitude grid of altitudes; angles in degrees, row = latitude."""

    lat0: float
    lon0: float
    dlat: float
    dlon: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("altitude grid must be a nonempty 2-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("altitude grid has missing or non-finite samples")
        if not (self.dlat > 0 and self.dlon > 0):
            raise ValueError("grid steps must be positive")
        object.__setattr__(self, "values", v)

    @property
    def nlat(self) -> int:
        return self.values.shape[0]

    @property
    def nlon(self) -> int:
        return self.values.shape[1]

    @property
    def wraps(self) -> bool:
        return abs(self.nlon * self.dlon - 360.0) < 1e-9

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["nlat", "nlon", "lat0", "lon0", "dlat", "dlon"])
            w.writerow([self.nlat, self.nlon, repr(self.lat0), repr(self.lon0),
                        repr(self.dlat), repr(self.dlon)])
            for row in self.values:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "AltitudeGrid":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if not rows:
            raise ValueError(f"{path}: empty altitude file")
        head = rows.pop(0)
        try:
            meta = [float(x) for x in head]
        except ValueError:
            if not rows:
                raise ValueError(f"{path}: missing grid header values")
            meta = [float(x) for x in rows.pop(0)]
        nlat, nlon = int(meta[0]), int(meta[1])
        if len(rows) != nlat or any(len(r) != nlon for r in rows):
            raise ValueError(f"{path}: expected {nlat} rows of {nlon} altitudes")
        return cls(meta[2], meta[3], meta[4], meta[5], np.array(rows, dtype=float))

    @classmethod
    def synthetic(cls, nlat: int = 180, nlon: int = 360, seed: int = 0,
                  low: float = -8000.0, high: float = 6000.0) -> "AltitudeGrid":
        """Smooth pseudo-topography on a global 1-degree style grid.

        A random low-order trigonometric series, rescaled to [low, high]; used
        when real elevation data is not at hand.
        """
        rng = np.random.default_rng(seed)
        lat = np.radians(-90.0 + (np.arange(nlat) + 0.5) * 180.0 / nlat)[:, None]
        lon = np.radians(-180.0 + (np.arange(nlon) + 0.5) * 360.0 / nlon)[None, :]
        z = np.zeros((nlat, nlon))
        for k in range(1, 9):
            for m in range(0, k + 1):
                amp = rng.normal() / k ** 1.5
                ph1, ph2 = rng.uniform(0, TWO_PI, size=2)
                z += amp * np.cos(k * lat + ph1) * np.cos(m * lon + ph2)
        z = (z - z.min()) / (z.max() - z.min())
        return cls(-90.0 + 90.0 / nlat, -180.0 + 180.0 / nlon, 180.0 / nlat, 360.0 / nlon,
                   low + z * (high - low))


def load_altitude_spacing(grid: AltitudeGrid, h_min: float, h_max: float,
                          altitude_range: tuple[float, float] | None = None) -> SpacingField:
    """Spacing field proportional to altitude on a sphere centred at the origin.

    Altitude is bilinearly interpolated at the query point's latitude and
    longitude, then mapped affinely from ``altitude_range`` (default: data
    min/max) onto [h_min, h_max] and clamped.
    """
    if not (h_min > 0 and h_max > 0):
        raise ValueError("spacing bounds must be positive")
    if not h_min < h_max:
        raise ValueError("h_min must be smaller than h_max")
    if grid.values.size == 0:
        raise ValueError("empty altitude grid")
    a_lo, a_hi = altitude_range if altitude_range is not None else \
        (float(grid.values.min()), float(grid.values.max()))
    head = np.array([grid.nlat, grid.nlon, grid.lat0, grid.lon0, grid.dlat, grid.dlon,
                     1.0 if grid.wraps else 0.0, a_lo, a_hi, h_min, h_max])
    return SpacingField("grid-interpolated", _altitude_h,
                        np.concatenate([head, grid.values.ravel()]), h_max=float(h_max))


# Default Earth-demo mapping on the unit sphere; tuned to land near 1e5 nodes.
EARTH_H_MIN = 0.007
EARTH_H_MAX = 0.014
