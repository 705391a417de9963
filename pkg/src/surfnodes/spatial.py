"""Incremental nearest-neighbour indices over ambient points.

The k-d tree keeps its nodes in flat arrays indexed by insertion id, so the
same compiled routines serve the Python wrapper and the generator kernels.
Splits cycle through the axes and inserted points become leaves.  Points
arriving in sorted order (an advancing front along a curve does exactly that)
would degrade a plain leaf-insertion tree into a list, so subtrees are rebuilt
scapegoat-style whenever an insert lands too deep.
"""
from __future__ import annotations

import math
from collections import defaultdict
from itertools import product

import numpy as np
from numba import njit

# meta layout: [root, size]; node table columns: left, right, split axis, subtree size
ROOT = 0
SIZE = 1
LEFT, RIGHT, AXIS, COUNT = 0, 1, 2, 3
# scapegoat weight balance: a subtree is rebuilt once an insert lands deeper
# than log_{1/ALPHA}(n) + 1
ALPHA = 0.75
_LOG_INV_ALPHA = math.log(1.0 / ALPHA)


@njit(cache=True)
def kd_insert(pts, nodes, meta, p, path):
    """Store ``p`` at id ``meta[SIZE]``; caller guarantees capacity and ``len(path) > size``."""
    d = pts.shape[1]
    idx = meta[SIZE]
    for k in range(d):
        pts[idx, k] = p[k]
    nodes[idx, LEFT] = -1
    nodes[idx, RIGHT] = -1
    nodes[idx, COUNT] = 1
    meta[SIZE] = idx + 1
    node = meta[ROOT]
    if node < 0:
        meta[ROOT] = idx
        nodes[idx, AXIS] = 0
        return idx
    depth = 0
    while True:
        path[depth] = node
        depth += 1
        nodes[node, COUNT] += 1
        ax = nodes[node, AXIS]
        side = LEFT if p[ax] < pts[node, ax] else RIGHT
        nxt = nodes[node, side]
        if nxt < 0:
            nodes[node, side] = idx
            break
        node = nxt
    nodes[idx, AXIS] = (nodes[node, AXIS] + 1) % d
    limit = math.log(idx + 1) / _LOG_INV_ALPHA + 1.0
    if depth > limit:
        # walk up to the first ancestor whose child on the path is too heavy
        child = idx
        for t in range(depth - 1, -1, -1):
            anc = path[t]
            if nodes[child, COUNT] > ALPHA * nodes[anc, COUNT]:
                parent = path[t - 1] if t > 0 else -1
                kd_rebuild_subtree(pts, nodes, meta, anc, parent)
                break
            child = anc
    return idx


@njit(cache=True)
def kd_nearest(pts, nodes, meta, q, stack_n, stack_b):
    """Return (id, squared distance) of the closest stored point; ties go to the lowest id."""
    best = np.inf
    bid = -1
    root = meta[ROOT]
    if root < 0:
        return bid, best
    d = pts.shape[1]
    stack_n[0] = root
    stack_b[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        node = stack_n[top]
        bound = stack_b[top]
        if bound > best:
            continue
        d2 = 0.0
        for k in range(d):
            t = q[k] - pts[node, k]
            d2 += t * t
        if d2 < best or (d2 == best and node < bid):
            best = d2
            bid = node
        ax = nodes[node, AXIS]
        diff = q[ax] - pts[node, ax]
        if diff < 0.0:
            near = nodes[node, LEFT]
            far = nodes[node, RIGHT]
        else:
            near = nodes[node, RIGHT]
            far = nodes[node, LEFT]
        if far >= 0:
            fb = diff * diff
            stack_n[top] = far
            stack_b[top] = fb if fb > bound else bound
            top += 1
        if near >= 0:
            stack_n[top] = near
            stack_b[top] = bound
            top += 1
    return bid, best


@njit(cache=True)
def _median_build(pts, nodes, meta, order, start_axis, parent, parent_side):
    """Median-split the ids in ``order`` into a subtree hung below ``parent``."""
    n = order.shape[0]
    d = pts.shape[1]
    # work items: lo, hi, axis, parent, side (-1 marks the subtree root)
    work = np.empty((n + 1, 5), dtype=np.int64)
    work[0, 0] = 0
    work[0, 1] = n
    work[0, 2] = start_axis
    work[0, 3] = parent
    work[0, 4] = -1
    top = 1
    while top > 0:
        top -= 1
        lo = work[top, 0]
        hi = work[top, 1]
        ax = work[top, 2]
        par = work[top, 3]
        side = work[top, 4]
        seg = order[lo:hi].copy()
        keys = np.empty(hi - lo)
        for k in range(hi - lo):
            keys[k] = pts[seg[k], ax]
        srt = np.argsort(keys, kind="mergesort")
        for k in range(hi - lo):
            order[lo + k] = seg[srt[k]]
        mid = lo + (hi - lo) // 2
        # keep keys equal to the split out of the left subtree: insert/search send ties right
        while mid > lo and pts[order[mid - 1], ax] == pts[order[mid], ax]:
            mid -= 1
        node = order[mid]
        nodes[node, AXIS] = ax
        nodes[node, LEFT] = -1
        nodes[node, RIGHT] = -1
        nodes[node, COUNT] = hi - lo
        if side < 0:
            if par < 0:
                meta[ROOT] = node
            else:
                nodes[par, parent_side] = node
        else:
            nodes[par, side] = node
        nxt = (ax + 1) % d
        if mid > lo:
            work[top, 0] = lo
            work[top, 1] = mid
            work[top, 2] = nxt
            work[top, 3] = node
            work[top, 4] = LEFT
            top += 1
        if hi > mid + 1:
            work[top, 0] = mid + 1
            work[top, 1] = hi
            work[top, 2] = nxt
            work[top, 3] = node
            work[top, 4] = RIGHT
            top += 1


@njit(cache=True)
def kd_rebuild_subtree(pts, nodes, meta, sub, parent):
    side = LEFT
    if parent >= 0 and nodes[parent, RIGHT] == sub:
        side = RIGHT
    order = np.empty(nodes[sub, COUNT], dtype=np.int64)
    stack = np.empty(nodes[sub, COUNT] + 1, dtype=np.int64)
    stack[0] = sub
    top = 1
    n = 0
    while top > 0:
        top -= 1
        node = stack[top]
        order[n] = node
        n += 1
        for c in (nodes[node, LEFT], nodes[node, RIGHT]):
            if c >= 0:
                stack[top] = c
                top += 1
    order.sort()
    _median_build(pts, nodes, meta, order, nodes[sub, AXIS], parent, side)


@njit(cache=True)
def kd_rebuild(pts, nodes, meta):
    """Median rebuild of all stored points (ids unchanged)."""
    n = meta[SIZE]
    if n == 0:
        meta[ROOT] = -1
        return
    _median_build(pts, nodes, meta, np.arange(n), 0, -1, LEFT)


class KDTreeIndex:
    """Growable k-d tree with exact nearest-point queries.

    ``rebuild_every`` (insert count, default off) additionally forces a full
    median rebuild at a fixed interval.
    """

    kind = "kdtree"

    def __init__(self, dim: int, capacity: int = 1024, rebuild_every: int | None = None):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = dim
        self.rebuild_every = rebuild_every
        cap = max(int(capacity), 16)
        self._pts = np.empty((cap, dim))
        self._nodes = np.empty((cap, 4), dtype=np.int64)
        self._stack_n = np.empty(cap + 1, dtype=np.int64)
        self._stack_b = np.empty(cap + 1)
        self._meta = np.array([-1, 0], dtype=np.int64)

    @classmethod
    def build(cls, points, rebuild_every: int | None = None, dim: int | None = None):
        pts = _as_points(points, dim)
        tree = cls(pts.shape[1], capacity=2 * len(pts), rebuild_every=rebuild_every)
        n = len(pts)
        tree._pts[:n] = pts
        tree._meta[SIZE] = n
        kd_rebuild(tree._pts, tree._nodes, tree._meta)
        return tree

    def __len__(self) -> int:
        return int(self._meta[SIZE])

    @property
    def points(self) -> np.ndarray:
        return self._pts[: len(self)]

    def _grow(self):
        cap = 2 * self._pts.shape[0]
        n = len(self)
        pts = np.empty((cap, self.dim))
        pts[:n] = self._pts[:n]
        self._pts = pts
        nodes = np.empty((cap, 4), dtype=np.int64)
        nodes[:n] = self._nodes[:n]
        self._nodes = nodes
        self._stack_n = np.empty(cap + 1, dtype=np.int64)
        self._stack_b = np.empty(cap + 1)

    def insert(self, point) -> int:
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dim,):
            raise ValueError(f"expected point of dimension {self.dim}, got shape {p.shape}")
        if len(self) == self._pts.shape[0]:
            self._grow()
        idx = kd_insert(self._pts, self._nodes, self._meta, p, self._stack_n)
        if self.rebuild_every and (idx + 1) % self.rebuild_every == 0:
            kd_rebuild(self._pts, self._nodes, self._meta)
        return int(idx)

    def nearest_id(self, query) -> tuple[int, float]:
        """(id, squared distance) of the nearest stored point."""
        if len(self) == 0:
            raise LookupError("empty index")
        q = np.asarray(query, dtype=float)
        if q.shape != (self.dim,):
            raise ValueError(f"expected query of dimension {self.dim}, got shape {q.shape}")
        i, d2 = kd_nearest(self._pts, self._nodes, self._meta, q, self._stack_n, self._stack_b)
        return int(i), float(d2)

    def nearest(self, query) -> tuple[np.ndarray, float]:
        i, d2 = self.nearest_id(query)
        return self._pts[i].copy(), math.sqrt(d2)


class GridIndex:
    """Background grid with cell size ``h/sqrt(d)`` for constant spacing.

    Only neighbours within ``radius`` (default ``2h``) are found; farther
    queries return id -1 and an infinite distance.
    """

    kind = "grid"

    def __init__(self, h: float, dim: int, radius: float | None = None):
        if not h > 0:
            raise ValueError("grid spacing must be positive")
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.h = float(h)
        self.dim = dim
        self.cell = self.h / math.sqrt(dim)
        self.radius = 2.0 * self.h if radius is None else float(radius)
        self._reach = math.ceil(self.radius / self.cell)
        self._offsets = list(product(range(-self._reach, self._reach + 1), repeat=dim))
        self._cells = defaultdict(list)
        self._pts = []

    def __len__(self) -> int:
        return len(self._pts)

    @property
    def points(self) -> np.ndarray:
        return np.array(self._pts).reshape(-1, self.dim)

    def _key(self, p):
        return tuple(math.floor(x / self.cell) for x in p)

    def insert(self, point) -> int:
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dim,):
            raise ValueError(f"expected point of dimension {self.dim}, got shape {p.shape}")
        idx = len(self._pts)
        self._pts.append(p.copy())
        self._cells[self._key(p)].append(idx)
        return idx

    def nearest_id(self, query) -> tuple[int, float]:
        if not self._pts:
            raise LookupError("empty index")
        q = np.asarray(query, dtype=float)
        if q.shape != (self.dim,):
            raise ValueError(f"expected query of dimension {self.dim}, got shape {q.shape}")
        base = self._key(q)
        best, bid = math.inf, -1
        r2 = self.radius * self.radius
        for off in self._offsets:
            ids = self._cells.get(tuple(b + o for b, o in zip(base, off)))
            if not ids:
                continue
            for i in ids:
                d2 = 0.0
                p = self._pts[i]
                for k in range(self.dim):
                    t = q[k] - p[k]
                    d2 += t * t
                if d2 <= r2 and (d2 < best or (d2 == best and i < bid)):
                    best, bid = d2, i
        return bid, best

    def nearest(self, query) -> tuple[np.ndarray | None, float]:
        i, d2 = self.nearest_id(query)
        if i < 0:
            return None, math.inf
        return self._pts[i].copy(), math.sqrt(d2)


def _as_points(points, dim=None) -> np.ndarray:
    if len(points) == 0:
        if dim is None:
            raise ValueError("cannot infer dimension of an empty point list; pass dim")
        return np.empty((0, dim))
    rows = [np.asarray(p, dtype=float).ravel() for p in points]
    dims = {r.size for r in rows}
    if len(dims) != 1:
        raise ValueError(f"mixed point dimensions: {sorted(dims)}")
    pts = np.vstack(rows)
    if dim is not None and pts.shape[1] != dim:
        raise ValueError(f"expected dimension {dim}, got {pts.shape[1]}")
    return pts


def build(points, dim: int | None = None, rebuild_every: int | None = None) -> KDTreeIndex:
    return KDTreeIndex.build(points, rebuild_every=rebuild_every, dim=dim)


def grid_index_variant(h: float, d: int) -> GridIndex:
    return GridIndex(h, d)
