"""Exact incremental nearest-neighbour search over a growing point set.

Points live in uniform grid buckets (singly linked lists per cell) and a
query expands Chebyshev rings of cells around the query cell until no
unvisited cell can hold a closer point.  The grid is rebuilt whenever the
point count doubles so that cells hold O(1) points on average.  For d > 3
the grid degenerates to one cell, i.e. a linear scan.

Ties are broken by the smallest insertion index.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .space import as_point

GRID_MAX_DIM = 3
_FIRST_REBUILD = 64
# Absolute slack on the ring lower bound; covers floor() rounding at cell edges.
_RING_SLACK = 1e-12


@nb.njit(cache=True)
def _sqdist(pts, i, q):
    s = 0.0
    for k in range(q.shape[0]):
        t = q[k] - pts[i, k]
        s += t * t
    return s


@nb.njit(cache=True)
def _cell_coord(x, g):
    c = int(x * g)
    if c >= g:
        c = g - 1
    if c < 0:
        c = 0
    return c


@nb.njit(cache=True)
def _cell_index(p, g):
    idx = 0
    for k in range(p.shape[0]):
        idx = idx * g + _cell_coord(p[k], g)
    return idx


@nb.njit(cache=True)
def grid_insert(pts, nxt, head, n, g, p):
    """Append ``p`` as point ``n``; caller guarantees capacity."""
    for k in range(p.shape[0]):
        pts[n, k] = p[k]
    c = _cell_index(p, g)
    nxt[n] = head[c]
    head[c] = n
    return n


@nb.njit(cache=True)
def grid_rebuild(pts, nxt, n, d, g):
    head = np.full(g**d, -1, dtype=np.int64)
    for i in range(n):
        c = _cell_index(pts[i], g)
        nxt[i] = head[c]
        head[c] = i
    return head


@nb.njit(cache=True)
def _scan_cell(pts, nxt, head, c, q, best, best_d2):
    j = head[c]
    while j >= 0:
        s = _sqdist(pts, j, q)
        if s < best_d2 or (s == best_d2 and j < best):
            best = j
            best_d2 = s
        j = nxt[j]
    return best, best_d2


@nb.njit(cache=True)
def grid_nearest(pts, nxt, head, g, q):
    """Return (index, squared distance) of the nearest stored point to ``q``."""
    d = q.shape[0]
    qc = np.empty(d, dtype=np.int64)
    rmax = 0
    for k in range(d):
        qc[k] = _cell_coord(q[k], g)
        rmax = max(rmax, qc[k], g - 1 - qc[k])
    best = -1
    best_d2 = np.inf
    off = np.empty(d, dtype=np.int64)
    lo = np.empty(d, dtype=np.int64)
    hi = np.empty(d, dtype=np.int64)
    for r in range(rmax + 1):
        if r > 0 and best >= 0:
            lb = (r - 1) / g - _RING_SLACK
            if lb > 0.0 and best_d2 < lb * lb:
                break
        # Enumerate the ring surface: an odometer over the first d-1 axes;
        # the last axis is walked fully only when an earlier axis sits on
        # the ring boundary, otherwise just its two extreme offsets.
        for k in range(d):
            lo[k] = max(-r, -qc[k])
            hi[k] = min(r, g - 1 - qc[k])
            off[k] = lo[k]
        last = d - 1
        while True:
            on_face = False
            for k in range(last):
                if off[k] == r or off[k] == -r:
                    on_face = True
            base = 0
            for k in range(last):
                base = base * g + (qc[k] + off[k])
            if on_face:
                for t in range(lo[last], hi[last] + 1):
                    c = base * g + qc[last] + t
                    best, best_d2 = _scan_cell(pts, nxt, head, c, q, best, best_d2)
            else:
                if r == 0:
                    best, best_d2 = _scan_cell(pts, nxt, head, base * g + qc[last], q, best, best_d2)
                else:
                    if -r >= lo[last]:
                        best, best_d2 = _scan_cell(pts, nxt, head, base * g + qc[last] - r, q, best, best_d2)
                    if r <= hi[last]:
                        best, best_d2 = _scan_cell(pts, nxt, head, base * g + qc[last] + r, q, best, best_d2)
            k = last - 1
            while k >= 0:
                off[k] += 1
                if off[k] <= hi[k]:
                    break
                off[k] = lo[k]
                k -= 1
            if k < 0:
                break
    return best, best_d2


def grid_side_for(n: int, d: int) -> int:
    """Cells per axis targeting about two points per cell."""
    if d > GRID_MAX_DIM or n < _FIRST_REBUILD:
        return 1
    return max(1, int((n / 2.0) ** (1.0 / d)))


class NnIndex:
    """Append-only exact nearest-neighbour index.

    ``next_rebuild`` is the point count at which the bucket grid is resized;
    batch kernels stop short of it so the grid can be rebuilt between
    batches.
    """

    def __init__(self, d: int, capacity: int = 1024):
        self.d = int(d)
        capacity = max(int(capacity), 16)
        self.pts = np.empty((capacity, self.d), dtype=np.float64)
        self.nxt = np.empty(capacity, dtype=np.int64)
        self.g = 1
        self.head = np.full(1, -1, dtype=np.int64)
        self.n = 0
        self.next_rebuild = _FIRST_REBUILD

    def __len__(self):
        return self.n

    @property
    def points(self) -> np.ndarray:
        return self.pts[: self.n]

    def reserve(self, extra: int) -> None:
        need = self.n + int(extra)
        cap = self.pts.shape[0]
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        pts = np.empty((cap, self.d), dtype=np.float64)
        pts[: self.n] = self.pts[: self.n]
        nxt = np.empty(cap, dtype=np.int64)
        nxt[: self.n] = self.nxt[: self.n]
        self.pts, self.nxt = pts, nxt

    def maybe_rebuild(self) -> None:
        if self.n < self.next_rebuild:
            return
        self.next_rebuild = 2 * self.n
        g = grid_side_for(self.n, self.d)
        if g != self.g:
            self.g = g
            self.head = grid_rebuild(self.pts, self.nxt, self.n, self.d, g)

    def insert(self, p) -> int:
        p = as_point(p, self.d)
        self.reserve(1)
        i = grid_insert(self.pts, self.nxt, self.head, self.n, self.g, p)
        self.n += 1
        self.maybe_rebuild()
        return int(i)

    def nearest(self, q) -> tuple[int, float]:
        if self.n == 0:
            raise LookupError("nearest() on an empty index")
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.size != self.d:
            raise ValueError(f"expected dimension {self.d}, got {q.size}")
        j, d2 = grid_nearest(self.pts, self.nxt, self.head, self.g, q)
        return int(j), math.sqrt(d2)


def nearest_bruteforce(points, q) -> tuple[int, float]:
    """Linear-scan reference for :meth:`NnIndex.nearest` (same tie rule)."""
    q = [float(x) for x in np.asarray(q, dtype=np.float64).reshape(-1)]
    best, best_d2 = -1, math.inf
    for j, p in enumerate(np.asarray(points, dtype=np.float64).reshape(-1, len(q)).tolist()):
        s = 0.0
        for a, b in zip(q, p):
            t = a - b
            s += t * t
        if s < best_d2:
            best, best_d2 = j, s
    if best < 0:
        raise LookupError("nearest_bruteforce() on an empty point set")
    return best, math.sqrt(best_d2)
