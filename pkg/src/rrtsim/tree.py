"""RRT, nearest neighbour tree and connection-process growth.

All growth goes through one compiled kernel, :func:`_advance`, which consumes
a block of uniform draws.  The per-step functions (``rrt_step``,
``nnt_step``) feed it a single draw, so step-at-a-time and batched growth
produce identical trees from the same stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numba as nb
import numpy as np

from . import __version__
from .nn_index import NnIndex, grid_insert, grid_nearest
from .space import GENERATOR_NAME, DegenerateDirection, RngStream, as_point, check_dim

RRT, NNT, CONNECTION = "rrt", "nnt", "connection"
KINDS = (RRT, NNT, CONNECTION)

STOP_NONE, STOP_HALF_SPACE, STOP_COVERED = 0, 1, 2
_ERR_DEGENERATE = -1


@dataclass(frozen=True)
class StepOutcome:
    new_vertex: int
    parent: int
    target: np.ndarray
    reached_target: bool


@nb.njit(cache=True)
def _advance(pos, parent, depth, edge, reached, targets, trace, n, height,
             pts, nxt, head, g, draws, steer_eps, stop_kind, stop_axis, stop_thr,
             occ, cpa, occ_count, cover_step):
    """Grow by one vertex per row of ``draws``.

    ``steer_eps <= 0`` means nearest-neighbour attachment (NNT / connection);
    otherwise the RRT two-branch rule is applied.  Returns
    (draws consumed, n, height, stop fired, occupied count, cover step,
    error flag).
    """
    d = draws.shape[1]
    m = draws.shape[0]
    track = occ.shape[0] > 0
    total = occ.shape[0]
    x = np.empty(d, dtype=np.float64)
    for s in range(m):
        y = draws[s]
        j, d2 = grid_nearest(pts, nxt, head, g, y)
        dist = math.sqrt(d2)
        if steer_eps <= 0.0 or dist <= steer_eps:
            for k in range(d):
                x[k] = y[k]
            hit = True
            elen = dist
        else:
            if dist == 0.0:
                return s, n, height, False, occ_count, cover_step, _ERR_DEGENERATE
            for k in range(d):
                x[k] = pts[j, k] + steer_eps * ((y[k] - pts[j, k]) / dist)
            hit = False
            # recompute from stored coordinates so edge == distance(x, parent)
            e2 = 0.0
            for k in range(d):
                t = x[k] - pts[j, k]
                e2 += t * t
            elen = math.sqrt(e2)
        for k in range(d):
            pos[n, k] = x[k]
        if trace:
            for k in range(d):
                targets[n, k] = y[k]
        parent[n] = j
        depth[n] = depth[j] + 1
        edge[n] = elen
        reached[n] = hit
        if depth[n] > height:
            height = depth[n]
        grid_insert(pts, nxt, head, n, g, x)
        n += 1
        if track:
            c = 0
            for k in range(d - 1, -1, -1):
                cc = int(x[k] * cpa)
                if cc >= cpa:
                    cc = cpa - 1
                c = c * cpa + cc
            if occ[c] == 0:
                occ[c] = 1
                occ_count += 1
                if occ_count == total and cover_step < 0:
                    cover_step = n - 1
        if stop_kind == STOP_HALF_SPACE:
            if x[stop_axis] >= stop_thr:
                return s + 1, n, height, True, occ_count, cover_step, 0
        elif stop_kind == STOP_COVERED:
            if track and occ_count == total:
                return s + 1, n, height, True, occ_count, cover_step, 0
    return m, n, height, False, occ_count, cover_step, 0


@dataclass
class Tree:
    """Append-only growth history.  Node ``i`` was inserted at step ``i``."""

    d: int
    kind: str
    epsilon: float | None
    pos: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    edge: np.ndarray
    reached: np.ndarray
    targets: np.ndarray | None = None
    n: int = 1
    height: int = 0
    base_size: int | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def new(cls, kind: str, root, epsilon: float | None = None,
            trace: bool = False, capacity: int = 1024) -> "Tree":
        if kind not in KINDS:
            raise ValueError(f"unknown tree kind {kind!r}")
        root = as_point(root)
        if kind == RRT:
            if epsilon is None or not epsilon > 0:
                raise ValueError("an RRT needs epsilon > 0")
            epsilon = float(epsilon)
        else:
            epsilon = None
        d = root.size
        cap = max(int(capacity), 16)
        t = cls(
            d=d, kind=kind, epsilon=epsilon,
            pos=np.empty((cap, d)), parent=np.empty(cap, dtype=np.int64),
            depth=np.empty(cap, dtype=np.int64), edge=np.empty(cap),
            reached=np.empty(cap, dtype=np.bool_),
            targets=np.full((cap, d), np.nan) if trace else None,
        )
        t.pos[0] = root
        t.parent[0] = -1
        t.depth[0] = 0
        t.edge[0] = 0.0
        t.reached[0] = True
        return t

    def __len__(self):
        return self.n

    @property
    def trace(self) -> bool:
        return self.targets is not None

    @property
    def positions(self) -> np.ndarray:
        return self.pos[: self.n]

    @property
    def parents(self) -> np.ndarray:
        return self.parent[: self.n]

    @property
    def depths(self) -> np.ndarray:
        return self.depth[: self.n]

    @property
    def edges(self) -> np.ndarray:
        return self.edge[: self.n]

    @property
    def origin(self) -> np.ndarray:
        """``True`` for nodes copied from a base tree, ``False`` for grown ones."""
        out = np.zeros(self.n, dtype=bool)
        if self.base_size is not None:
            out[: self.base_size + 1] = True
        return out

    def reserve(self, extra: int) -> None:
        need = self.n + int(extra)
        cap = self.pos.shape[0]
        if need <= cap:
            return
        while cap < need:
            cap *= 2

        def grow(a, fill=None):
            b = np.empty((cap,) + a.shape[1:], dtype=a.dtype) if fill is None \
                else np.full((cap,) + a.shape[1:], fill, dtype=a.dtype)
            b[: self.n] = a[: self.n]
            return b

        self.pos = grow(self.pos)
        self.parent = grow(self.parent)
        self.depth = grow(self.depth)
        self.edge = grow(self.edge)
        self.reached = grow(self.reached)
        if self.targets is not None:
            self.targets = grow(self.targets, np.nan)

    def header(self) -> dict:
        h = {"kind": self.kind, "d": self.d, "epsilon": self.epsilon,
             "generator_name": GENERATOR_NAME, "version": __version__}
        h.update({k: self.meta[k] for k in ("seed", "stream") if k in self.meta})
        h.setdefault("seed", None)
        h.setdefault("stream", None)
        if self.base_size is not None:
            h["base_size"] = self.base_size
        return h


def index_for(tree: Tree) -> NnIndex:
    """A fresh index holding every vertex of ``tree`` in insertion order."""
    idx = NnIndex(tree.d, capacity=max(tree.n, 1024))
    for i in range(tree.n):
        idx.insert(tree.pos[i])
    return idx


_NO_OCC = np.zeros(0, dtype=np.uint8)


def grow(tree: Tree, idx: NnIndex, rng: RngStream, max_steps: int,
         stop: int = STOP_NONE, axis: int = 0, threshold: float = 0.5,
         cover=None, batch: int = 4096) -> tuple[int, bool]:
    """Grow ``tree`` by up to ``max_steps`` vertices using the compiled kernel.

    ``stop`` selects a built-in stop rule (half-space entry of the newest
    vertex, or full occupancy of ``cover``).  Unused draws are returned to
    ``rng``.  Returns ``(steps taken, stop fired)``.
    """
    if idx.n != tree.n:
        raise ValueError("index and tree are out of sync")
    if stop == STOP_COVERED and cover is None:
        raise ValueError("STOP_COVERED needs a cover state")
    steer_eps = tree.epsilon if tree.kind == RRT else -1.0
    d = tree.d
    targets = tree.targets if tree.targets is not None else np.empty((0, d))
    if cover is not None:
        occ, cpa = cover.occ, cover.cells_per_axis
        occ_count = cover.occupied_count
        cover_step = -1 if cover.cover_step is None else cover.cover_step
    else:
        occ, cpa, occ_count, cover_step = _NO_OCC, 1, 0, -1
    if stop == STOP_COVERED and occ_count == occ.size:
        return 0, True
    taken = 0
    fired = False
    while taken < max_steps and not fired:
        k = min(batch, max_steps - taken, idx.next_rebuild - idx.n)
        k = max(k, 1)
        tree.reserve(k)
        idx.reserve(k)
        if tree.targets is not None:
            targets = tree.targets
        draws = rng.points(k, d)
        used, n, h, fired, occ_count, cover_step, err = _advance(
            tree.pos, tree.parent, tree.depth, tree.edge, tree.reached, targets,
            tree.targets is not None, tree.n, tree.height,
            idx.pts, idx.nxt, idx.head, idx.g, draws, steer_eps,
            stop, axis, threshold, occ, cpa, occ_count, cover_step)
        tree.n, tree.height = n, h
        idx.n = n
        taken += used
        if used < k:
            rng.push_back(draws[used:])
        if cover is not None:
            cover.occupied_count = occ_count
            cover.cover_step = None if cover_step < 0 else cover_step
        if err == _ERR_DEGENERATE:
            raise DegenerateDirection(f"draw {draws[used]!r} coincides with a vertex")
        idx.maybe_rebuild()
    return taken, fired


def _one(tree: Tree, idx: NnIndex, rng: RngStream) -> StepOutcome:
    y = rng.uniform(tree.d)
    rng.push_back(y)
    grow(tree, idx, rng, 1)
    i = tree.n - 1
    return StepOutcome(new_vertex=i, parent=int(tree.parent[i]), target=y,
                       reached_target=bool(tree.reached[i]))


def rrt_step(tree: Tree, idx: NnIndex, rng: RngStream) -> StepOutcome:
    if tree.kind != RRT:
        raise ValueError("rrt_step on a non-RRT tree")
    return _one(tree, idx, rng)


def nnt_step(tree: Tree, idx: NnIndex, rng: RngStream) -> StepOutcome:
    if tree.kind == RRT:
        raise ValueError("nnt_step on an RRT")
    return _one(tree, idx, rng)


def grow_until(tree: Tree, idx: NnIndex, rng: RngStream,
               stop: Callable[[Tree, StepOutcome], bool], max_steps: int):
    """Step until ``stop(tree, outcome)`` is true or ``max_steps`` is reached.

    Returns ``(tree, steps taken, stopped)``.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    step = rrt_step if tree.kind == RRT else nnt_step
    for s in range(1, max_steps + 1):
        out = step(tree, idx, rng)
        if stop(tree, out):
            return tree, s, True
    return tree, max_steps, False


def grow_connection(base: Tree, n_extra: int, rng: RngStream,
                    trace: bool = False) -> Tree:
    """Grow ``n_extra`` nearest-neighbour vertices onto a copy of ``base``.

    Node ``S + n`` of the result (``S = base.n - 1``) is the ``n``-th draw of
    ``rng``, attached to its nearest vertex among all earlier nodes.
    """
    t = Tree.new(CONNECTION, base.pos[0], trace=trace, capacity=base.n + n_extra + 1)
    m = base.n
    t.pos[:m] = base.pos[:m]
    t.parent[:m] = base.parent[:m]
    t.depth[:m] = base.depth[:m]
    t.edge[:m] = base.edge[:m]
    t.reached[:m] = base.reached[:m]
    if trace and base.targets is not None:
        t.targets[:m] = base.targets[:m]
    t.n = m
    t.height = int(base.depths.max())
    t.base_size = m - 1
    t.meta = dict(base.meta)
    idx = index_for(t)
    grow(t, idx, rng, n_extra)
    return t


def truncate(t: Tree, n: int) -> Tree:
    """First ``n`` nodes of ``t`` as a new tree."""
    out = Tree.new(t.kind, t.pos[0], t.epsilon, trace=t.targets is not None, capacity=n)
    out.pos[:n] = t.pos[:n]
    out.parent[:n] = t.parent[:n]
    out.depth[:n] = t.depth[:n]
    out.edge[:n] = t.edge[:n]
    out.reached[:n] = t.reached[:n]
    if t.targets is not None:
        out.targets[:n] = t.targets[:n]
    out.n = n
    out.height = int(out.depths.max())
    out.meta = dict(t.meta)
    return out


def height(tree: Tree) -> int:
    return int(tree.depths.max())


def depth(tree: Tree, i: int) -> int:
    """Depth of node ``i`` walked up its parent chain."""
    _check_index(tree, i)
    k = 0
    while tree.parent[i] >= 0:
        i = tree.parent[i]
        k += 1
    return k


def root_path_length(tree: Tree, i: int) -> float:
    _check_index(tree, i)
    s = 0.0
    while tree.parent[i] >= 0:
        s += tree.edge[i]
        i = tree.parent[i]
    return s


def root_path_lengths(tree: Tree) -> np.ndarray:
    """Root path length of every node (parents precede children)."""
    return _root_paths(tree.parents, tree.edges)


@nb.njit(cache=True)
def _root_paths(parent, edge):
    out = np.zeros(parent.shape[0])
    for i in range(1, parent.shape[0]):
        out[i] = out[parent[i]] + edge[i]
    return out


def _check_index(tree: Tree, i: int) -> None:
    if not 0 <= i < tree.n:
        raise IndexError(f"vertex {i} out of range for a tree of {tree.n} nodes")


# -- serialization ---------------------------------------------------------

def dumps(tree: Tree) -> str:
    """Header line of JSON, then ``step,parent,depth,edge_length,x0,...`` per node.

    Floats use ``repr`` (shortest round-trip), so a load/dump cycle is exact.
    """
    lines = [json.dumps(tree.header(), sort_keys=True)]
    for i in range(tree.n):
        row = [str(i), str(int(tree.parent[i])), str(int(tree.depth[i])), repr(float(tree.edge[i]))]
        row += [repr(float(c)) for c in tree.pos[i]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def loads(text: str) -> Tree:
    lines = text.splitlines()
    h = json.loads(lines[0])
    rows = [ln.split(",") for ln in lines[1:] if ln]
    d = int(h["d"])
    n = len(rows)
    if n == 0:
        raise ValueError("tree dump has no nodes")
    t = Tree.new(h["kind"], [float(c) for c in rows[0][4:]], epsilon=h.get("epsilon"),
                 capacity=n)
    for i, r in enumerate(rows):
        if int(r[0]) != i or len(r) != 4 + d:
            raise ValueError(f"malformed tree record on line {i + 2}")
        t.parent[i] = int(r[1])
        t.depth[i] = int(r[2])
        t.edge[i] = float(r[3])
        t.pos[i] = [float(c) for c in r[4:]]
        t.reached[i] = True
    t.n = n
    t.height = int(t.depths.max())
    t.base_size = h.get("base_size")
    t.meta = {k: h[k] for k in ("seed", "stream") if h.get(k) is not None}
    return t


# -- coupling of a connection process with a bare NNT --------------------------

def coupled_pair(base: Tree, n_extra: int, seed: int, stream: int = 0) -> tuple[Tree, Tree]:
    """Connection process onto ``base`` and an NNT rooted at ``base``'s root.

    Both consume the identical draw sequence, so node ``S + n`` of the first
    and node ``n`` of the second sit at the same point.
    """
    conn = grow_connection(base, n_extra, RngStream(seed, stream))
    bare = Tree.new(NNT, base.pos[0], capacity=n_extra + 1)
    grow(bare, index_for(bare), RngStream(seed, stream), n_extra)
    return conn, bare


def coupling_violations(conn: Tree, bare: Tree) -> tuple[int, int]:
    """Counts of ``n`` with ``delta'_n > delta_n`` and with ``D'_{S+n} > D_n + H + 1``."""
    s = conn.base_size
    n = bare.n - 1
    h = int(conn.depth[: s + 1].max())
    d_conn = conn.edge[s + 1: s + 1 + n]
    d_bare = bare.edge[1: 1 + n]
    dep_conn = conn.depth[s + 1: s + 1 + n]
    dep_bare = bare.depth[1: 1 + n]
    return (int(np.count_nonzero(d_conn > d_bare)),
            int(np.count_nonzero(dep_conn > dep_bare + h + 1)))
