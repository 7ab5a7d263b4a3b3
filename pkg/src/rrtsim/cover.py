"""Grid certificates for epsilon-covers, covering-time constants and the coupon collector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.spatial import cKDTree

from .space import RngStream, check_dim

MAX_CELLS = 2**31


class GridTooLarge(ValueError):
    pass


def cells_per_axis(d: int, epsilon: float) -> int:
    # side <= epsilon / sqrt(d) keeps every cell diagonal <= epsilon
    return max(1, math.ceil(math.sqrt(d) / epsilon))


def check_grid(d: int, epsilon: float) -> int:
    """Total cell count, or :class:`GridTooLarge` above the memory guard."""
    check_dim(d)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    g = cells_per_axis(d, epsilon)
    total = g**d
    if total > MAX_CELLS:
        raise GridTooLarge(
            f"cover grid for d={d}, epsilon={epsilon} needs {g}^{d} = {total} cells (> 2^31)")
    return total


@dataclass
class CoverState:
    d: int
    epsilon: float
    cells_per_axis: int = field(init=False)
    occ: np.ndarray = field(init=False, repr=False)
    occupied_count: int = 0
    cover_step: int | None = None

    def __post_init__(self):
        total = check_grid(self.d, self.epsilon)
        self.cells_per_axis = cells_per_axis(self.d, self.epsilon)
        self.occ = np.zeros(total, dtype=np.uint8)

    @property
    def total_cells(self) -> int:
        return self.occ.size

    @property
    def covered(self) -> bool:
        return self.occupied_count == self.occ.size

    def is_occupied(self, p) -> bool:
        return bool(self.occ[cell_of(self, p)])


def cell_of(state: CoverState, p) -> int:
    """Cell index with the first axis varying fastest; 1.0 maps into the last cell."""
    g = state.cells_per_axis
    c = 0
    for x in reversed(np.asarray(p, dtype=np.float64).reshape(-1).tolist()):
        c = c * g + min(int(x * g), g - 1)
    return c


def cells_of(points: np.ndarray, g: int) -> np.ndarray:
    coords = np.minimum((np.asarray(points) * g).astype(np.int64), g - 1)
    idx = np.zeros(coords.shape[0], dtype=np.int64)
    for k in range(coords.shape[1] - 1, -1, -1):
        idx = idx * g + coords[:, k]
    return idx


def register_vertex(state: CoverState, p, step: int) -> bool:
    """Mark the cell of ``p``; True exactly when this fills the last empty cell."""
    c = cell_of(state, p)
    if state.occ[c]:
        return False
    state.occ[c] = 1
    state.occupied_count += 1
    if state.covered and state.cover_step is None:
        state.cover_step = int(step)
        return True
    return False


def cover_state_for(tree, epsilon: float) -> CoverState:
    """Cover state holding every current vertex of ``tree``."""
    st = CoverState(tree.d, epsilon)
    for i in range(tree.n):
        register_vertex(st, tree.pos[i], i)
    return st


def lemma1_check(state: CoverState, outcome, new_position) -> bool:
    """Whether the new vertex and its draw agree on landing in an empty cell.

    ``state`` must still reflect occupancy before the step.
    """
    x_new = not state.is_occupied(new_position)
    y_new = not state.is_occupied(outcome.target)
    return x_new == y_new


def lemma1_violations(tree, epsilon: float) -> int:
    """Count steps of a traced RRT where exactly one of (vertex, draw) hit an empty cell.

    Occupancy before step ``i`` is reconstructed from first-arrival times:
    a cell is empty before ``i`` iff its first vertex arrived at ``i`` or later.
    """
    if tree.targets is None:
        raise ValueError("lemma1_violations needs a traced tree")
    g = cells_per_axis(tree.d, epsilon)
    n = tree.n
    cx = cells_of(tree.positions, g)
    first = np.full(g**tree.d, n, dtype=np.int64)
    np.minimum.at(first, cx, np.arange(n))
    steps = np.arange(1, n)
    cy = cells_of(tree.targets[1:n], g)
    x_new = first[cx[1:]] == steps
    y_new = first[cy] >= steps
    return int(np.count_nonzero(x_new != y_new))


def uncovered_witness(vertices, epsilon: float, probes: int, rng: RngStream):
    """First of ``probes`` uniform points farther than ``epsilon`` from all vertices, else None."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    v = np.atleast_2d(np.asarray(vertices, dtype=np.float64))
    q = rng.points(int(probes), v.shape[1])
    dist, _ = cKDTree(v).query(q, k=1)
    far = np.flatnonzero(dist > epsilon)
    return q[far[0]] if far.size else None


def beta_const(d: int, epsilon: float) -> float:
    """Inverse volume of the radius-``epsilon`` ball in ``d`` dimensions."""
    return math.gamma(d / 2 + 1) / (epsilon**d * math.pi ** (d / 2))


def alpha_const(d: int, epsilon: float) -> float:
    """Inverse volume of a cube of side ``epsilon / sqrt(d)``."""
    return d ** (d / 2) / epsilon**d


def harmonic(n: int) -> float:
    if n < 0:
        raise ValueError("harmonic(n) needs n >= 0")
    return math.fsum(1.0 / k for k in range(int(n), 0, -1))


def lower_reference(d: int, epsilon: float) -> float:
    b = beta_const(d, epsilon)
    return b / 2**d * harmonic(math.floor(b))


def upper_reference(d: int, epsilon: float) -> float:
    a = alpha_const(d, epsilon)
    return a * harmonic(math.ceil(a))


def coupon_expected(n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return n * harmonic(n)


@nb.njit(cache=True)
def _coupon_consume(types, seen, missing):
    for s in range(types.shape[0]):
        t = types[s]
        if not seen[t]:
            seen[t] = True
            missing -= 1
            if missing == 0:
                return s + 1, 0
    return types.shape[0], missing


def coupon_simulate(n: int, rng: RngStream, batch: int | None = None) -> int:
    """Number of uniform draws until all ``n`` coupon types have appeared."""
    if n < 1:
        raise ValueError("n must be >= 1")
    batch = batch or max(64, 2 * n)
    seen = np.zeros(n, dtype=np.bool_)
    missing = n
    draws = 0
    while True:
        u = rng.uniform(batch)
        types = np.minimum((u * n).astype(np.int64), n - 1)
        used, missing = _coupon_consume(types, seen, missing)
        draws += used
        if missing == 0:
            rng.push_back(u[used:])
            return draws
