"""Per-tree observables: edge lengths, path lengths, depths and heights.

Indexing follows the trees: node ``n`` is the vertex inserted at step ``n``,
so ``delta[n]`` is its edge length and the scaled statistic is
``delta[n] * sqrt(pi * n)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .space import RngStream
from .tree import Tree, root_path_length, root_path_lengths

SERIES_COLUMNS = ("n", "delta", "delta_scaled", "cum_length", "root_path", "depth", "height")


@dataclass(frozen=True)
class SeriesSample:
    n: int
    delta: float
    delta_scaled: float
    cum_length: float
    root_path: float
    depth: int
    height_so_far: int


def record_step(series: list, tree: Tree, new_vertex: int) -> SeriesSample:
    """Append the sample for a just-inserted vertex to ``series``."""
    n = int(new_vertex)
    if n < 1 or n >= tree.n:
        raise IndexError(f"vertex {n} is not a grown vertex of this tree")
    delta = float(tree.edge[n])
    prev = series[-1] if series else None
    cum = (prev.cum_length if prev else 0.0) + delta
    h = max(prev.height_so_far if prev else 0, int(tree.depth[n]))
    s = SeriesSample(n=n, delta=delta, delta_scaled=delta * math.sqrt(math.pi * n),
                     cum_length=cum, root_path=root_path_length(tree, n),
                     depth=int(tree.depth[n]), height_so_far=h)
    series.append(s)
    return s


def series_from_tree(tree: Tree) -> dict[str, np.ndarray]:
    """All series columns for nodes ``1..n-1`` in one pass."""
    n = np.arange(1, tree.n)
    delta = tree.edges[1:].copy()
    depth = tree.depths[1:].copy()
    return {
        "n": n,
        "delta": delta,
        "delta_scaled": delta * np.sqrt(np.pi * n),
        "cum_length": np.cumsum(delta),
        "root_path": root_path_lengths(tree)[1:],
        "depth": depth,
        "height": np.maximum.accumulate(depth),
    }


def geometric_schedule(n_max: int) -> list[int]:
    """Powers of two up to ``n_max``, plus ``n_max`` itself."""
    out = []
    k = 1
    while k < n_max:
        out.append(k)
        k *= 2
    out.append(int(n_max))
    return out


def series_csv(series: dict[str, np.ndarray], schedule=None) -> str:
    """Series rows as CSV text; ``schedule`` selects which ``n`` to emit (default all)."""
    n = series["n"]
    rows = range(n.size) if schedule is None else [int(s) - 1 for s in schedule if 1 <= s <= n.size]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for i in rows:
        w.writerow([int(n[i])] + [repr(float(series[c][i])) for c in SERIES_COLUMNS[1:5]]
                   + [int(series["depth"][i]), int(series["height"][i])])
    return buf.getvalue()


def tail_bound_delta(n: int, x: float) -> float:
    """Upper bound on P[delta_n > x] for the NNT in the unit square."""
    if not 0.0 <= x <= 1.0 / math.sqrt(math.pi):
        raise ValueError(f"x must lie in [0, 1/sqrt(pi)], got {x}")
    if n < 1:
        raise ValueError("n must be >= 1")
    return (1.0 - math.pi * x * x) ** (n - 1)


def depth_tail_bound(n: float, x: float) -> float:
    """Chernoff bound ``min(1, (e ln n / x)^x / n)`` on P[D_n > x], valid for x > ln n."""
    if n < 2:
        raise ValueError("n must be >= 2")
    ln = math.log(n)
    if not x > ln:
        raise ValueError(f"x must exceed ln n = {ln}")
    return min(1.0, math.exp(x * (1.0 + math.log(ln / x)) - ln))


@nb.njit(cache=True)
def _depth_model(n, u, size):
    out = np.empty(size, dtype=np.int64)
    j = 0
    for r in range(size):
        v = n
        k = 0
        while v > 0:
            if j >= u.shape[0]:
                return out[:r], j, r
            v = int(math.floor(v * u[j]))
            j += 1
            k += 1
        out[r] = k
    return out, j, size


def depth_model_samples(n: int, rng: RngStream, size: int) -> np.ndarray:
    """``size`` independent draws of the iterated-floor depth model.

    Consumes the stream exactly as ``size`` calls of :func:`depth_model_sample`.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    left = int(size)
    while left:
        u = rng.uniform(int(left * (math.log(n) + 4)) + 16)
        # a replica cut off by the end of the block is redone from its start
        got, used, done = _depth_model(int(n), u, left)
        if done < left:
            # rewind to the first draw of the unfinished replica
            used = int(_draws_used(int(n), u, done))
        out.append(got[:done].copy())
        rng.push_back(u[used:])
        left -= done
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


@nb.njit(cache=True)
def _draws_used(n, u, replicas):
    j = 0
    for _ in range(replicas):
        v = n
        while v > 0:
            v = int(math.floor(v * u[j]))
            j += 1
    return j


def depth_model_sample(n: int, rng: RngStream) -> int:
    """Iterate ``v <- floor(v * U)`` from ``v = n`` and count steps to reach 0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    v, k = int(n), 0
    while v > 0:
        v = math.floor(v * float(rng.uniform(1)[0]))
        k += 1
    return k
