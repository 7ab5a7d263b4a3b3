"""Unit-cube geometry, seeded random streams and the RRT steering step."""

from __future__ import annotations

import math

import numpy as np

MAX_DIM = 16
GENERATOR_NAME = "numpy.PCG64(SeedSequence(seed, spawn_key=(stream,)))"


class DegenerateDirection(ValueError):
    """Steering target coincides with the nearest vertex."""


def check_dim(d: int) -> int:
    d = int(d)
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"d must be in [1, {MAX_DIM}], got {d}")
    return d


def as_point(coords, d: int | None = None) -> np.ndarray:
    p = np.asarray(coords, dtype=np.float64).reshape(-1)
    check_dim(p.size)
    if d is not None and p.size != d:
        raise ValueError(f"expected a point of dimension {d}, got {p.size}")
    if np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p)):
        raise ValueError(f"point {p!r} is outside the unit cube")
    return p


class RngStream:
    """A reproducible stream of uniform doubles identified by ``(seed, stream_index)``.

    Streams with different ``stream_index`` are spawned children of the same
    ``SeedSequence`` and are therefore statistically independent.  Draws are
    served from a small pushback buffer so that a consumer which over-draws a
    batch can return the unused tail and keep the sequence identical to
    one-at-a-time consumption.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if stream_index < 0:
            raise ValueError("stream_index must be non-negative")
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        self._gen = np.random.Generator(np.random.PCG64(ss))
        self._pending = np.empty(0, dtype=np.float64)

    generator_name = GENERATOR_NAME

    def uniform(self, size: int) -> np.ndarray:
        """Next ``size`` uniform [0, 1) doubles."""
        size = int(size)
        k = min(size, self._pending.size)
        if k == 0:
            return self._gen.random(size)
        head, self._pending = self._pending[:k], self._pending[k:]
        if k == size:
            return head.copy()
        return np.concatenate([head, self._gen.random(size - k)])

    def points(self, count: int, d: int) -> np.ndarray:
        return self.uniform(count * d).reshape(count, d)

    def push_back(self, values) -> None:
        """Return unused draws; they are served again before fresh ones."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size:
            self._pending = np.concatenate([values, self._pending])

    def integers(self, high: int, size: int) -> np.ndarray:
        # Separate from the uniform buffer; only used by non-geometric oracles.
        if self._pending.size:
            raise RuntimeError("integer draws while uniform draws are pending")
        return self._gen.integers(0, high, size=size)

    def metadata(self) -> dict:
        return {"seed": self.seed, "stream": self.stream_index, "generator_name": GENERATOR_NAME}


def uniform_sample(rng: RngStream, d: int) -> np.ndarray:
    return rng.uniform(check_dim(d))


def distance(a, b) -> float:
    """Euclidean distance, summing squared differences in coordinate order.

    The summation order matches the compiled nearest-neighbour kernels so that
    distances agree to the last bit.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    s = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        t = x - y
        s += t * t
    return math.sqrt(s)


def steer(nearest, target, epsilon: float, dist: float) -> np.ndarray:
    """Point at distance ``epsilon`` from ``nearest`` towards ``target``.

    ``dist`` must be the already computed distance between the two points.
    """
    if dist == 0.0:
        raise DegenerateDirection("target coincides with nearest vertex")
    if dist <= epsilon:
        raise ValueError(f"steer requires dist > epsilon (dist={dist}, epsilon={epsilon})")
    nearest = np.asarray(nearest, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return nearest + epsilon * ((target - nearest) / dist)


def in_half_space(p, axis: int, threshold: float) -> bool:
    p = np.asarray(p)
    if not 0 <= axis < p.size:
        raise IndexError(f"axis {axis} out of range for dimension {p.size}")
    return bool(p[axis] >= threshold)
