import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rrtsim.space import (DegenerateDirection, RngStream, as_point, distance, in_half_space,
                          steer, uniform_sample)

coord = st.floats(0.0, 1.0, allow_nan=False)


def points(d):
    return st.lists(coord, min_size=d, max_size=d).map(np.array)


def test_uniform_sample_support(rng):
    for d in (1, 2, 5, 16):
        p = uniform_sample(rng, d)
        assert p.shape == (d,)
        assert np.all((p >= 0) & (p <= 1))


def test_uniform_sample_means():
    rng = RngStream(3, 0)
    pts = np.array([uniform_sample(rng, 2) for _ in range(10**5)])
    m = pts.mean(axis=0)
    # 5 sigma of sqrt(1/12 / 1e5) ~ 0.0046
    assert np.all((m > 0.495) & (m < 0.505))


def test_stream_reproducible():
    a = RngStream(7, 0)
    b = RngStream(7, 0)
    assert np.array_equal([uniform_sample(a, 3) for _ in range(50)],
                          [uniform_sample(b, 3) for _ in range(50)])


def test_streams_differ():
    assert not np.array_equal(RngStream(7, 0).uniform(10), RngStream(7, 1).uniform(10))


def test_batch_equals_single_draws():
    a, b = RngStream(1, 4), RngStream(1, 4)
    batch = a.points(100, 3)
    single = np.array([b.uniform(3) for _ in range(100)])
    assert np.array_equal(batch, single)


def test_push_back_restores_sequence():
    a, b = RngStream(9, 2), RngStream(9, 2)
    x = a.uniform(10)
    a.push_back(x[4:])
    assert np.array_equal(np.concatenate([x[:4], a.uniform(20)]), b.uniform(24))


def test_bad_seed():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)


@pytest.mark.parametrize("a, b, expected", [
    ((0, 0), (0, 0), 0.0),
    ((0, 0), (0.3, 0.4), 0.5),
    ((0, 0, 0), (1, 1, 1), math.sqrt(3)),
])
def test_distance_examples(a, b, expected):
    assert distance(a, b) == pytest.approx(expected, rel=1e-15, abs=1e-15)


def test_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        distance((0, 0), (0, 0, 0))


def test_triangle_inequality_fuzz():
    rng = RngStream(11, 0)
    for _ in range(10**4):
        d = 3
        a, b, c = rng.uniform(d), rng.uniform(d), rng.uniform(d)
        assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-15


def test_steer_examples():
    out = steer((0, 0), (0.3, 0.4), 0.25, 0.5)
    assert np.allclose(out, (0.15, 0.20), rtol=0, atol=1e-15)
    assert distance((0, 0), out) == pytest.approx(0.25, rel=1e-12)
    out = steer((0.5, 0.5), (0.5, 0.9), 0.1, distance((0.5, 0.5), (0.5, 0.9)))
    assert np.allclose(out, (0.5, 0.6), rtol=0, atol=1e-15)


def test_steer_errors():
    with pytest.raises(DegenerateDirection):
        steer((0.2, 0.2), (0.2, 0.2), 0.1, 0.0)
    with pytest.raises(ValueError):
        steer((0, 0), (0.05, 0), 0.1, 0.05)


@given(points(2), points(2), st.floats(1e-4, 0.5))
def test_steer_properties(a, b, eps):
    dist = distance(a, b)
    if dist <= eps:
        return
    out = steer(a, b, eps, dist)
    assert distance(a, out) == pytest.approx(eps, rel=1e-12)
    assert distance(a, out) + distance(out, b) == pytest.approx(dist, abs=1e-10)
    assert np.all((out >= -1e-15) & (out <= 1 + 1e-15))


@pytest.mark.parametrize("p, axis, thr, expected", [
    ((0.5, 0.2), 0, 0.5, True),
    ((0.49, 0.9), 0, 0.5, False),
    ((0.2, 0.7), 1, 0.5, True),
])
def test_in_half_space(p, axis, thr, expected):
    assert in_half_space(p, axis, thr) is expected


def test_as_point_rejects_outside():
    with pytest.raises(ValueError):
        as_point((1.2, 0.3))
    with pytest.raises(ValueError):
        as_point(np.zeros(17))
