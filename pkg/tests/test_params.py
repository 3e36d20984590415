import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpzoo import kernels
from dpzoo.errors import DimensionError
from dpzoo.params import (DirectionDistribution, as_parameter_vector, axpy, batch_indices, derive_key,
                          direction_keys, dot, l2_norm, noise_normals, sample_direction,
                          sample_directions)
from dpzoo.privacy import noise_draw

u64 = st.integers(0, 2 ** 64 - 1)


def test_parameter_vector_validation():
    assert as_parameter_vector([1, 2]).dtype == np.float64
    with pytest.raises(ValueError):
        as_parameter_vector([[1.0]])
    with pytest.raises(ValueError):
        as_parameter_vector([1.0, np.nan])


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        dot(np.ones(3), np.ones(4))
    with pytest.raises(DimensionError):
        axpy(1.0, np.ones(3), np.ones(2))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.floats(-10, 10))
def test_linear_algebra(values, alpha):
    x = np.array(values)
    assert l2_norm(x) == pytest.approx(np.linalg.norm(x), rel=1e-12, abs=1e-300)
    assert dot(x, x) == pytest.approx(l2_norm(x) ** 2, rel=1e-12, abs=1e-300)
    np.testing.assert_allclose(axpy(alpha, x, x), (1 + alpha) * x, rtol=1e-12, atol=1e-9)


@given(u64, st.integers(0, 50), st.integers(0, 10_000), st.integers(0, 2 ** 32))
@settings(max_examples=50)
def test_direction_keys_match_scalar_derivation(seed, stage, iteration, index):
    assert int(direction_keys(seed, stage, iteration, [index])[0]) == derive_key(
        seed, 0, stage, iteration, index)


def test_derive_key_distinguishes_coordinates():
    keys = {derive_key(1, a, b, c) for a in range(4) for b in range(4) for c in range(4)}
    assert len(keys) == 64


@given(u64, st.integers(0, 5), st.integers(0, 100), st.lists(st.integers(0, 5000), min_size=1,
                                                             max_size=20, unique=True))
@settings(max_examples=30)
def test_directions_independent_of_batching(seed, stage, it, indices):
    dist = DirectionDistribution.standard(7)
    together = sample_directions(dist, seed, stage, it, indices)
    for row, i in zip(together, indices):
        assert np.array_equal(row, sample_direction(dist, seed, stage, it, i).values)


def test_directions_are_standard_normal():
    dist = DirectionDistribution.standard(4)
    v = sample_directions(dist, 3, 1, 1, np.arange(200_000))
    assert np.all(np.abs(v.mean(axis=0)) < 0.01)
    np.testing.assert_allclose(np.cov(v.T), np.eye(4), atol=0.01)


def test_masked_scaled_directions():
    mask = np.array([True, False, True, True])
    diag = np.array([2.0, 0.0, 1.0, 0.5])
    dist = DirectionDistribution(mask, diag, upper=2.0)
    base = sample_directions(DirectionDistribution.standard(4), 9, 0, 0, np.arange(10))
    v = sample_directions(dist, 9, 0, 0, np.arange(10))
    assert np.all(v[:, 1] == 0.0)
    np.testing.assert_array_equal(v[:, [0, 2, 3]], base[:, [0, 2, 3]] * diag[[0, 2, 3]])


def test_distribution_invariants():
    with pytest.raises(ValueError):
        DirectionDistribution(np.array([True, False]), np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        DirectionDistribution(np.array([True]), np.array([1.5]))
    with pytest.raises(DimensionError):
        DirectionDistribution(np.array([True]), np.array([1.0, 1.0]))
    dist = DirectionDistribution.standard(3)
    assert dist == DirectionDistribution.standard(3)
    assert hash(dist) == hash(DirectionDistribution.standard(3))
    with pytest.raises(ValueError):
        dist.mask[0] = False


def test_noise_normals_match_scalar_draws():
    z = noise_normals(5, 2, 7, np.arange(6))
    assert [noise_draw(5, 2, 7, i) for i in range(6)] == list(z)


@given(u64, st.integers(1, 300), st.data())
@settings(max_examples=30)
def test_batch_indices(seed, n, data):
    m = data.draw(st.integers(1, n))
    idx = batch_indices(seed, 1, 3, n, m)
    assert len(set(idx.tolist())) == m and idx.min() >= 0 and idx.max() < n
    assert np.array_equal(idx, batch_indices(seed, 1, 3, n, m))


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_sampling_identical_across_backends(backend):
    original = kernels.current_backend()
    dist = DirectionDistribution(np.array([True, True, False]), np.array([1.0, 0.7, 0.0]))
    try:
        kernels.use_backend(backend)
        v = sample_directions(dist, 42, 1, 2, np.arange(100))
    finally:
        kernels.use_backend(original)
    ref = sample_directions(dist, 42, 1, 2, np.arange(100))
    assert np.array_equal(v.view(np.uint64), ref.view(np.uint64))
