import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bogc.errors import DimensionMismatch, NotPositiveDefinite
from bogc.numerics import (
    SeededRng,
    cholesky,
    cholesky_batch,
    cholesky_with_jitter,
    invert_spd,
    inverse_diagonal_from_factor,
    is_symmetric,
    sample_gaussian,
)


def random_spd(gen, k, cond=1e3):
    q, _ = np.linalg.qr(gen.standard_normal((k, k)))
    eig = np.exp(gen.uniform(0, np.log(cond), size=k))
    m = (q * eig) @ q.T
    return 0.5 * (m + m.T)


def test_cholesky_identity():
    np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))


def test_cholesky_diagonal_by_hand():
    np.testing.assert_allclose(cholesky(np.diag([4.0, 9.0])), [[2, 0], [0, 3]], atol=1e-15)


def test_cholesky_reconstructs():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    L = cholesky(m)
    assert np.allclose(np.triu(L, 1), 0)
    assert np.linalg.norm(L @ L.T - m) / np.linalg.norm(m) < 1e-10


def test_cholesky_applies_requested_jitter():
    m = np.array([[1.0, 0.5], [0.5, 1.0]])
    L = cholesky(m, jitter=0.1)
    np.testing.assert_allclose(L @ L.T, m + 0.1 * np.eye(2), rtol=1e-12)


def test_jitter_escalates_then_gives_up():
    singular = np.ones((3, 3))
    L, used = cholesky_with_jitter(singular, jitter=1e-8)
    assert used >= 1e-8
    assert np.linalg.norm(L @ L.T - singular - used * np.eye(3)) < 1e-8 * 3
    with pytest.raises(NotPositiveDefinite):
        cholesky_with_jitter(-np.eye(2), jitter=1e-8)
    with pytest.raises(NotPositiveDefinite):
        cholesky(singular - 0.5 * np.eye(3), jitter=0.0)


def test_cholesky_rejects_asymmetric_and_nonsquare():
    with pytest.raises(ValueError):
        cholesky(np.array([[1.0, 0.3], [0.0, 1.0]]))
    with pytest.raises(DimensionMismatch):
        cholesky(np.ones((2, 3)))


def test_invert_spd_examples():
    np.testing.assert_array_equal(invert_spd(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(invert_spd(np.diag([2.0, 5.0])), np.diag([0.5, 0.2]), rtol=1e-14)


def test_invert_singular_needs_jitter():
    singular = np.array([[1.0, 1.0], [1.0, 1.0]])
    inv = invert_spd(singular, jitter=1e-6)
    assert np.all(np.isfinite(inv))
    resid = inv @ (singular + 1e-6 * np.eye(2)) - np.eye(2)
    assert np.max(np.abs(resid)) < 1e-6 * np.linalg.norm(inv)
    with pytest.raises(NotPositiveDefinite):
        invert_spd(singular, jitter=0.0)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_invert_spd_roundtrip(k, seed):
    gen = np.random.default_rng(seed)
    m = random_spd(gen, k)
    inv = invert_spd(m)
    assert is_symmetric(inv)
    assert np.linalg.norm(inv @ m - np.eye(k)) < 1e-6 * np.sqrt(k)
    back = invert_spd(inv)
    assert np.linalg.norm(back - m) / np.linalg.norm(m) < 1e-5


@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_inverse_diagonal_matches_full_inverse(k, seed):
    m = random_spd(np.random.default_rng(seed), k)
    np.testing.assert_allclose(inverse_diagonal_from_factor(cholesky(m)),
                               np.diag(np.linalg.inv(m)), rtol=1e-8)


def test_cholesky_batch_falls_back_per_matrix():
    ms = np.stack([np.eye(2), np.ones((2, 2))])
    L, used = cholesky_batch(ms, jitter=0.0 + 1e-8)
    assert used[0] == 1e-8 and used[1] >= 1e-8
    np.testing.assert_allclose(L[0], np.eye(2), atol=1e-7)


def test_sample_zero_variance():
    draws = sample_gaussian(np.zeros(3), np.zeros((3, 3)), SeededRng(0), size=50)
    np.testing.assert_array_equal(draws, 0.0)


def test_sample_mean_law_of_large_numbers():
    draws = sample_gaussian(np.array([1.0, 2.0]), np.eye(2), SeededRng(3), size=100_000)
    assert np.all(np.abs(draws.mean(axis=0) - [1, 2]) < 0.02)
    # 4 sigma / sqrt(n) with unit variance
    assert np.all(np.abs(draws.mean(axis=0) - [1, 2]) < 4 / np.sqrt(100_000))


def test_sample_covariance_within_five_percent():
    gen = np.random.default_rng(8)
    S = random_spd(gen, 5, cond=20)
    L = cholesky(S)
    draws = sample_gaussian(np.zeros(5), L, SeededRng(11), size=100_000)
    emp = np.cov(draws, rowvar=False)
    assert np.linalg.norm(emp - S) / np.linalg.norm(S) < 0.05


def test_sampling_is_deterministic_per_stream():
    L = np.eye(4)
    a = sample_gaussian(np.zeros(4), L, SeededRng(5, 7), size=3)
    b = sample_gaussian(np.zeros(4), L, SeededRng(5, 7), size=3)
    c = sample_gaussian(np.zeros(4), L, SeededRng(5, 8), size=3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    # Consuming another stream first does not disturb this one.
    rng = SeededRng(5)
    rng.stream(99).standard_normal(10)
    np.testing.assert_array_equal(sample_gaussian(np.zeros(4), L, rng.stream(7), size=3), a)


def test_sample_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        sample_gaussian(np.zeros(3), np.eye(2), SeededRng(0))


def test_seeded_rng_rejects_negative():
    with pytest.raises(ValueError):
        SeededRng(-1)
