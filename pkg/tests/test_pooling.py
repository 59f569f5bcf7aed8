import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adapt_ts.io import RawSample, normalize_per_channel
from adapt_ts.pooling import (
    AlignedSample,
    adaptive_pool_1d,
    adaptive_pool_2d,
    align_sample,
    kernel_bounds,
    kernel_table,
    read_aligned,
    spectral_transform,
    truncate_sample,
    write_aligned,
)

from .oracles import brute_pool_1d, brute_pool_2d, kernel_enumerator, naive_dft_magnitude


def test_worked_kernels():
    assert [kernel_bounds(i, 3, 5) for i in range(3)] == [(0, 2), (1, 4), (3, 5)]
    assert kernel_enumerator(5, 3) == [(0, 2), (1, 4), (3, 5)]
    assert kernel_table(5, 3) == [(0, 0, 2, 2), (1, 1, 4, 3), (2, 3, 5, 2)]


def test_identity_and_upsampling_kernels():
    assert [kernel_bounds(k, 7, 7) for k in range(7)] == [(k, k + 1) for k in range(7)]
    assert [kernel_bounds(i, 3, 1) for i in range(3)] == [(0, 1)] * 3


def test_kernel_bounds_match_rational_enumerator():
    for n in range(1, 80):
        for m in range(1, 80):
            assert [kernel_bounds(i, m, n) for i in range(m)] == kernel_enumerator(n, m)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 1024), st.integers(1, 1024))
def test_kernel_coverage(n, m):
    bounds = [kernel_bounds(i, m, n) for i in range(m)]
    assert bounds[0][0] == 0 and bounds[-1][1] == n
    for (s0, e0), (s1, e1) in zip(bounds, bounds[1:]):
        assert s1 <= e0  # no gaps
        assert s0 <= s1 and e0 <= e1  # monotone
    assert all(0 <= s < e <= n for s, e in bounds)
    if m >= n:
        # upsampling: each output reads one or two neighbouring inputs
        assert all(e - s <= 2 for s, e in bounds)
        if m % n == 0:
            assert all(e - s == 1 for s, e in bounds)


def test_pool_1d_examples():
    np.testing.assert_allclose(adaptive_pool_1d([1, 2, 3, 4, 5], 3), [1.5, 3.0, 4.5], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(adaptive_pool_1d([7.0], 4), [7, 7, 7, 7])
    v = np.random.default_rng(1).normal(size=9)
    np.testing.assert_array_equal(adaptive_pool_1d(v, 9), v)


def test_pool_2d_examples():
    np.testing.assert_allclose(adaptive_pool_2d(np.eye(2), 1, 1), [[0.5]])
    x = np.random.default_rng(0).normal(size=(7, 5))
    np.testing.assert_array_equal(adaptive_pool_2d(x, 7, 5), x)
    np.testing.assert_allclose(adaptive_pool_2d(x, 3, 2), brute_pool_2d(x, 3, 2), rtol=0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_pool_1d_range_and_mean(n, m, seed):
    v = np.random.default_rng(seed).normal(size=n)
    out = adaptive_pool_1d(v, m)
    assert np.all(out >= v.min() - 1e-12) and np.all(out <= v.max() + 1e-12)
    assert abs(adaptive_pool_1d(v, 1)[0] - v.mean()) < 1e-12


def test_spectrum_of_constant_and_cosine():
    out = spectral_transform(np.full(10, -3.0))
    assert out.shape == (6, 1)
    np.testing.assert_allclose(out[:, 0], [3.0, 0, 0, 0, 0, 0], atol=1e-15)
    t = np.arange(16)
    spec = spectral_transform(np.cos(2 * np.pi * 4 * t / 16))[:, 0]
    assert abs(spec[4] - 0.5) < 1e-10
    assert np.all(np.delete(spec, 4) < 1e-10)
    np.testing.assert_allclose(spec, naive_dft_magnitude(np.cos(2 * np.pi * 4 * t / 16)), atol=1e-12)


def test_spectrum_matches_naive_dft_on_random_lengths():
    rng = np.random.default_rng(5)
    for n in (1, 2, 3, 7, 16, 33, 100):
        x = rng.normal(size=(n, 2))
        out = spectral_transform(x)
        assert out.shape == (n // 2 + 1, 2)
        for c in range(2):
            np.testing.assert_allclose(out[:, c], naive_dft_magnitude(x[:, c]), rtol=0, atol=1e-9)
        assert np.all(out >= 0)


def test_align_identity_shape():
    x = np.random.default_rng(2).normal(size=(256, 32))
    s = normalize_per_channel(RawSample(x, 1, "d"))
    a = align_sample(s)
    np.testing.assert_array_equal(a.time_repr, s.values)
    assert a.freq_repr.shape == (256, 32)
    assert a.label == 1 and a.dataset_id == "d"


def test_align_long_univariate_replicates_channels():
    x = np.random.default_rng(3).normal(size=(5120, 1))
    a = align_sample(normalize_per_channel(RawSample(x)))
    assert a.time_repr.shape == (256, 32) and a.freq_repr.shape == (256, 32)
    for rep in (a.time_repr, a.freq_repr):
        assert np.all(rep == rep[:, :1])
    np.testing.assert_allclose(a.time_repr[:, 0], brute_pool_1d(normalize_per_channel(RawSample(x)).values[:, 0], 256), atol=1e-12)


def test_heterogeneous_samples_align_to_one_shape():
    rng = np.random.default_rng(4)
    a = align_sample(RawSample(rng.normal(size=(128, 9)), 0, "har"), 64, 8)
    b = align_sample(RawSample(rng.normal(size=(5120, 1)), 1, "fd"), 64, 8)
    assert a.time_repr.shape == b.time_repr.shape == a.freq_repr.shape == b.freq_repr.shape == (64, 8)
    assert np.all(np.isfinite(a.freq_repr)) and np.all(np.isfinite(b.time_repr))


def test_zscored_spectrum_option():
    x = np.random.default_rng(6).normal(size=(100, 3))
    a = align_sample(RawSample(x), 51, 3, zscore_spectrum=True)
    np.testing.assert_allclose(a.freq_repr.mean(axis=0), 0, atol=1e-9)


def test_truncation_baseline():
    x = np.arange(10.0)[:, None] * np.ones((1, 3))
    short = truncate_sample(RawSample(x), 16, 4)
    np.testing.assert_array_equal(short.time_repr[:10, 0], np.arange(10.0))
    assert np.all(short.time_repr[10:] == 0) and np.all(short.time_repr[:, 1:] == 0)
    long = truncate_sample(RawSample(np.arange(40.0)[:, None]), 16, 4)
    np.testing.assert_array_equal(long.time_repr[:, 0], np.arange(16.0))


def test_aligned_file_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    samples = [AlignedSample(rng.normal(size=(8, 3)), rng.normal(size=(8, 3)), k % 2 or None) for k in range(4)]
    write_aligned(tmp_path / "a.adal", samples)
    back = read_aligned(tmp_path / "a.adal")
    for a, b in zip(samples, back):
        np.testing.assert_array_equal(a.time_repr.astype(np.float32), b.time_repr)
        np.testing.assert_array_equal(a.freq_repr.astype(np.float32), b.freq_repr)
        assert a.label == b.label


def test_invalid_sizes():
    with pytest.raises(ValueError):
        kernel_bounds(3, 3, 5)
    with pytest.raises(ValueError):
        adaptive_pool_1d([], 2)
