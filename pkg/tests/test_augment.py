import numpy as np
import pytest

from adapt_ts.augment import (
    RANDOM,
    ZERO,
    AugmentRngs,
    MaskPlan,
    NoiseConfig,
    Span,
    SpanMaskConfig,
    add_noise,
    apply_mask,
    augment_sample,
    build_mask_plan,
    sample_span_length,
)
from adapt_ts.errors import ValidationError
from adapt_ts.pooling import AlignedSample

from .oracles import truncated_geometric_pmf


def test_length_pmf_matches_closed_form():
    cfg = SpanMaskConfig()
    np.testing.assert_allclose(cfg.length_pmf(), truncated_geometric_pmf(0.2, 10), rtol=1e-12)
    assert abs(cfg.length_pmf()[0] - 0.224058) < 1e-6


def test_span_lengths_empirical():
    cfg = SpanMaskConfig()
    draws = sample_span_length(np.random.default_rng(0), cfg, size=10**6)
    assert draws.min() >= 1 and draws.max() <= 10
    freq = np.bincount(draws, minlength=11)[1:] / draws.size
    assert abs(freq[0] - 0.22408) < 0.003
    tv = 0.5 * np.abs(freq - np.array(truncated_geometric_pmf(0.2, 10))).sum()
    assert tv < 0.005


def test_degenerate_span_lengths():
    rng = np.random.default_rng(1)
    assert set(sample_span_length(rng, SpanMaskConfig(l_max=1), size=1000)) == {1}
    assert np.mean(sample_span_length(rng, SpanMaskConfig(p=0.999), size=1000) == 1) > 0.99


def test_invalid_mask_configs():
    with pytest.raises(ValidationError):
        SpanMaskConfig(p_m=0.7, p_r=0.2)
    with pytest.raises(ValidationError):
        SpanMaskConfig(l_max=0)
    with pytest.raises(ValidationError):
        SpanMaskConfig(p=1.0)
    with pytest.raises(ValidationError):
        NoiseConfig(sigma=-1)


def test_mask_plan_coverage_bounds_and_actions():
    cfg = SpanMaskConfig()
    rng = np.random.default_rng(2)
    sizes, zeros, spans = [], 0, 0
    for _ in range(5000):
        plan = build_mask_plan(rng, cfg, 256)
        assert all(0 <= s.start and s.start + s.length <= 256 and s.length >= 1 for s in plan.spans)
        sizes.append(len(plan.masked))
        zeros += sum(s.action == ZERO for s in plan.spans)
        spans += len(plan.spans)
    sizes = np.array(sizes)
    # stop rule: reach 0.15 * 256 = 38.4, overshoot by at most one span
    assert sizes.min() >= 39 and sizes.max() <= 48
    assert abs(zeros / spans - 0.8) < 0.01
    assert sizes.mean() / 256 >= 0.15


def test_tiny_ratio_gives_single_span():
    cfg = SpanMaskConfig(mask_ratio=1e-6)
    rng = np.random.default_rng(3)
    for length in (1, 7, 256):
        assert len(build_mask_plan(rng, cfg, length).spans) == 1


def test_mask_plan_union():
    plan = MaskPlan(10, [Span(1, 3, ZERO), Span(2, 4, RANDOM)])
    np.testing.assert_array_equal(plan.masked, [1, 2, 3, 4, 5])


def test_noise_statistics():
    x = np.zeros((1000, 1000))
    out = add_noise(x, np.random.default_rng(4), NoiseConfig())
    assert abs(out.mean()) < 0.001
    assert abs(out.std() - 0.1) < 0.002
    np.testing.assert_array_equal(add_noise(x + 1, np.random.default_rng(4), NoiseConfig(sigma=0)), x + 1)
    np.testing.assert_array_equal(add_noise(x + 1, np.random.default_rng(4), NoiseConfig(), enabled=False), x + 1)


def test_apply_mask_semantics():
    x = np.arange(20.0).reshape(10, 2)
    rng = np.random.default_rng(5)
    np.testing.assert_array_equal(apply_mask(x, MaskPlan(10), rng), x)
    np.testing.assert_array_equal(apply_mask(x, MaskPlan(10, [Span(0, 10, ZERO)]), rng), np.zeros_like(x))
    out = apply_mask(x, MaskPlan(10, [Span(2, 3, ZERO), Span(7, 2, RANDOM)]), rng)
    keep = [0, 1, 5, 6, 9]
    np.testing.assert_array_equal(out[keep], x[keep])
    assert np.all(out[2:5] == 0)
    assert not np.any(out[7:9] == x[7:9])
    with pytest.raises(ValidationError):
        apply_mask(x, MaskPlan(9), rng)


def _sample(seed=0, length=32, channels=4):
    rng = np.random.default_rng(seed)
    return AlignedSample(rng.normal(size=(length, channels)), rng.normal(size=(length, channels)), 1, "d")


def test_clean_pass_through():
    s = _sample()
    pair = augment_sample(s, np.random.default_rng(0))
    np.testing.assert_array_equal(pair.input_time, s.time_repr)
    np.testing.assert_array_equal(pair.input_freq, s.freq_repr)
    np.testing.assert_array_equal(pair.target_time, s.time_repr)


def test_augment_is_deterministic_and_domains_independent():
    s = _sample(length=256)
    cfg = SpanMaskConfig()
    a = augment_sample(s, AugmentRngs.from_seed(1, 2, 3), NoiseConfig(), cfg)
    b = augment_sample(s, AugmentRngs.from_seed(1, 2, 3), NoiseConfig(), cfg)
    for field in ("input_time", "input_freq", "target_time", "target_freq"):
        assert getattr(a, field).tobytes() == getattr(b, field).tobytes()
    assert a.q_time.spans == b.q_time.spans
    assert a.q_time.spans != a.q_freq.spans
    # targets are the clean values
    np.testing.assert_array_equal(a.target_time, s.time_repr)
    # unmasked positions only carry noise
    keep = ~a.q_time.mask
    resid = a.input_time[keep] - s.time_repr[keep]
    assert 0 < np.abs(resid).max() < 1.0


def test_toggling_noise_keeps_mask_draws():
    s = _sample(length=128)
    cfg = SpanMaskConfig()
    on = augment_sample(s, AugmentRngs.from_seed(9), NoiseConfig(), cfg)
    off = augment_sample(s, AugmentRngs.from_seed(9), NoiseConfig(), cfg, noise_enabled=False)
    assert on.q_time.spans == off.q_time.spans
    assert on.q_freq.spans == off.q_freq.spans


def test_noisy_targets_option():
    s = _sample()
    pair = augment_sample(s, AugmentRngs.from_seed(0), NoiseConfig(), None, noisy_targets=True)
    np.testing.assert_array_equal(pair.target_time, pair.input_time)
    assert not np.array_equal(pair.target_time, s.time_repr)
