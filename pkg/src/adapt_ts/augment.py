"""Gaussian noise and truncated-geometric span masking on aligned samples."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .pooling import AlignedSample

ZERO = "zero"
RANDOM = "random"


@dataclass(frozen=True)
class NoiseConfig:
    mu: float = 0.0
    sigma: float = 0.1
    enabled_pretrain: bool = True
    enabled_finetune: bool = False

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValidationError(f"noise sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class SpanMaskConfig:
    p: float = 0.2
    l_max: int = 10
    p_m: float = 0.8
    p_r: float = 0.2
    mask_ratio: float = 0.15

    def __post_init__(self) -> None:
        if not 0 < self.p < 1:
            raise ValidationError(f"span p must lie in (0, 1), got {self.p}")
        if self.l_max < 1:
            raise ValidationError(f"l_max must be >= 1, got {self.l_max}")
        if abs(self.p_m + self.p_r - 1) > 1e-9 or self.p_m < 0 or self.p_r < 0:
            raise ValidationError(f"p_m + p_r must equal 1, got {self.p_m} + {self.p_r}")
        if not 0 < self.mask_ratio < 1:
            raise ValidationError(f"mask_ratio must lie in (0, 1), got {self.mask_ratio}")

    def length_pmf(self) -> np.ndarray:
        """P(l = k) for k = 1..l_max, geometric renormalized onto [1, l_max]."""
        k = np.arange(1, self.l_max + 1)
        w = self.p * (1 - self.p) ** (k - 1)
        return w / (1 - (1 - self.p) ** self.l_max)


class Span(NamedTuple):
    start: int
    length: int
    action: str


@dataclass
class MaskPlan:
    length: int
    spans: list[Span] = field(default_factory=list)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.length, dtype=bool)
        for s in self.spans:
            m[s.start : s.start + s.length] = True
        return m

    @property
    def masked(self) -> np.ndarray:
        """Sorted masked positions Q."""
        return np.flatnonzero(self.mask)


@dataclass
class MaskedPair:
    input_time: np.ndarray
    input_freq: np.ndarray
    target_time: np.ndarray
    target_freq: np.ndarray
    q_time: MaskPlan
    q_freq: MaskPlan
    label: int | None = None
    dataset_id: str = ""


class AugmentRngs(NamedTuple):
    """Independent streams so toggling one augmentation leaves the others' draws intact."""

    mask: np.random.Generator
    noise: np.random.Generator
    replace: np.random.Generator

    @classmethod
    def from_seed(cls, *key: int) -> "AugmentRngs":
        seqs = np.random.SeedSequence(list(key)).spawn(3)
        return cls(*(np.random.default_rng(s) for s in seqs))


def sample_span_length(rng: np.random.Generator, cfg: SpanMaskConfig, size: int | None = None):
    cdf = np.cumsum(cfg.length_pmf())
    cdf[-1] = 1.0
    u = rng.random(size)
    out = np.searchsorted(cdf, u, side="right") + 1
    return int(out) if size is None else out


def build_mask_plan(rng: np.random.Generator, cfg: SpanMaskConfig, length: int) -> MaskPlan:
    """Add spans at uniform starts until at least ``mask_ratio * length`` positions are masked."""
    if length < 1:
        raise ValidationError(f"sequence length must be >= 1, got {length}")
    covered = np.zeros(length, dtype=bool)
    target = cfg.mask_ratio * length
    count = 0
    plan = MaskPlan(length)
    while count < target:
        start = int(rng.integers(length))
        span_len = min(sample_span_length(rng, cfg), length - start)
        action = ZERO if rng.random() < cfg.p_m else RANDOM
        plan.spans.append(Span(start, span_len, action))
        covered[start : start + span_len] = True
        count = int(covered.sum())
    return plan


def add_noise(x: np.ndarray, rng: np.random.Generator, cfg: NoiseConfig, enabled: bool = True) -> np.ndarray:
    if not enabled or cfg.sigma == 0:
        return np.array(x, copy=True)
    return x + rng.normal(cfg.mu, cfg.sigma, size=np.shape(x))


def apply_mask(x: np.ndarray, plan: MaskPlan, rng: np.random.Generator) -> np.ndarray:
    """Zero or re-draw whole time positions per span; later spans win where spans overlap."""
    out = np.array(x, copy=True)
    if plan.length != out.shape[0]:
        raise ValidationError(f"mask plan length {plan.length} != sequence length {out.shape[0]}")
    for s in plan.spans:
        sl = slice(s.start, s.start + s.length)
        if s.action == ZERO:
            out[sl] = 0.0
        else:
            out[sl] = rng.standard_normal((s.length,) + out.shape[1:])
    return out


def augment_sample(
    sample: AlignedSample,
    rng: np.random.Generator | AugmentRngs,
    noise: NoiseConfig | None = None,
    mask: SpanMaskConfig | None = None,
    noise_enabled: bool = True,
    noisy_targets: bool = False,
) -> MaskedPair:
    """Noise then mask, each domain with its own span plan.

    ``mask=None`` yields empty plans. Targets are the clean pooled values
    unless ``noisy_targets`` is set.
    """
    if isinstance(rng, np.random.Generator):
        rng = AugmentRngs(*rng.spawn(3))
    length = sample.time_repr.shape[0]
    if mask is not None:
        plan_t = build_mask_plan(rng.mask, mask, length)
        plan_f = build_mask_plan(rng.mask, mask, length)
    else:
        plan_t, plan_f = MaskPlan(length), MaskPlan(length)
    use_noise = noise is not None and noise_enabled
    noisy_t = add_noise(sample.time_repr, rng.noise, noise, use_noise) if use_noise else sample.time_repr.copy()
    noisy_f = add_noise(sample.freq_repr, rng.noise, noise, use_noise) if use_noise else sample.freq_repr.copy()
    return MaskedPair(
        input_time=apply_mask(noisy_t, plan_t, rng.replace),
        input_freq=apply_mask(noisy_f, plan_f, rng.replace),
        target_time=noisy_t if noisy_targets else sample.time_repr.copy(),
        target_freq=noisy_f if noisy_targets else sample.freq_repr.copy(),
        q_time=plan_t,
        q_freq=plan_f,
        label=sample.label,
        dataset_id=sample.dataset_id,
    )
