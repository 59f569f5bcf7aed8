"""What a masked training pair looks like.

Run: python demos/02_span_masking.py
"""
import numpy as np

from adapt_ts.augment import AugmentRngs, NoiseConfig, SpanMaskConfig, augment_sample, sample_span_length
from adapt_ts.pooling import AlignedSample

cfg = SpanMaskConfig()  # p=0.2, spans of 1..10 steps, 80% zeroed / 20% redrawn, 15% of positions

# %% Span lengths: geometric, cut off at l_max and renormalized
print("P(l=k):", np.round(cfg.length_pmf(), 4))
draws = sample_span_length(np.random.default_rng(0), cfg, size=100_000)
print("empirical:", np.round(np.bincount(draws, minlength=11)[1:] / draws.size, 4))

# %% One sample: time and frequency each get their own spans
t = np.linspace(0, 8 * np.pi, 64)
x = np.stack([np.sin(t), np.cos(t)], axis=1)
sample = AlignedSample(x, np.abs(np.fft.fft(x, axis=0)) / 64, 0, "demo")
pair = augment_sample(sample, AugmentRngs.from_seed(0), NoiseConfig(), cfg)

for name, plan in (("time", pair.q_time), ("freq", pair.q_freq)):
    line = "".join("#" if m else "." for m in plan.mask)
    print(f"{name:4s} {line}  ({len(plan.masked)} of {plan.length} masked)")
    for s in plan.spans:
        print(f"      start {s.start:2d} length {s.length:2d} {s.action}")

# targets are the clean values; only masked positions enter the loss
print("target equals clean input:", bool(np.array_equal(pair.target_time, sample.time_repr)))
