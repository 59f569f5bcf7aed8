"""Resizing series of any length and channel count onto one grid.

Run: python demos/01_pooling_walkthrough.py
"""
import numpy as np

from adapt_ts.io import RawSample, normalize_per_channel
from adapt_ts.pooling import adaptive_pool_1d, align_sample, kernel_table, spectral_transform

# %% Kernel layout for 5 inputs onto 3 outputs: neighbouring kernels overlap by one step
for i, start, end, size in kernel_table(5, 3):
    print(f"output {i}: inputs [{start}, {end}) ({size} values)")

print(adaptive_pool_1d([1, 2, 3, 4, 5], 3))  # [1.5 3.  4.5]

# %% Upsampling replicates values instead of interpolating
print(adaptive_pool_1d([10.0, 20.0], 4))  # [10. 10. 20. 20.]

# %% The spectrum of a pure cosine puts 0.5 in its bin (one-sided |DFT| / n)
t = np.arange(16)
spec = spectral_transform(np.cos(2 * np.pi * 4 * t / 16))[:, 0]
print(np.round(spec, 3))

# %% Two very different samples end up the same shape
rng = np.random.default_rng(0)
short_wide = normalize_per_channel(RawSample(rng.normal(size=(128, 9)), 0, "har"))
long_narrow = normalize_per_channel(RawSample(np.sin(np.linspace(0, 60, 5120))[:, None], 1, "fd"))
for s in (short_wide, long_narrow):
    a = align_sample(s, seq_len=256, channels=32)
    print(s.dataset_id, s.shape, "->", a.time_repr.shape, a.freq_repr.shape)

# a single channel is replicated across all 32 output channels
a = align_sample(long_narrow)
print("all columns equal:", bool(np.all(a.time_repr == a.time_repr[:, :1])))
