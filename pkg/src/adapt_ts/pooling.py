"""Adaptive average pooling and the dual time/frequency alignment.

Every output cell ``i`` of an axis resized from ``N`` to ``M`` averages the
input slice ``[floor(i*N/M), ceil((i+1)*N/M))``. Kernels may overlap (and
replicate when ``M > N``) but never leave gaps.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError
from .io import RawSample

ALIGNED_MAGIC = b"ADAL"
ALIGNED_VERSION = 1


@dataclass
class AlignedSample:
    time_repr: np.ndarray
    freq_repr: np.ndarray
    label: int | None = None
    dataset_id: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.time_repr.shape  # type: ignore[return-value]


def kernel_bounds(i: int, m: int, n: int) -> tuple[int, int]:
    """Half-open input range ``[start, end)`` pooled into output cell ``i``."""
    if not 0 <= i < m or n < 1:
        raise ValidationError(f"kernel_bounds needs 0 <= i < m and n >= 1, got i={i}, m={m}, n={n}")
    start = (i * n) // m
    end = ((i + 1) * n + m - 1) // m
    return start, end


def kernel_table(n: int, m: int) -> list[tuple[int, int, int, int]]:
    """Rows of ``(i, start, end, size)`` for auditing a resize from ``n`` to ``m``."""
    rows = []
    for i in range(m):
        start, end = kernel_bounds(i, m, n)
        rows.append((i, start, end, end - start))
    return rows


@lru_cache(maxsize=256)
def _pool_matrix(n: int, m: int) -> np.ndarray:
    # row i holds 1/|K_i| on the kernel columns, so P @ x averages each kernel
    p = np.zeros((m, n))
    for i in range(m):
        start, end = kernel_bounds(i, m, n)
        p[i, start:end] = 1.0 / (end - start)
    p.setflags(write=False)
    return p


def pool_matrix(n: int, m: int) -> np.ndarray:
    if n < 1 or m < 1:
        raise ValidationError(f"pool sizes must be >= 1, got n={n}, m={m}")
    return _pool_matrix(n, m)


def adaptive_pool_1d(values, m: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValidationError(f"adaptive_pool_1d expects a non-empty vector, got shape {v.shape}")
    if m == v.size:
        return v.copy()
    return pool_matrix(v.size, m) @ v


def adaptive_pool_2d(values, m_h: int, m_w: int) -> np.ndarray:
    """Mean over each ``[h0, h1) x [w0, w1)`` kernel rectangle.

    The kernel set is a product of the row and column kernels, so the
    rectangle mean factors as ``P_h @ X @ P_w.T``.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2 or min(x.shape) < 1:
        raise ValidationError(f"adaptive_pool_2d expects a non-empty matrix, got shape {x.shape}")
    n_h, n_w = x.shape
    if m_h != n_h:
        x = pool_matrix(n_h, m_h) @ x
    if m_w != n_w:
        x = x @ pool_matrix(n_w, m_w).T
    return x.copy() if x is values else x


def spectral_transform(values) -> np.ndarray:
    """One-sided DFT magnitude per channel, scaled by 1/length.

    Output has ``length // 2 + 1`` rows.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 1:
        raise ValidationError("spectral_transform needs at least one time step")
    return np.abs(np.fft.rfft(x, axis=0)) / x.shape[0]


def _zscore_columns(x: np.ndarray) -> np.ndarray:
    return (x - x.mean(axis=0)) / (x.std(axis=0) + 1e-8)


def align_sample(
    sample: RawSample, seq_len: int = 256, channels: int = 32, zscore_spectrum: bool = False
) -> AlignedSample:
    values = np.asarray(sample.values, dtype=np.float64)
    spectrum = spectral_transform(values)
    if zscore_spectrum:
        spectrum = _zscore_columns(spectrum)
    return AlignedSample(
        adaptive_pool_2d(values, seq_len, channels),
        adaptive_pool_2d(spectrum, seq_len, channels),
        sample.label,
        sample.dataset_id,
    )


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    k = min(n, x.size)
    out[:k] = x[:k]
    return out


def truncate_sample(sample: RawSample, seq_len: int = 256, channels: int = 32) -> AlignedSample:
    """Baseline alignment without pooling: first channel, truncated or zero-padded to ``seq_len``.

    The spectrum of the fitted channel is fitted the same way. Remaining
    channels are zero.
    """
    first = np.asarray(sample.values, dtype=np.float64)[:, 0]
    t = _fit_length(first, seq_len)
    f = _fit_length(spectral_transform(t)[:, 0], seq_len)
    time_repr = np.zeros((seq_len, channels))
    freq_repr = np.zeros((seq_len, channels))
    time_repr[:, 0] = t
    freq_repr[:, 0] = f
    return AlignedSample(time_repr, freq_repr, sample.label, sample.dataset_id)


# --------------------------------------------------------------------------- aligned file format
# Same header scheme as the sample files, but every sample carries the same
# (seq_len, channels) shape and two payload blocks: time then frequency.

_HEADER = struct.Struct("<4sIQ")
_SAMPLE = struct.Struct("<IIi")


def write_aligned(path: str | Path, samples: Sequence[AlignedSample]) -> None:
    shapes = {s.shape for s in samples}
    if len(shapes) > 1:
        raise ValidationError(f"aligned samples must share one shape, got {sorted(shapes)}")
    parts = [_HEADER.pack(ALIGNED_MAGIC, ALIGNED_VERSION, len(samples))]
    for s in samples:
        length, channels = s.shape
        parts.append(_SAMPLE.pack(length, channels, -1 if s.label is None else int(s.label)))
        parts.append(np.ascontiguousarray(s.time_repr, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(s.freq_repr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_aligned(path: str | Path, dataset_id: str = "") -> list[AlignedSample]:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: file too short for header")
    magic, version, count = _HEADER.unpack_from(buf, 0)
    if magic != ALIGNED_MAGIC or version != ALIGNED_VERSION:
        raise FormatError(f"{path}: not an aligned-sample file (magic {magic!r}, version {version})")
    offset = _HEADER.size
    out = []
    shape = None
    for k in range(count):
        if offset + _SAMPLE.size > len(buf):
            raise CorruptionError(f"{path}: truncated header of sample {k}")
        length, channels, label = _SAMPLE.unpack_from(buf, offset)
        offset += _SAMPLE.size
        if shape is not None and (length, channels) != shape:
            raise FormatError(f"{path}: sample {k} shape {(length, channels)} differs from {shape}")
        shape = (length, channels)
        n = length * channels
        if offset + 8 * n > len(buf):
            raise CorruptionError(f"{path}: truncated payload of sample {k}")
        t = np.frombuffer(buf, "<f4", n, offset).reshape(shape).astype(np.float64)
        f = np.frombuffer(buf, "<f4", n, offset + 4 * n).reshape(shape).astype(np.float64)
        offset += 8 * n
        out.append(AlignedSample(t, f, None if label == -1 else label, dataset_id))
    if offset != len(buf):
        raise CorruptionError(f"{path}: trailing bytes after {count} samples")
    return out
