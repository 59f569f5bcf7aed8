"""Small mixed-shape labelled corpus for demos and learning-sanity checks.

Four datasets differ in length range and channel count. Class 0 series are
sums of sines, class 1 series are sawtooth waves at the same base frequency,
so the classes differ in harmonic content rather than in scale.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import DatasetManifest, ManifestEntry, RawSample, save_manifest, write_samples

# dataset id -> (min length, max length, channels)
DATASETS = {
    "synth-a": (50, 80, 1),
    "synth-b": (100, 200, 2),
    "synth-c": (250, 400, 3),
    "synth-d": (400, 500, 4),
}


def make_series(rng: np.random.Generator, length: int, channels: int, label: int) -> np.ndarray:
    t = np.arange(length) / length
    out = np.empty((length, channels), dtype=np.float32)
    for c in range(channels):
        # at least three periods, so every series shows several sawtooth resets
        cycles = rng.uniform(3.0, 8.0)
        phase = rng.uniform(0.0, 1.0)
        u = cycles * t + phase
        if label == 0:
            wave = np.sin(2 * np.pi * u) + 0.3 * np.sin(2 * np.pi * 2.0 * u + rng.uniform(0, 2 * np.pi))
        else:
            wave = 2.0 * (u - np.floor(u)) - 1.0
        out[:, c] = rng.uniform(0.5, 2.0) * wave + 0.1 * rng.standard_normal(length)
    return out


def make_dataset(rng: np.random.Generator, dataset_id: str, n: int) -> list[RawSample]:
    lo, hi, channels = DATASETS[dataset_id]
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    return [
        RawSample(make_series(rng, int(rng.integers(lo, hi + 1)), channels, int(y)), int(y), dataset_id)
        for y in labels
    ]


def make_corpus(seed: int = 0, n_train: int = 50, n_test: int = 20) -> dict[str, dict[str, list[RawSample]]]:
    """``{dataset_id: {"train": [...], "test": [...]}}`` with ``n_train``/``n_test`` samples per dataset."""
    rng = np.random.default_rng(seed)
    return {
        d: {"train": make_dataset(rng, d, n_train), "test": make_dataset(rng, d, n_test)}
        for d in DATASETS
    }


def write_corpus(directory: str | Path, seed: int = 0, n_train: int = 50, n_test: int = 20) -> Path:
    """Write one sample file per (dataset, split) plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for d, splits in make_corpus(seed, n_train, n_test).items():
        for split, samples in splits.items():
            path = directory / f"{d}_{split}.adts"
            write_samples(path, samples)
            entries.append(ManifestEntry(d, split, path, 2))
    manifest_path = directory / "manifest.json"
    save_manifest(manifest_path, DatasetManifest(entries))
    return manifest_path
