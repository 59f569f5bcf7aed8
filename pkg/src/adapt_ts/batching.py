"""Pooled sample store and mixed-batch iteration across datasets."""
from __future__ import annotations

import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .augment import AugmentRngs, MaskedPair, NoiseConfig, SpanMaskConfig, augment_sample
from .errors import AdaptError, ValidationError
from .io import DatasetManifest, ManifestEntry, load_dataset
from .pooling import AlignedSample, align_sample, truncate_sample

# stream tags keep shuffling and per-item augmentation seeds disjoint
_SHUFFLE = 0x5348
_AUGMENT = 0x4147


@dataclass
class AlignedStore:
    time: np.ndarray  # (N, L, C)
    freq: np.ndarray  # (N, L, C)
    labels: np.ndarray  # (N,), -1 where unlabeled
    dataset_ids: list[str]

    def __len__(self) -> int:
        return self.time.shape[0]

    @classmethod
    def from_samples(cls, samples: Sequence[AlignedSample]) -> "AlignedStore":
        if not samples:
            raise ValidationError("cannot build a store from zero samples")
        shapes = {s.shape for s in samples}
        if len(shapes) != 1:
            raise ValidationError(f"aligned samples disagree on shape: {sorted(shapes)}")
        return cls(
            np.stack([s.time_repr for s in samples]),
            np.stack([s.freq_repr for s in samples]),
            np.array([-1 if s.label is None else s.label for s in samples], dtype=np.int64),
            [s.dataset_id for s in samples],
        )

    def sample(self, i: int) -> AlignedSample:
        label = int(self.labels[i])
        return AlignedSample(self.time[i], self.freq[i], None if label < 0 else label, self.dataset_ids[i])

    @property
    def has_labels(self) -> bool:
        return bool(len(self)) and bool(np.all(self.labels >= 0))


@dataclass
class Batch:
    input_time: np.ndarray
    input_freq: np.ndarray
    target_time: np.ndarray
    target_freq: np.ndarray
    mask_time: np.ndarray  # (B, L) bool
    mask_freq: np.ndarray
    labels: np.ndarray
    dataset_ids: list[str]
    indices: np.ndarray

    def __len__(self) -> int:
        return self.input_time.shape[0]


def align_entries(
    entries: Iterable[ManifestEntry],
    seq_len: int,
    channels: int,
    method: str = "pool",
    zscore_spectrum: bool = False,
    scope: str = "sample",
) -> list[AlignedSample]:
    if method not in ("pool", "truncate"):
        raise ValidationError(f"alignment method must be 'pool' or 'truncate', got {method!r}")
    out: list[AlignedSample] = []
    for e in entries:
        try:
            raw = load_dataset(e.path, e, scope=scope)
        except OSError as exc:
            raise type(exc)(f"dataset {e.dataset_id!r}: {exc}") from exc
        except AdaptError as exc:
            raise type(exc)(f"dataset {e.dataset_id!r}: {exc}") from exc
        if method == "pool":
            out.extend(align_sample(s, seq_len, channels, zscore_spectrum) for s in raw)
        else:
            out.extend(truncate_sample(s, seq_len, channels) for s in raw)
    return out


def build_training_set(
    manifests: Sequence[DatasetManifest],
    seq_len: int = 256,
    channels: int = 32,
    split: str = "train",
    method: str = "pool",
    zscore_spectrum: bool = False,
) -> AlignedStore:
    """Load, normalize and align every ``split`` entry of every manifest into one store."""
    if not manifests:
        raise ValidationError("at least one manifest is required")
    samples: list[AlignedSample] = []
    for m in manifests:
        samples.extend(align_entries(m.split(split), seq_len, channels, method, zscore_spectrum, m.scope))
    if not samples:
        raise ValidationError(f"manifests contain no samples for split {split!r}")
    return AlignedStore.from_samples(samples)


def epoch_order(store: AlignedStore, seed: int, epoch: int, balance: bool = False) -> np.ndarray:
    """Sample indices for one epoch.

    Default: a uniform permutation (every sample exactly once). ``balance``
    draws ``len(store)`` items by picking a dataset uniformly, then a sample
    within it uniformly (with replacement).
    """
    rng = np.random.default_rng([seed, epoch, _SHUFFLE])
    n = len(store)
    if not balance:
        return rng.permutation(n)
    ids = np.asarray(store.dataset_ids)
    groups = [np.flatnonzero(ids == d) for d in sorted(set(store.dataset_ids))]
    which = rng.integers(len(groups), size=n)
    return np.array([groups[g][rng.integers(len(groups[g]))] for g in which], dtype=np.int64)


def stack_pairs(pairs: Sequence[MaskedPair], indices: np.ndarray, dtype=np.float32) -> Batch:
    return Batch(
        input_time=np.stack([p.input_time for p in pairs]).astype(dtype),
        input_freq=np.stack([p.input_freq for p in pairs]).astype(dtype),
        target_time=np.stack([p.target_time for p in pairs]).astype(dtype),
        target_freq=np.stack([p.target_freq for p in pairs]).astype(dtype),
        mask_time=np.stack([p.q_time.mask for p in pairs]),
        mask_freq=np.stack([p.q_freq.mask for p in pairs]),
        labels=np.array([-1 if p.label is None else p.label for p in pairs], dtype=np.int64),
        dataset_ids=[p.dataset_id for p in pairs],
        indices=np.asarray(indices),
    )


def iterate_epoch(
    store: AlignedStore,
    seed: int,
    epoch: int,
    batch_size: int,
    noise: NoiseConfig | None = None,
    mask: SpanMaskConfig | None = None,
    noise_enabled: bool = True,
    noisy_targets: bool = False,
    balance: bool = False,
    shuffle: bool = True,
    threads: int = 0,
    dtype=np.float32,
) -> Iterator[Batch]:
    """Yield augmented batches; ``(seed, epoch)`` fixes both composition and augmentation.

    Item ``k`` of the epoch draws its noise/mask from streams keyed on
    ``(seed, epoch, k)``, so results do not depend on ``threads``.
    """
    if len(store) == 0:
        raise ValidationError("store is empty")
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    order = epoch_order(store, seed, epoch, balance) if shuffle else np.arange(len(store))

    def one(k: int) -> MaskedPair:
        rngs = AugmentRngs.from_seed(seed, epoch, k, _AUGMENT)
        return augment_sample(store.sample(int(order[k])), rngs, noise, mask, noise_enabled, noisy_targets)

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for start in range(0, len(order), batch_size):
            ks = range(start, min(start + batch_size, len(order)))
            pairs = list(pool.map(one, ks)) if pool else [one(k) for k in ks]
            yield stack_pairs(pairs, order[start : start + len(pairs)], dtype)
    finally:
        if pool:
            pool.shutdown()


_DONE = object()


def prefetch(batches: Iterable[Batch], capacity: int = 2) -> Iterator[Batch]:
    """Assemble batches on a background thread, at most ``capacity`` ahead of the consumer."""
    q: queue.Queue = queue.Queue(maxsize=capacity)
    stop = threading.Event()

    def producer():
        try:
            for b in batches:
                if stop.is_set():
                    return
                q.put(b)
            q.put(_DONE)
        except BaseException as exc:  # surfaced on the consumer side
            q.put(exc)

    t = threading.Thread(target=producer, daemon=True)
    t.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                break
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        while t.is_alive():
            try:
                q.get_nowait()
            except queue.Empty:
                t.join(0.01)
