"""Binary sample files, dataset manifests and per-channel normalization.

Sample file layout (little-endian)::

    b"ADTS" | version u32 (=1) | count u64
    per sample: length u32 | channels u32 | label i32 (-1 = unlabeled)
                length*channels float32, time-major

The manifest is a JSON document listing ``(dataset_id, split, path, n_classes)``
entries; relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

MAGIC = b"ADTS"
VERSION = 1
SPLITS = ("train", "val", "test")
NORM_EPS = 1e-8

_FILE_HEADER = struct.Struct("<4sIQ")
_SAMPLE_HEADER = struct.Struct("<IIi")


@dataclass
class RawSample:
    """One variable-shape series, ``values`` has shape (length, channels)."""

    values: np.ndarray
    label: int | None = None
    dataset_id: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValidationError(
                f"sample values must be a non-empty (length, channels) matrix, got shape {self.values.shape}"
            )
        if self.label is not None and self.label < 0:
            raise ValidationError(f"label must be non-negative, got {self.label}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class ManifestEntry:
    dataset_id: str
    split: str
    path: Path
    n_classes: int | None = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValidationError(f"{self.dataset_id}: split must be one of {SPLITS}, got {self.split!r}")
        if self.n_classes is not None and self.n_classes < 2:
            raise ValidationError(f"{self.dataset_id}: declared class count must be >= 2, got {self.n_classes}")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    normalization: str = "zscore-per-channel"
    # "sample" (default) or "dataset": scope of the normalization statistics
    scope: str = "sample"

    def __post_init__(self) -> None:
        if self.normalization != "zscore-per-channel":
            raise ValidationError(f"unsupported normalization {self.normalization!r}")
        if self.scope not in ("sample", "dataset"):
            raise ValidationError(f"normalization scope must be 'sample' or 'dataset', got {self.scope!r}")
        seen = set()
        for e in self.entries:
            key = (e.dataset_id, e.split)
            if key in seen:
                raise ValidationError(f"duplicate manifest entry for dataset {e.dataset_id!r} split {e.split!r}")
            seen.add(key)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]


# --------------------------------------------------------------------------- binary format


def write_samples(path: str | Path, samples: Sequence[RawSample]) -> None:
    Path(path).write_bytes(encode_samples(samples))


def encode_samples(samples: Sequence[RawSample]) -> bytes:
    parts = [_FILE_HEADER.pack(MAGIC, VERSION, len(samples))]
    for s in samples:
        length, channels = s.shape
        label = -1 if s.label is None else int(s.label)
        parts.append(_SAMPLE_HEADER.pack(length, channels, label))
        parts.append(np.ascontiguousarray(s.values, dtype="<f4").tobytes())
    return b"".join(parts)


def read_samples(path: str | Path, dataset_id: str = "") -> list[RawSample]:
    """Decode a sample file without any normalization or label validation."""
    return decode_samples(Path(path).read_bytes(), dataset_id=dataset_id, source=str(path))


def decode_samples(buf: bytes, dataset_id: str = "", source: str = "<bytes>") -> list[RawSample]:
    if len(buf) < _FILE_HEADER.size:
        raise FormatError(f"{source}: file too short for header ({len(buf)} bytes)")
    magic, version, count = _FILE_HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported format version {version}")
    offset = _FILE_HEADER.size
    out: list[RawSample] = []
    for k in range(count):
        if offset + _SAMPLE_HEADER.size > len(buf):
            raise CorruptionError(f"{source}: truncated header of sample {k} (declared {count} samples)")
        length, channels, label = _SAMPLE_HEADER.unpack_from(buf, offset)
        offset += _SAMPLE_HEADER.size
        if length < 1 or channels < 1:
            raise FormatError(f"{source}: sample {k} has empty shape ({length}, {channels})")
        if label < -1:
            raise FormatError(f"{source}: sample {k} has invalid label {label}")
        nbytes = 4 * length * channels
        if offset + nbytes > len(buf):
            raise CorruptionError(f"{source}: truncated payload of sample {k}")
        values = np.frombuffer(buf, dtype="<f4", count=length * channels, offset=offset)
        offset += nbytes
        out.append(
            RawSample(
                values.reshape(length, channels).astype(np.float32),
                None if label == -1 else label,
                dataset_id,
            )
        )
    if offset != len(buf):
        raise CorruptionError(f"{source}: {len(buf) - offset} trailing bytes after {count} samples")
    return out


# --------------------------------------------------------------------------- normalization


def normalize_per_channel(sample: RawSample) -> RawSample:
    """Z-score each channel over time with population sd; constant channels become zeros."""
    x = np.asarray(sample.values, dtype=np.float64)
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    return RawSample((x - mean) / (sd + NORM_EPS), sample.label, sample.dataset_id)


def normalize_dataset(samples: Sequence[RawSample]) -> list[RawSample]:
    """Dataset-scope alternative: statistics pooled over every sample's time axis."""
    if not samples:
        return []
    channels = {s.shape[1] for s in samples}
    if len(channels) != 1:
        raise ValidationError(f"dataset-scope normalization needs equal channel counts, got {sorted(channels)}")
    stacked = np.concatenate([np.asarray(s.values, dtype=np.float64) for s in samples], axis=0)
    mean = stacked.mean(axis=0)
    sd = stacked.std(axis=0)
    return [
        RawSample((np.asarray(s.values, dtype=np.float64) - mean) / (sd + NORM_EPS), s.label, s.dataset_id)
        for s in samples
    ]


# --------------------------------------------------------------------------- manifests


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: manifest is not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "entries" not in doc:
        raise FormatError(f"{path}: manifest must be an object with an 'entries' list")
    entries = []
    for raw in doc["entries"]:
        try:
            p = Path(raw["path"])
            entries.append(
                ManifestEntry(
                    dataset_id=str(raw["dataset_id"]),
                    split=str(raw.get("split", "train")),
                    path=p if p.is_absolute() else path.parent / p,
                    n_classes=raw.get("n_classes"),
                )
            )
        except KeyError as exc:
            raise FormatError(f"{path}: manifest entry missing field {exc}") from exc
    return DatasetManifest(
        entries=entries,
        normalization=doc.get("normalization", "zscore-per-channel"),
        scope=doc.get("scope", "sample"),
    )


def save_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    path = Path(path)
    entries = []
    for e in manifest.entries:
        try:
            p = e.path.relative_to(path.parent)
        except ValueError:
            p = e.path
        entries.append({"dataset_id": e.dataset_id, "split": e.split, "path": str(p), "n_classes": e.n_classes})
    doc = {"normalization": manifest.normalization, "scope": manifest.scope, "entries": entries}
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_dataset(
    path: str | Path, entry: ManifestEntry, normalize: bool = True, scope: str = "sample"
) -> list[RawSample]:
    """Read one dataset file, check labels against the declared class count and normalize."""
    samples = read_samples(path, dataset_id=entry.dataset_id)
    for k, s in enumerate(samples):
        if s.label is not None and entry.n_classes is not None and s.label >= entry.n_classes:
            raise ValidationError(
                f"{entry.dataset_id}: sample {k} has label {s.label} >= declared class count {entry.n_classes}"
            )
        if not np.all(np.isfinite(s.values)):
            raise ValidationError(f"{entry.dataset_id}: sample {k} contains NaN or Inf")
    if not normalize:
        return samples
    if scope == "dataset":
        return normalize_dataset(samples)
    return [normalize_per_channel(s) for s in samples]


def load_entries(entries: Iterable[ManifestEntry], normalize: bool = True, scope: str = "sample") -> list[RawSample]:
    out: list[RawSample] = []
    for e in entries:
        out.extend(load_dataset(e.path, e, normalize=normalize, scope=scope))
    return out


# --------------------------------------------------------------------------- CSV conversion


def read_csv_sample(path: str | Path) -> RawSample:
    """Parse one CSV series: one column per channel, optional ``# label: k`` comment, optional header row."""
    path = Path(path)
    label = None
    rows: list[list[float]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            first = row[0].strip()
            if first.startswith("#"):
                body = ",".join(row).lstrip("#").strip()
                key, sep, value = body.replace("=", ":").partition(":")
                if sep and key.strip().lower() == "label":
                    label = int(value.strip())
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise FormatError(f"{path}:{lineno}: non-numeric value in data row") from None
                continue  # header row
    if not rows:
        raise FormatError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: ragged rows (column counts {sorted(widths)})")
    return RawSample(np.asarray(rows, dtype=np.float32), label, path.stem)
