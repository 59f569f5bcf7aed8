"""Classification metrics, seed aggregation, embedding export and property correlation."""
from __future__ import annotations

import csv
import math
import statistics
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

METRICS = ("accuracy", "precision", "recall", "f1")


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict[int, dict[str, float]] = field(default_factory=dict)
    n_seeds: int = 1
    sd: dict[str, float] = field(default_factory=lambda: dict.fromkeys(METRICS, 0.0))

    def mean(self, metric: str) -> float:
        return getattr(self, metric)

    def formatted(self, metric: str, digits: int = 4) -> str:
        """``mean (±sd)``, the notation used for seed-repeated results."""
        return f"{getattr(self, metric):.{digits}f} (±{self.sd[metric]:.{digits}f})"

    def to_dict(self) -> dict:
        return {
            "n_seeds": self.n_seeds,
            **{m: {"mean": getattr(self, m), "sd": self.sd[m], "text": self.formatted(m)} for m in METRICS},
            "per_class": {str(k): v for k, v in self.per_class.items()},
        }


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def compute_metrics(predictions, labels, n_classes: int) -> MetricsReport:
    """Accuracy plus macro precision/recall/F1.

    A class with no predicted positives gets precision 0. Classes absent from
    both predictions and labels are left out of the macro means.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValidationError(f"predictions and labels must be equal-length vectors, got {pred.shape} and {true.shape}")
    if pred.size == 0:
        raise ValidationError("cannot compute metrics on zero samples")
    for name, arr in (("labels", true), ("predictions", pred)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValidationError(f"{name} must lie in [0, {n_classes})")
    cm = confusion_matrix(pred, true, n_classes)
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    per_class = {}
    for c in range(n_classes):
        if predicted[c] == 0 and actual[c] == 0:
            continue
        p = tp[c] / predicted[c] if predicted[c] else 0.0
        r = tp[c] / actual[c] if actual[c] else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        per_class[c] = {"precision": p, "recall": r, "f1": f, "support": int(actual[c])}
    return MetricsReport(
        accuracy=float(tp.sum() / pred.size),
        precision=float(np.mean([v["precision"] for v in per_class.values()])),
        recall=float(np.mean([v["recall"] for v in per_class.values()])),
        f1=float(np.mean([v["f1"] for v in per_class.values()])),
        per_class=per_class,
    )


def aggregate_seeds(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean and population sd of each metric across seed repetitions."""
    if not reports:
        raise ValidationError("no reports to aggregate")
    # statistics works in exact rationals, so identical reports give sd exactly 0
    values = {m: [float(getattr(r, m)) for r in reports] for m in METRICS}
    return MetricsReport(
        **{m: statistics.fmean(v) for m, v in values.items()},
        per_class={},
        n_seeds=len(reports),
        sd={m: statistics.pstdev(v) for m, v in values.items()},
    )


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValidationError("pearson_r needs two equal-length vectors of at least 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0:
        warnings.warn("Pearson r undefined for a constant input; returning NaN", RuntimeWarning, stacklevel=2)
        return float("nan")
    return float(dx @ dy) / denom


def property_correlation(results: Sequence[tuple[float, float, float, float, float]]) -> dict[str, float]:
    """Pearson r between accuracy and each dataset property.

    Each row is ``(accuracy, length, channels, classes, train_test_ratio)``;
    ``total_size`` (length * channels) is reported too.
    """
    rows = np.asarray(results, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 5:
        raise ValidationError("expected rows of (accuracy, length, channels, classes, train_test_ratio)")
    acc = rows[:, 0]
    props = {
        "length": rows[:, 1],
        "channels": rows[:, 2],
        "classes": rows[:, 3],
        "train_test_ratio": rows[:, 4],
        "total_size": rows[:, 1] * rows[:, 2],
    }
    return {name: pearson_r(acc, col) for name, col in props.items()}


def write_embeddings(path: str | Path, rows: np.ndarray, labels, columns: Sequence[str]) -> int:
    """Comma-separated table with a header row; the last column is ``label`` (-1 when unknown)."""
    rows = np.asarray(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(columns) + ["label"])
        for row, label in zip(rows, labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])
    return rows.shape[0]


def embedding_rows(stage: str, raw=None, aligned=None, model=None, batch_size: int = 64):
    """Flattened per-sample representations for ``stage`` in {raw, pooled, encoded}.

    Returns ``(rows, labels, column_names)``.
    ``raw``: (length*channels) values, time-major; every sample must share one shape.
    ``pooled``: time block then frequency block, each (L*C) time-major.
    ``encoded``: encoder output (L*d_model), time-major.
    """
    if stage == "raw":
        if not raw:
            raise ValidationError("no raw samples to export")
        ref = raw[0].shape
        for k, s in enumerate(raw):
            if s.shape != ref:
                raise ValidationError(
                    f"stage=raw needs one shape per dataset; sample {k} of {s.dataset_id!r} has shape {s.shape}, expected {ref}"
                )
        rows = np.stack([np.asarray(s.values, dtype=np.float64).ravel() for s in raw])
        labels = [-1 if s.label is None else s.label for s in raw]
        cols = [f"x_{t}_{c}" for t in range(ref[0]) for c in range(ref[1])]
        return rows, labels, cols
    if aligned is None or len(aligned) == 0:
        raise ValidationError("no aligned samples to export")
    length, channels = aligned.time.shape[1:]
    if stage == "pooled":
        rows = np.concatenate([aligned.time.reshape(len(aligned), -1), aligned.freq.reshape(len(aligned), -1)], axis=1)
        cols = [f"{d}_{t}_{c}" for d in "tf" for t in range(length) for c in range(channels)]
        return rows, aligned.labels.tolist(), cols
    if stage == "encoded":
        if model is None:
            raise ValidationError("stage=encoded needs a model checkpoint")
        chunks = []
        for s in range(0, len(aligned), batch_size):
            e = model.forward(aligned.time[s : s + batch_size], aligned.freq[s : s + batch_size])
            chunks.append(e.reshape(e.shape[0], -1))
        d = model.config.d_model
        cols = [f"e_{t}_{k}" for t in range(length) for k in range(d)]
        return np.concatenate(chunks), aligned.labels.tolist(), cols
    raise ValidationError(f"stage must be raw, pooled or encoded, got {stage!r}")


def export_embeddings(path: str | Path, stage: str, raw=None, aligned=None, model=None) -> int:
    rows, labels, cols = embedding_rows(stage, raw, aligned, model)
    return write_embeddings(path, rows, labels, cols)
