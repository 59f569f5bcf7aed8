import csv
import warnings

import numpy as np
import pytest
from sklearn.metrics import f1_score, precision_score, recall_score

from adapt_ts.batching import AlignedStore
from adapt_ts.errors import ValidationError
from adapt_ts.evaluation import (
    MetricsReport,
    aggregate_seeds,
    compute_metrics,
    confusion_matrix,
    embedding_rows,
    export_embeddings,
    pearson_r,
    property_correlation,
)
from adapt_ts.io import RawSample
from adapt_ts.model import AdaptModel, ModelConfig
from adapt_ts.pooling import AlignedSample


def test_perfect_predictions():
    r = compute_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert (r.accuracy, r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0, 1.0)


def test_one_of_each_cell():
    # TP, FP, FN, TN for class 1
    pred, true = [1, 1, 0, 0], [1, 0, 1, 0]
    cm = confusion_matrix(np.array(pred), np.array(true), 2)
    np.testing.assert_array_equal(cm, [[1, 1], [1, 1]])
    r = compute_metrics(pred, true, 2)
    assert r.per_class[1] == {"precision": 0.5, "recall": 0.5, "f1": 0.5, "support": 2}
    assert r.accuracy == 0.5


def test_constant_predictor():
    r = compute_metrics([0, 0, 0, 0], [0, 0, 1, 1], 2)
    assert r.accuracy == 0.5
    assert abs(r.f1 - 1 / 3) < 1e-15
    assert r.per_class[1]["precision"] == 0.0


def test_macro_metrics_agree_with_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(20):
        true = rng.integers(0, 4, size=50)
        pred = np.where(rng.random(50) < 0.6, true, rng.integers(0, 4, size=50))
        r = compute_metrics(pred, true, 4)
        kw = dict(average="macro", zero_division=0)
        assert abs(r.precision - precision_score(true, pred, **kw)) < 1e-12
        assert abs(r.recall - recall_score(true, pred, **kw)) < 1e-12
        assert abs(r.f1 - f1_score(true, pred, **kw)) < 1e-12


def test_metric_input_errors():
    with pytest.raises(ValidationError):
        compute_metrics([], [], 2)
    with pytest.raises(ValidationError):
        compute_metrics([0, 2], [0, 1], 2)


def _report(acc):
    return MetricsReport(acc, acc, acc, acc)


def test_seed_aggregation():
    agg = aggregate_seeds([_report(0.9), _report(1.0)])
    assert abs(agg.accuracy - 0.95) < 1e-12 and abs(agg.sd["accuracy"] - 0.05) < 1e-12
    assert agg.formatted("accuracy") == "0.9500 (±0.0500)"
    assert agg.to_dict()["accuracy"]["text"] == "0.9500 (±0.0500)"
    single = aggregate_seeds([_report(0.8)])
    assert single.accuracy == 0.8 and single.sd["accuracy"] == 0.0
    assert aggregate_seeds([_report(0.7)] * 3).sd["f1"] == 0.0
    with pytest.raises(ValidationError):
        aggregate_seeds([])


def test_pearson():
    x = np.arange(10.0)
    assert abs(pearson_r(x, 3 * x + 1) - 1.0) < 1e-12
    rng = np.random.default_rng(1)
    assert abs(pearson_r(rng.normal(size=1000), rng.normal(size=1000))) < 0.1
    with pytest.warns(RuntimeWarning):
        assert np.isnan(pearson_r(x, np.ones(10)))
    rows = [(0.9, 100, 1, 2, 0.5), (0.8, 200, 2, 3, 1.0), (0.7, 300, 3, 2, 2.0)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        corr = property_correlation(rows)
    assert abs(corr["length"] + 1) < 1e-12 and set(corr) >= {"channels", "classes", "train_test_ratio", "total_size"}


def test_pooled_export_shape(tmp_path):
    rng = np.random.default_rng(2)
    store = AlignedStore.from_samples([AlignedSample(rng.normal(size=(256, 32)), rng.normal(size=(256, 32)), k % 2) for k in range(3)])
    n = export_embeddings(tmp_path / "e.csv", "pooled", aligned=store)
    with open(tmp_path / "e.csv") as fh:
        rows = list(csv.reader(fh))
    assert n == 3 and len(rows) == 4
    assert len(rows[1]) == 256 * 32 * 2 + 1
    assert rows[0][-1] == "label" and rows[2][-1] == "1"
    assert float(rows[1][0]) == store.time[0, 0, 0]


def test_raw_and_encoded_export():
    raws = [RawSample(np.ones((5, 2)), 0, "a"), RawSample(np.ones((6, 2)), 1, "a")]
    with pytest.raises(ValidationError, match="sample 1"):
        embedding_rows("raw", raw=raws)
    rows, labels, cols = embedding_rows("raw", raw=raws[:1])
    assert rows.shape == (1, 10) and labels == [0]
    cfg = ModelConfig(seq_len=4, c_in=2, d_model=8, n_layers=1, n_heads=2, ffn_dim=16)
    store = AlignedStore.from_samples([AlignedSample(np.ones((4, 2)), np.ones((4, 2)), 0)])
    rows, _, cols = embedding_rows("encoded", aligned=store, model=AdaptModel(cfg))
    assert rows.shape == (1, 32) == (1, len(cols))
    with pytest.raises(ValidationError):
        embedding_rows("latent", aligned=store)
