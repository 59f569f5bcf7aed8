import statistics
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adapt_ts.errors import CorruptionError, FormatError, ValidationError
from adapt_ts.io import (
    DatasetManifest,
    ManifestEntry,
    RawSample,
    decode_samples,
    encode_samples,
    load_dataset,
    load_manifest,
    normalize_dataset,
    normalize_per_channel,
    read_csv_sample,
    read_samples,
    save_manifest,
    write_samples,
)


def _reference_file(samples):
    # byte layout written out by hand, independent of encode_samples
    out = b"ADTS" + struct.pack("<I", 1) + struct.pack("<Q", len(samples))
    for values, label in samples:
        values = np.asarray(values, dtype=np.float32)
        out += struct.pack("<IIi", values.shape[0], values.shape[1], label)
        for row in values:
            for v in row:
                out += struct.pack("<f", float(v))
    return out


def test_single_sample_round_trip(tmp_path):
    path = tmp_path / "one.adts"
    path.write_bytes(_reference_file([(np.array([[1.0], [2.0], [3.0], [4.0]]), 0)]))
    (s,) = read_samples(path)
    assert s.shape == (4, 1)
    assert s.label == 0
    np.testing.assert_array_equal(s.values[:, 0], [1, 2, 3, 4])


def test_empty_file_gives_empty_sequence(tmp_path):
    path = tmp_path / "empty.adts"
    write_samples(path, [])
    assert read_samples(path) == []
    assert path.read_bytes() == _reference_file([])


def test_writer_matches_hand_layout():
    rng = np.random.default_rng(3)
    raw = [(rng.normal(size=(5, 2)), 1), (rng.normal(size=(3, 3)), -1)]
    samples = [RawSample(v.astype(np.float32), None if y < 0 else y) for v, y in raw]
    assert encode_samples(samples) == _reference_file(raw)


def test_hundred_random_samples_round_trip_bytes(tmp_path):
    rng = np.random.default_rng(0)
    samples = [
        RawSample(rng.normal(size=(rng.integers(1, 40), rng.integers(1, 5))).astype(np.float32), int(rng.integers(0, 3)) if k % 3 else None)
        for k in range(100)
    ]
    path = tmp_path / "many.adts"
    write_samples(path, samples)
    back = read_samples(path)
    assert len(back) == 100
    for a, b in zip(samples, back):
        assert a.values.tobytes() == b.values.tobytes()
        assert a.label == b.label
    path2 = tmp_path / "again.adts"
    write_samples(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_bad_magic_and_version():
    good = _reference_file([(np.ones((2, 1)), 0)])
    with pytest.raises(FormatError, match="magic"):
        decode_samples(b"XXXX" + good[4:])
    with pytest.raises(FormatError, match="version"):
        decode_samples(good[:4] + struct.pack("<I", 2) + good[8:])


def test_truncated_payload_and_trailing_bytes():
    good = _reference_file([(np.ones((4, 2)), 0)])
    with pytest.raises(CorruptionError):
        decode_samples(good[:-3])
    with pytest.raises(CorruptionError):
        decode_samples(good + b"\0")
    with pytest.raises(CorruptionError):
        decode_samples(_reference_file([])[:-8] + struct.pack("<Q", 2))


def test_label_beyond_class_count_is_validation_error(tmp_path):
    path = tmp_path / "d.adts"
    path.write_bytes(_reference_file([(np.ones((3, 1)), 0), (np.ones((3, 1)), 2)]))
    entry = ManifestEntry("d", "train", path, 2)
    with pytest.raises(ValidationError, match="label 2"):
        load_dataset(path, entry)


def test_manifest_round_trip_and_uniqueness(tmp_path):
    m = DatasetManifest([ManifestEntry("a", "train", tmp_path / "a.adts", 3), ManifestEntry("a", "test", tmp_path / "b.adts", 3)])
    save_manifest(tmp_path / "m.json", m)
    back = load_manifest(tmp_path / "m.json")
    assert back.entries == m.entries
    with pytest.raises(ValidationError, match="duplicate"):
        DatasetManifest([ManifestEntry("a", "train", tmp_path / "x", 2)] * 2)
    with pytest.raises(ValidationError):
        ManifestEntry("a", "train", tmp_path / "x", 1)
    with pytest.raises(ValidationError):
        ManifestEntry("a", "holdout", tmp_path / "x", 2)


# --------------------------------------------------------------------------- normalization


def test_normalize_hand_example():
    out = normalize_per_channel(RawSample(np.array([[2.0], [4.0], [6.0]])))
    sd = statistics.pstdev([2.0, 4.0, 6.0])
    expected = [(v - 4.0) / sd for v in (2.0, 4.0, 6.0)]
    np.testing.assert_allclose(out.values[:, 0], expected, atol=1e-7)
    np.testing.assert_allclose(out.values[:, 0], [-1.2247, 0.0, 1.2247], atol=1e-4)


def test_constant_channel_maps_to_zero():
    out = normalize_per_channel(RawSample(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])))
    np.testing.assert_array_equal(out.values[:, 0], [0.0, 0.0, 0.0])


def test_single_time_step_is_finite():
    out = normalize_per_channel(RawSample(np.array([[3.0, -1.0]])))
    np.testing.assert_array_equal(out.values, [[0.0, 0.0]])


matrices = arrays(
    np.float64,
    st.tuples(st.integers(2, 30), st.integers(1, 5)),
    elements=st.floats(-1e3, 1e3, allow_nan=False, width=32),
)


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_normalization_properties(x):
    out = normalize_per_channel(RawSample(x)).values
    sd = x.std(axis=0)
    live = sd > 1e-2
    assert np.all(np.abs(out.mean(axis=0)) < 1e-6)
    assert np.all(np.abs(out.std(axis=0)[live] - 1) < 1e-6)
    # idempotence on channels with non-negligible spread
    again = normalize_per_channel(RawSample(out)).values
    np.testing.assert_allclose(again[:, live], out[:, live], atol=1e-6)
    # channel locality
    perm = np.arange(x.shape[1])[::-1]
    np.testing.assert_allclose(normalize_per_channel(RawSample(x[:, perm])).values, out[:, perm], atol=1e-12)


def test_dataset_scope_normalization_pools_statistics():
    a = RawSample(np.array([[0.0], [2.0]]))
    b = RawSample(np.array([[4.0], [6.0]]))
    na, nb = normalize_dataset([a, b])
    pooled = np.concatenate([na.values, nb.values])
    assert abs(pooled.mean()) < 1e-12
    assert abs(pooled.std() - 1) < 1e-6


def test_loading_normalizes_and_tags_dataset(tmp_path):
    path = tmp_path / "d.adts"
    write_samples(path, [RawSample(np.arange(6, dtype=np.float32).reshape(3, 2), 1)])
    (s,) = load_dataset(path, ManifestEntry("ds", "train", path, 2))
    assert s.dataset_id == "ds"
    assert np.allclose(s.values.mean(axis=0), 0)


def test_csv_sample_with_label_and_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# label: 2\nx,y\n1,2\n3,4\n5,6\n")
    s = read_csv_sample(p)
    assert s.label == 2
    np.testing.assert_array_equal(s.values, [[1, 2], [3, 4], [5, 6]])
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    with pytest.raises(FormatError, match="ragged"):
        read_csv_sample(bad)
