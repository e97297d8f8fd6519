import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jellybench.feature_cache import (
    FEATURES_FILE,
    LABELS_FILE,
    META_FILE,
    CacheError,
    FeatureMatrix,
    load_feature_cache,
    save_feature_cache,
)


def _fm(data, labels=None, name="MobileNetV3"):
    data = np.asarray(data, dtype=np.float32)
    labels = np.zeros(len(data), dtype=np.int64) if labels is None else labels
    return FeatureMatrix(data, labels, name, data.shape[1], "abc123")


def test_known_constants_elementwise(tmp_path):
    src = np.arange(12, dtype=np.float32).reshape(3, 4) / 7.0 - 0.5
    save_feature_cache(_fm(src, np.array([0, 5, 2])), tmp_path / "c")
    out = load_feature_cache(tmp_path / "c")
    for i in range(3):
        for j in range(4):
            assert out.data[i, j] == src[i, j]
    assert out.labels.tolist() == [0, 5, 2]


def test_file_layout(tmp_path):
    d = save_feature_cache(_fm(np.ones((2, 3))), tmp_path / "c")
    meta = json.loads((d / META_FILE).read_text())
    assert {"backbone", "feature_dim", "n", "label_names", "sample_order_digest", "created_at"} <= set(meta)
    assert (d / FEATURES_FILE).stat().st_size == 2 * 3 * 4
    assert (d / LABELS_FILE).stat().st_size == 2
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]  # no leftover temp dirs


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(0, 20), st.integers(1, 16)),
              elements=st.floats(width=32, allow_nan=False, allow_infinity=False)),
       st.integers(0, 2**31))
def test_round_trip_is_byte_exact(tmp_path_factory, data, seed):
    labels = np.random.default_rng(seed).integers(0, 6, len(data))
    fm = _fm(data, labels, "ResNet50")
    out = load_feature_cache(save_feature_cache(fm, tmp_path_factory.mktemp("c") / "c"))
    assert out.data.tobytes() == fm.data.tobytes()
    assert np.array_equal(out.labels, fm.labels)
    assert (out.backbone, out.feature_dim, out.sample_order_digest) == ("ResNet50", data.shape[1], "abc123")


def test_truncation_detected(tmp_path):
    d = save_feature_cache(_fm(np.ones((4, 5))), tmp_path / "c")
    payload = (d / FEATURES_FILE).read_bytes()
    (d / FEATURES_FILE).write_bytes(payload[:-1])
    with pytest.raises(CacheError, match="payload size mismatch"):
        load_feature_cache(d)


def test_bit_flip_detected(tmp_path):
    d = save_feature_cache(_fm(np.ones((4, 5))), tmp_path / "c")
    payload = bytearray((d / FEATURES_FILE).read_bytes())
    payload[7] ^= 1
    (d / FEATURES_FILE).write_bytes(bytes(payload))
    with pytest.raises(CacheError, match="digest mismatch"):
        load_feature_cache(d)


def test_dimension_mismatch_detected(tmp_path):
    d = save_feature_cache(_fm(np.ones((4, 5))), tmp_path / "c")
    meta = json.loads((d / META_FILE).read_text())
    meta["feature_dim"] = 4
    (d / META_FILE).write_text(json.dumps(meta))
    with pytest.raises(CacheError):
        load_feature_cache(d)


def test_missing_file(tmp_path):
    d = save_feature_cache(_fm(np.ones((1, 2))), tmp_path / "c")
    (d / LABELS_FILE).unlink()
    with pytest.raises(CacheError, match="missing"):
        load_feature_cache(d)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        _fm(np.array([[1.0, np.nan]]))
