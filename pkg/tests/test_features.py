import io
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficgraph.features import (FEATURE_DIM, FeatureConfig, FeatureSequence, TensorFileError,
                                   extract_features, normalize_length, read_tensor_file,
                                   read_tensor_header, resample_indices, sequence_features,
                                   write_tensor_file)
from trafficgraph.ingest import RawSequence


def test_extract_features_oracle(rng):
    img = rng.uniform(size=(56, 56)) * (rng.uniform(size=(56, 56)) > 0.5)
    f = extract_features(img)
    assert f.shape == (FEATURE_DIM,)
    k = 0
    for bi in range(7):
        for bj in range(7):
            block = img[bi * 8:(bi + 1) * 8, bj * 8:(bj + 1) * 8]
            assert f[k] == pytest.approx(block.mean(), abs=1e-15)
            assert f[k + 1] == block.max()
            assert f[k + 2] == (block != 0).sum() / 64
            k += 3


def test_extract_features_constant_images():
    assert not extract_features(np.zeros((56, 56))).any()
    assert np.array_equal(extract_features(np.ones((56, 56))), np.ones(147))


def test_extract_features_single_pixel():
    img = np.zeros((56, 56))
    img[0, 0] = 1.0
    f = extract_features(img)
    assert tuple(f[:3]) == (1 / 64, 1.0, 1 / 64)
    assert not f[3:].any()


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_extract_features_dominance_and_range(seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(size=(56, 56)) * (rng.uniform(size=(56, 56)) > 0.7)
    hi = np.minimum(lo + rng.uniform(0, 0.3, size=lo.shape), 1.0)
    fl, fh = extract_features(lo).reshape(49, 3), extract_features(hi).reshape(49, 3)
    assert np.all(fh[:, :2] >= fl[:, :2])
    assert fl.min() >= 0 and fh.max() <= 1


def test_extract_features_shape_errors():
    with pytest.raises(ValueError):
        extract_features(np.zeros((50, 50)))
    with pytest.raises(ValueError):
        extract_features(np.zeros((56, 28)))


@given(st.integers(1, 300), st.integers(2, 80))
def test_resample_indices(length, T):
    idx = resample_indices(length, T)
    # exact rationals avoid float ties
    exact = [int(Fraction(i * (length - 1), T - 1) + Fraction(1, 2)) for i in range(T)]
    assert list(idx) == exact
    assert idx[0] == 0 and idx[-1] == length - 1
    assert np.all(np.diff(idx) >= 0)


@given(st.integers(1, 120), st.integers(1, 60))
def test_normalize_length(n, T):
    seq = np.arange(n * 2, dtype=float).reshape(n, 2)
    out = normalize_length(seq, T)
    assert out.shape == (T, 2)
    if n >= T and T > 1:
        assert np.array_equal(out[0], seq[0]) and np.array_equal(out[-1], seq[-1])
    if n < T:
        assert np.array_equal(out[:n], seq)
        assert np.all(out[n:] == seq[-1])


def test_normalize_examples():
    seq = np.arange(99, dtype=float)[:, None]
    np.testing.assert_array_equal(normalize_length(seq, 50)[:, 0], np.arange(0, 99, 2))
    one = np.array([[3.0, 4.0]])
    np.testing.assert_array_equal(normalize_length(one, 50), np.repeat(one, 50, axis=0))


def test_normalize_identity():
    seq = np.random.default_rng(0).normal(size=(50, 3))
    assert np.array_equal(normalize_length(seq, 50), seq)


def test_normalize_empty():
    with pytest.raises(ValueError):
        normalize_length(np.zeros((0, 3)), 5)


def _raw(n_frames=12, n_users=6):
    rng = np.random.default_rng(7)
    frames = [(k / 5, [(i, *rng.uniform(0, 8, 2)) for i in range(n_users)]) for k in range(n_frames)]
    return RawSequence("A:1c", "clumping", frames, n_users, 0.0, (n_frames - 1) / 5)


def test_sequence_features_shape():
    fs = sequence_features(_raw())
    assert fs.steps.shape == (50, FEATURE_DIM)
    assert fs.key == _raw().key
    assert fs.label_index == 1


def test_sequence_features_custom_extractor():
    cfg = FeatureConfig(frames=8)
    fs = sequence_features(_raw(), cfg, extractor=lambda img: np.array([img.sum()]))
    assert fs.steps.shape == (8, 1)


def test_sequence_features_capacity():
    with pytest.raises(ValueError):
        sequence_features(_raw(n_users=12), FeatureConfig(canvas_n=10, img_size=7))


def _seqs(rng, n=3, T=4, F=5):
    return [FeatureSequence(lab, f"R{i}:1n", rng.normal(size=(T, F)), f"R{i}:1n@{i}.0")
            for i, lab in zip(range(n), ["neutral", "clumping", "unclumping"] * 3)]


def test_tensor_round_trip(rng):
    seqs = _seqs(rng)
    buf = io.BytesIO()
    write_tensor_file(buf, seqs)
    data = buf.getvalue()
    assert data[:4] == b"TGFT"
    assert struct.unpack("<5i", data[:20])[2:] == (3, 4, 5)
    buf.seek(0)
    back = read_tensor_file(buf)
    for a, b in zip(seqs, back):
        assert (a.label, a.key) == (b.label, b.key)
        assert np.array_equal(a.steps, b.steps)
    buf.seek(0)
    assert read_tensor_header(buf)[2:] == (3, 4, 5)


def test_tensor_layout(rng):
    (s,) = _seqs(rng, n=1, T=2, F=2)
    buf = io.BytesIO()
    write_tensor_file(buf, [s])
    body = buf.getvalue()[20:]
    name = s.key.encode()
    assert body[0] == 0
    assert struct.unpack("<I", body[1:5])[0] == len(name)
    assert body[5:5 + len(name)] == name
    assert np.array_equal(np.frombuffer(body[5 + len(name):], "<f8"), s.steps.ravel())


def test_tensor_empty():
    buf = io.BytesIO()
    write_tensor_file(buf, [], T=50, F=FEATURE_DIM)
    buf.seek(0)
    assert read_tensor_file(buf) == []


@pytest.mark.parametrize("mutate", [
    lambda d: b"XXXX" + d[4:],
    lambda d: d[:-3],
    lambda d: d[:4] + struct.pack("<i", 9) + d[8:],
])
def test_tensor_corrupt(rng, mutate):
    buf = io.BytesIO()
    write_tensor_file(buf, _seqs(rng))
    with pytest.raises(TensorFileError):
        read_tensor_file(io.BytesIO(mutate(buf.getvalue())))
