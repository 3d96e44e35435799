import gzip
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lintrain.data import (Dataset, corrupt_labels, load_idx, min_pairwise_sq_distance,
                           synthesize, write_idx)


def _brute_gamma(X):
    n = X.shape[1]
    return min(float(np.sum((X[:, i] - X[:, j]) ** 2)) for i in range(n) for j in range(i + 1, n))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(2, 6), st.integers(0, 1000))
def test_synthesized_datasets_satisfy_contract(n, m_x, seed):
    ds = synthesize(n, m_x, 3, "random", seed=seed)
    assert np.all(np.abs(np.linalg.norm(ds.X, axis=0) - 1) <= 1e-12)
    assert np.all(np.abs(ds.Y) <= 1)
    assert ds.gamma == _brute_gamma(ds.X)
    assert ds.separated


def test_duplicate_collisions_exhaust_retries():
    # on the 0-sphere only +1 and -1 exist, so three inputs always collide
    with pytest.raises(RuntimeError, match="distinct"):
        synthesize(3, 1, 2, "random", seed=0)


def test_gamma_antipodal_pair():
    X = np.array([[1.0, -1.0], [0.0, 0.0]])
    assert Dataset(X, np.zeros((1, 2))).gamma == 4.0


def test_gamma_matches_brute_force():
    X = synthesize(60, 5, 2, "random", seed=3).X
    assert min_pairwise_sq_distance(X) == _brute_gamma(X)


def test_contract_violations_rejected():
    with pytest.raises(ValueError):
        Dataset(np.array([[2.0, 1.0]]), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        Dataset(np.array([[1.0, 1.0]]), np.array([[0.0, 1.5]]))
    with pytest.raises(ValueError):
        synthesize(1, 3, 2)


def test_synthesize_deterministic_and_streams_differ():
    a, b = synthesize(30, 4, 3, seed=5), synthesize(30, 4, 3, seed=5)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.labels, b.labels)
    c = synthesize(30, 4, 3, seed=5, stream=1)
    assert not np.array_equal(a.X, c.X)


def test_separable_labels_follow_shared_teacher():
    a = synthesize(200, 6, 3, "separable", seed=1)
    b = synthesize(200, 6, 3, "separable", seed=1, stream=1)
    # one linear rule labels both sets: a perceptron-free check via least squares
    V, *_ = np.linalg.lstsq(a.X.T, np.eye(3)[a.labels] - 1 / 3, rcond=None)
    agree = np.mean(np.argmax(b.X.T @ V, axis=1) == b.labels)
    assert agree > 0.8


def test_random_labels_uniform_multinomial():
    ds = synthesize(50, 4, 10, "random", seed=2)
    counts = np.bincount(ds.labels, minlength=10)
    sigma = math.sqrt(50 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 5) <= 3 * sigma)
    # pooled over seeds, a chi-square goodness-of-fit test
    pooled = sum(np.bincount(synthesize(50, 4, 10, "random", seed=s).labels, minlength=10)
                 for s in range(40))
    assert stats.chisquare(pooled).pvalue > 1e-3


def test_corruption_no_op_and_full():
    ds = synthesize(500, 4, 10, "random", seed=0)
    same = corrupt_labels(ds, 0.0, seed=1)
    assert np.array_equal(same.labels, ds.labels) and not same.corruption_mask.any()
    full = corrupt_labels(ds, 1.0, seed=1)
    assert full.corruption_mask.all()
    agree = np.mean(full.labels == ds.labels)
    assert abs(agree - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / 500)
    assert full.provenance == "corrupted"
    with pytest.raises(ValueError):
        corrupt_labels(ds, 1.5, seed=0)


def test_corruption_binomial_fraction():
    ds = synthesize(1000, 4, 10, "random", seed=0)
    changed = np.mean(corrupt_labels(ds, 0.5, seed=3).labels != ds.labels)
    sd = math.sqrt(0.45 * 0.55 / 1000)
    assert abs(changed - 0.45) <= 3 * sd


def test_csv_round_trip(tmp_path):
    ds = synthesize(12, 3, 4, seed=8)
    ds.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.labels, ds.labels)
    assert (tmp_path / "d.csv").read_text().count("\n") == 13


# -- IDX

def _write_pair(tmp_path, images, labels, gz=False):
    ext = ".gz" if gz else ""
    ip, lp = tmp_path / f"img.idx{ext}", tmp_path / f"lab.idx{ext}"
    write_idx(ip, images)
    write_idx(lp, labels)
    return ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_idx_round_trip(tmp_path, gz):
    rng = np.random.default_rng(0)
    images = rng.integers(1, 256, (70, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, 70, dtype=np.uint8)
    ip, lp = _write_pair(tmp_path, images, labels, gz)
    ds = load_idx(ip, lp, limit=64)
    assert (ds.n, ds.m_x, ds.m_y) == (64, 784, 10)
    assert ds.provenance == "idx-file"
    assert np.array_equal(ds.labels, labels[:64])
    flat = images[:64].reshape(64, -1).T.astype(float)
    assert np.allclose(ds.X, flat / np.linalg.norm(flat, axis=0), rtol=1e-15)
    assert set(np.unique(ds.Y)) <= {0.0, 1.0}


def test_idx_header_is_big_endian(tmp_path):
    write_idx(tmp_path / "l.idx", np.arange(3, dtype=np.uint8))
    raw = (tmp_path / "l.idx").read_bytes()
    assert struct.unpack(">II", raw[:8]) == (0x801, 3)


def test_idx_errors(tmp_path):
    images = np.full((3, 2, 2), 7, dtype=np.uint8)
    labels = np.array([1, 2, 3], dtype=np.uint8)
    ip, lp = _write_pair(tmp_path, images, labels)
    with pytest.raises(ValueError, match="only 3"):
        load_idx(ip, lp, limit=5)
    with pytest.raises(ValueError, match="magic"):
        load_idx(lp, lp)
    (tmp_path / "trunc").write_bytes(ip.read_bytes()[:-3])
    with pytest.raises(ValueError, match="truncated"):
        load_idx(tmp_path / "trunc", lp)
    write_idx(tmp_path / "badlab", np.array([1, 12, 3], dtype=np.uint8))
    with pytest.raises(ValueError, match="outside"):
        load_idx(ip, tmp_path / "badlab")
    zero = images.copy()
    zero[1] = 0
    write_idx(tmp_path / "zero", zero)
    with pytest.raises(ValueError, match="all zeros"):
        load_idx(tmp_path / "zero", lp)


def test_idx_gzip_detected_by_suffix(tmp_path):
    images = np.full((2, 2, 2), 5, dtype=np.uint8)
    labels = np.array([0, 1], dtype=np.uint8)
    ip, lp = _write_pair(tmp_path, images, labels, gz=True)
    with gzip.open(ip, "rb") as fh:
        assert struct.unpack(">I", fh.read(4))[0] == 0x803
