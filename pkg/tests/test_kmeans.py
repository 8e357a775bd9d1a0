import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csifb.counting import MulCounter
from csifb.errors import ConfigurationError, TrainingError
from csifb.kmeans import (Codebook, KmeansCodec, KmeansScheme, build_training_vectors,
                          compress_codebook, compressed_codebook_bits, decompress_codebook,
                          flatten_q, kmeans_cbr_bits, kmeans_decode_cbr, kmeans_encode_cbr,
                          nearest_codeword, nearest_codewords, train_codebook, unflatten_q,
                          vector_length)
from csifb.steering import orthonormality_error

from conftest import random_steering


def brute_nearest(v, c):
    best, best_d = 0, np.inf
    for k in range(c.shape[0]):
        d = float(((v - c[k]) ** 2).sum())
        if d < best_d:
            best, best_d = k, d
    return best


def wcss(x, c):
    d = ((x[:, None, :] - c[None]) ** 2).sum(-1)
    return d.min(1).sum()


def test_scheme_parse():
    assert KmeansScheme.parse("joint") is KmeansScheme.JOINT_ANGLES
    assert KmeansScheme.parse(2) is KmeansScheme.SPLIT_ANGLES
    assert KmeansScheme.parse("steering") is KmeansScheme.STEERING_MATRIX
    with pytest.raises(ConfigurationError):
        KmeansScheme.parse("bogus")


def test_vector_lengths_and_counts(rng):
    assert vector_length("joint", 8, 2) == 26
    assert vector_length("split", 8, 2) == 13
    assert vector_length("steering", 8, 2) == 30
    q = random_steering(rng, 10, 8, 2)
    assert build_training_vectors(q, "joint").shape == (10, 26)
    assert build_training_vectors(q, "split").shape == (20, 13)
    assert build_training_vectors(q, "steering").shape == (10, 30)


def test_flatten_round_trip(rng):
    q = random_steering(rng, 50, 8, 2)
    v = flatten_q(q)
    assert v.shape == (50, 30)
    assert np.allclose(unflatten_q(v, 8, 2), q)


def test_square_corners_global_optimum():
    # four tight clusters at the corners of a square
    rng = np.random.default_rng(1)
    corners = np.array([[0, 0], [0, 10], [10, 0], [10, 10]], float)
    x = np.concatenate([c + 0.1 * rng.standard_normal((25, 2)) for c in corners])
    cents, hist = train_codebook(x, 2, seed=3)
    # brute force over all 4^n assignments is too big; optimal labels are the
    # generating corners, so compare to their WCSS
    opt = sum(((x[i * 25:(i + 1) * 25] - x[i * 25:(i + 1) * 25].mean(0)) ** 2).sum()
              for i in range(4))
    assert hist[-1] == pytest.approx(opt, rel=1e-9)
    assert wcss(x, cents) == pytest.approx(opt, rel=1e-9)


def test_tiny_problem_matches_exhaustive_partition():
    # 6 points in 1-D, 2 clusters: enumerate every 2-partition
    x = np.array([[0.0], [0.3], [1.0], [4.0], [4.2], [9.0]])
    best = np.inf
    for labels in itertools.product([0, 1], repeat=6):
        labels = np.array(labels)
        if labels.min() == labels.max():
            continue
        cost = sum(((x[labels == k] - x[labels == k].mean()) ** 2).sum() for k in (0, 1))
        best = min(best, cost)
    found = min(train_codebook(x, 1, seed=s)[1][-1] for s in range(10))
    assert found == pytest.approx(best)


def test_n_v_equals_n_k_gives_zero_wcss(rng):
    x = rng.standard_normal((16, 5))
    cents, hist = train_codebook(x, 4)
    assert hist[-1] == pytest.approx(0.0, abs=1e-20)
    assert sorted(map(tuple, cents)) == sorted(map(tuple, x))


def test_too_few_vectors():
    with pytest.raises(TrainingError):
        train_codebook(np.zeros((7, 3)), 3)


@pytest.mark.parametrize("run", range(100))
def test_wcss_non_increasing(run):
    rng = np.random.default_rng(run)
    n = int(rng.integers(40, 200))
    x = rng.standard_normal((n, int(rng.integers(2, 8)))) * rng.uniform(0.1, 5)
    _, hist = train_codebook(x, int(rng.integers(1, 5)), seed=run)
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_duplicate_points_handle_empty_clusters():
    x = np.repeat(np.array([[0.0, 0.0], [1.0, 1.0]]), 20, axis=0)
    cents, hist = train_codebook(x, 2, seed=0)
    assert np.all(np.isfinite(cents))
    assert hist[-1] == pytest.approx(0.0)


def test_nearest_codeword_matches_exhaustive_scan():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        m = int(rng.integers(1, 12))
        c = rng.standard_normal((int(rng.integers(1, 40)), m))
        v = rng.standard_normal(m)
        assert nearest_codeword(v, c) == brute_nearest(v, c)


def test_nearest_codeword_tie_lowest_index():
    c = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    assert nearest_codeword(np.zeros(2), c) == 0
    assert nearest_codeword(np.array([1.0, 0.0]), c) == 0


def test_search_counter_is_exact(rng):
    c = rng.standard_normal((1024, 26))
    v = rng.standard_normal((64, 26))
    ctr = MulCounter()
    nearest_codewords(v, c, ctr)
    assert ctr.total == 64 * 1024 * 26


@pytest.mark.parametrize("scheme,n_bf,expected", [
    ("joint", 13, 1_064_960), ("split", 13, 638_976), ("steering", 16, 8_519_680)])
def test_compressed_bit_counts(scheme, n_bf, expected):
    assert compressed_codebook_bits(scheme, 8, 2, n_bf, 4) == expected


def test_cbr_bit_counts():
    assert kmeans_cbr_bits("joint", 64, 13) == 832
    assert kmeans_cbr_bits("split", 64, 13) == 1664
    assert kmeans_cbr_bits("steering", 64, 16) == 1024


@pytest.mark.parametrize("scheme", ["joint", "split", "steering"])
def test_compress_round_trip_bits_and_validity(rng, scheme):
    q = random_steering(rng, 400, 4, 2)
    v = build_training_vectors(q, scheme)
    cb = train_codebook(v, 5, max_iter=20, scheme=scheme, n_r=4, n_c=2)
    ccb = compress_codebook(cb, 4)
    assert ccb.n_bits == compressed_codebook_bits(scheme, 4, 2, 5, 4)
    dcb = decompress_codebook(ccb)
    assert dcb.centroids.shape == cb.centroids.shape
    # compress -> decompress -> compress is a fixed point
    assert np.array_equal(compress_codebook(dcb, 4).bits, ccb.bits)
    codec = KmeansCodec(dcb)
    cbr = codec.encode(q[:16])
    assert cbr.n_bits == kmeans_cbr_bits(scheme, 16, 5)
    qh = codec.decode(cbr)
    assert qh.shape == (16, 4, 2)
    assert orthonormality_error(qh).max() < 1e-6
    assert np.all(qh[:, -1].real >= 0) and np.allclose(qh[:, -1].imag, 0)


def test_perfect_codebook_reconstructs_exactly(rng):
    q = random_steering(rng, 8, 4, 2)
    cb = Codebook(flatten_q(q), "steering", 4, 2, 3)
    qh = kmeans_decode_cbr(kmeans_encode_cbr(q, cb), cb)
    assert np.allclose(qh, q, atol=1e-6)


def test_decode_with_wrong_codebook(rng):
    q = random_steering(rng, 8, 4, 2)
    cb = Codebook(flatten_q(q), "steering", 4, 2, 3)
    other = Codebook(np.zeros((8, 10)), "joint", 4, 2, 3)
    with pytest.raises(ConfigurationError):
        kmeans_decode_cbr(kmeans_encode_cbr(q, cb), other)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["joint", "split", "steering"]))
def test_every_index_decodes_to_valid_q(seed, scheme):
    rng = np.random.default_rng(seed)
    m = vector_length(scheme, 4, 2)
    if scheme == "steering":
        cents = flatten_q(random_steering(rng, 8, 4, 2)) + 0.3 * rng.standard_normal((8, m))
    else:
        cents = rng.uniform(-1, 7, (8, m))
    cb = Codebook(cents, scheme, 4, 2, 3)
    q = random_steering(rng, 4, 4, 2)
    qh = kmeans_decode_cbr(kmeans_encode_cbr(q, cb), cb)
    assert orthonormality_error(qh).max() < 1e-6
