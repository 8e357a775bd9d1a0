import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csifb.errors import ConfigurationError, PreconditionError
from csifb.steering import (check_steering, compute_steering, normalize_convention,
                            orthonormality_error, orthonormalize)

from conftest import random_steering


def test_identity_channel():
    q = compute_steering(np.eye(2), 1)
    assert np.allclose(q, [[1], [0]]) or np.allclose(q, [[0], [1]])
    # the dominant singular pair of I is tied; input column order wins
    assert np.allclose(q[:, 0], [1, 0])


def test_too_many_columns():
    with pytest.raises(ConfigurationError):
        compute_steering(np.ones((2, 8)), 3)


def test_orthonormal_and_convention(rng):
    h = rng.standard_normal((200, 2, 8)) + 1j * rng.standard_normal((200, 2, 8))
    q = compute_steering(h, 2)
    assert np.all(orthonormality_error(q) < 1e-6)
    assert np.all(np.abs(q[..., -1, :].imag) < 1e-9)
    assert np.all(q[..., -1, :].real >= 0)
    check_steering(q)


def _random_orthonormal(rng, n_r, n_c):
    z = rng.standard_normal((n_r, n_c)) + 1j * rng.standard_normal((n_r, n_c))
    return np.linalg.qr(z)[0]


def test_svd_beats_random_subspaces(rng):
    h = rng.standard_normal((2, 8)) + 1j * rng.standard_normal((2, 8))
    q = compute_steering(h, 2)
    best = np.linalg.norm(h @ q)
    for _ in range(100):
        assert best >= np.linalg.norm(h @ _random_orthonormal(rng, 8, 2)) - 1e-12


def test_normalize_examples(rng):
    q = random_steering(rng, 1, 4, 2)[0]
    assert np.allclose(normalize_convention(q), q)
    rotated = q * np.exp(1j * np.pi / 3)
    assert np.allclose(normalize_convention(rotated), q)
    col = np.array([[0.5j], [np.sqrt(0.5)], [-0.5]])
    out = normalize_convention(col)
    assert np.allclose(out, -col)


def test_zero_last_entry_keeps_phase():
    col = np.array([[1j], [0.0]])
    assert np.allclose(normalize_convention(col), col)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 1), (4, 2), (8, 2), (3, 3)]))
def test_normalize_properties(seed, dims):
    rng = np.random.default_rng(seed)
    n_r, n_c = dims
    z = _random_orthonormal(rng, n_r, n_c)
    out = normalize_convention(z)
    # pure per-column phase rotation
    ratio = np.sum(z.conj() * out, axis=0)
    assert np.allclose(np.abs(ratio), 1.0)
    assert np.allclose(out, z * ratio[None, :])
    assert np.allclose(normalize_convention(out), out)
    assert orthonormality_error(out) < 1e-9
    h = rng.standard_normal((n_c, n_r)) + 1j * rng.standard_normal((n_c, n_r))
    assert np.allclose(np.linalg.svd(h @ z, compute_uv=False),
                       np.linalg.svd(h @ out, compute_uv=False))


def test_check_steering_rejects():
    with pytest.raises(PreconditionError):
        check_steering(np.array([[1.0], [1.0]]))
    with pytest.raises(PreconditionError):
        check_steering(np.array([[0.0], [-1.0]]))


def test_orthonormalize_recovers_valid_q(rng):
    q = random_steering(rng, 50, 8, 2)
    noisy = q + 0.05 * (rng.standard_normal(q.shape) + 1j * rng.standard_normal(q.shape))
    out = orthonormalize(noisy)
    check_steering(out)
    assert np.allclose(orthonormalize(q), q)
