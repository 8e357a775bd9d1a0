"""SVD steering matrices and the last-row-real phase convention.

All functions accept a single matrix or a stack with arbitrary leading
dimensions; the trailing two axes are (rows, columns).
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, PreconditionError

PHASE_EPS = 1e-12


@dataclass(frozen=True)
class SteeringMatrix:
    q: np.ndarray

    @property
    def n_r(self):
        return self.q.shape[-2]

    @property
    def n_c(self):
        return self.q.shape[-1]


def compute_steering(h, n_c):
    """First ``n_c`` right singular vectors of ``h`` (n_rx x n_tx), normalised.

    Returns an array of shape (..., n_tx, n_c).
    """
    h = np.asarray(h)
    n_rx, n_tx = h.shape[-2:]
    if n_c < 1 or n_c > min(n_rx, n_tx):
        raise ConfigurationError(f"n_c={n_c} exceeds min(n_rx, n_tx)={min(n_rx, n_tx)}")
    if not np.all(np.isfinite(h)):
        raise PreconditionError("channel matrix has non-finite entries")
    _, _, vh = np.linalg.svd(h)
    v = np.swapaxes(vh, -1, -2).conj()[..., :n_c]
    return normalize_convention(v)


def normalize_convention(q):
    """Rotate every column so its last entry is real and non-negative.

    A last-row entry below 1e-12 in magnitude is treated as phase 0.
    """
    q = np.asarray(q, dtype=np.complex128)
    last = q[..., -1, :]
    mag = np.abs(last)
    rot = np.where(mag < PHASE_EPS, 1.0, np.conj(last) / np.where(mag < PHASE_EPS, 1.0, mag))
    out = q * rot[..., None, :]
    out[..., -1, :] = np.abs(out[..., -1, :])
    return out


def orthonormality_error(q):
    """Frobenius norm of Q^H Q - I, per matrix."""
    q = np.asarray(q)
    g = np.swapaxes(q, -1, -2).conj() @ q
    return np.linalg.norm(g - np.eye(q.shape[-1]), axis=(-2, -1))


def check_steering(q, tol=1e-6):
    """Raise :class:`PreconditionError` unless every matrix obeys the invariants."""
    q = np.asarray(q)
    if np.any(orthonormality_error(q) > tol):
        raise PreconditionError("steering matrix columns are not orthonormal")
    last = q[..., -1, :]
    if np.any(np.abs(last.imag) > tol) or np.any(last.real < -tol):
        raise PreconditionError("steering matrix last row is not real non-negative")


def orthonormalize(q):
    """Nearest valid steering matrix for an approximate one.

    Per-column normalisation, modified Gram-Schmidt in column order, then the
    phase convention. Used for codewords and decoder outputs that are only
    approximately unitary.
    """
    q = np.array(q, dtype=np.complex128)
    n_r, n_c = q.shape[-2:]
    for j in range(n_c):
        v = q[..., :, j]
        for i in range(j):
            u = q[..., :, i]
            proj = np.sum(u.conj() * v, axis=-1, keepdims=True)
            v = v - proj * u
        nrm = np.linalg.norm(v, axis=-1, keepdims=True)
        degenerate = nrm < 1e-12
        if np.any(degenerate):
            # pick the first basis vector orthogonal to the previous columns
            fallback = np.zeros_like(v)
            fallback[..., j % n_r] = 1.0
            for i in range(j):
                u = q[..., :, i]
                fallback = fallback - np.sum(u.conj() * fallback, axis=-1, keepdims=True) * u
            fallback /= np.linalg.norm(fallback, axis=-1, keepdims=True)
            v = np.where(degenerate, fallback, v / np.where(degenerate, 1.0, nrm))
        else:
            v = v / nrm
        q[..., :, j] = v
    return normalize_convention(q)
