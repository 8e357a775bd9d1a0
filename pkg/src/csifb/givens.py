"""Legacy 802.11 compressed beamforming: Givens angles, quantisation, CBR packing.

Angles are laid out column-major over the decomposition step ``i``; the
``phi`` array holds phi(i..n_r-1, i) for each column in turn and ``psi``
holds psi(i+1..n_r, i) likewise. Every function is vectorised over leading
batch axes.
"""
from dataclasses import dataclass

import numpy as np

from .bits import CompressedCbr, pack_fields, unpack_fields
from .counting import count
from .errors import ConfigurationError, FormatError
from .steering import check_steering

TWO_PI = 2.0 * np.pi
HALF_PI = 0.5 * np.pi


def num_angles(n_r, n_c):
    if n_c < 1 or n_r < 1 or n_c > n_r:
        raise ConfigurationError(f"need 1 <= n_c <= n_r, got n_r={n_r}, n_c={n_c}")
    m = min(n_c, n_r - 1)
    return sum(n_r - i for i in range(1, m + 1))


@dataclass
class AngleSet:
    phi: np.ndarray  # (..., n_a) in [0, 2pi)
    psi: np.ndarray  # (..., n_a) in [0, pi/2]
    n_r: int
    n_c: int


@dataclass
class QuantizedAngles:
    phi_idx: np.ndarray
    psi_idx: np.ndarray
    n_b: int
    n_r: int
    n_c: int


def angles_from_q(q, counter=None, check=True):
    """Givens decomposition of convention-normalised steering matrices."""
    q = np.asarray(q)
    if check:
        check_steering(q)
    n_r, n_c = q.shape[-2:]
    m = min(n_c, n_r - 1)
    v = np.array(q, dtype=np.complex128)
    batch = v.shape[:-2]
    nb = int(np.prod(batch, dtype=np.int64))
    phis, psis = [], []
    for i in range(m):
        # D_i^H: strip the phases of rows i..n_r-2 of column i
        ph = np.angle(v[..., i:n_r - 1, i])
        phis.append(np.mod(ph, TWO_PI))
        v[..., i:n_r - 1, i:] *= np.exp(-1j * ph)[..., None]
        count(counter, 4 * nb * (n_r - 1 - i) * (n_c - i), "phase")
        for l in range(i + 1, n_r):
            a = v[..., i, i].real
            b = v[..., l, i].real
            psi = np.clip(np.arctan2(b, a), 0.0, HALF_PI)
            psis.append(psi)
            c = np.cos(psi)[..., None]
            s = np.sin(psi)[..., None]
            ri = v[..., i, i:].copy()
            rl = v[..., l, i:].copy()
            v[..., i, i:] = c * ri + s * rl
            v[..., l, i:] = -s * ri + c * rl
            count(counter, 4 * 2 * nb * (n_c - i), "rotation")
    phi = np.concatenate(phis, axis=-1)
    psi = np.stack(psis, axis=-1)
    phi = np.where(phi >= TWO_PI, phi - TWO_PI, phi)
    return AngleSet(phi=phi, psi=psi, n_r=n_r, n_c=n_c)


def q_from_angles(a):
    """Rebuild Q = prod_i [D_i prod_l G_li^T] * I~ from an :class:`AngleSet`."""
    n_r, n_c = a.n_r, a.n_c
    n_a = num_angles(n_r, n_c)
    phi = np.asarray(a.phi, dtype=np.float64)
    psi = np.asarray(a.psi, dtype=np.float64)
    if phi.shape[-1] != n_a or psi.shape[-1] != n_a:
        raise ConfigurationError(
            f"expected {n_a} phi and psi angles for ({n_r},{n_c}), "
            f"got {phi.shape[-1]} and {psi.shape[-1]}")
    batch = np.broadcast_shapes(phi.shape[:-1], psi.shape[:-1])
    v = np.zeros(batch + (n_r, n_c), dtype=np.complex128)
    for j in range(n_c):
        v[..., j, j] = 1.0
    m = min(n_c, n_r - 1)
    offsets = np.cumsum([0] + [n_r - i for i in range(1, m + 1)])
    for i in reversed(range(m)):
        seg = slice(offsets[i], offsets[i + 1])
        ph = phi[..., seg]
        ps = psi[..., seg]
        for k, l in reversed(list(enumerate(range(i + 1, n_r)))):
            c = np.cos(ps[..., k])[..., None]
            s = np.sin(ps[..., k])[..., None]
            ri = v[..., i, :].copy()
            rl = v[..., l, :].copy()
            v[..., i, :] = c * ri - s * rl
            v[..., l, :] = s * ri + c * rl
        v[..., i:n_r - 1, :] *= np.exp(1j * ph)[..., None]
    v[..., -1, :] = np.abs(v[..., -1, :])
    return v


def _nearest(x, n, circular):
    """Nearest integer grid index to real position ``x``; ties go to the lower index."""
    lo = np.floor(x)
    frac = x - lo
    lo = lo.astype(np.int64)
    hi = lo + 1
    if circular:
        lo_w, hi_w = np.mod(lo, n), np.mod(hi, n)
        pick_hi = (frac > 0.5) | ((frac == 0.5) & (hi_w < lo_w))
        return np.where(pick_hi, hi_w, lo_w)
    k = np.where(frac > 0.5, hi, lo)
    return np.clip(k, 0, n - 1)


def quantize_phi(phi, bits, counter=None):
    n = 1 << bits
    count(counter, np.size(phi), "quantize")
    return _nearest(np.asarray(phi) * (n / TWO_PI) - 0.5, n, circular=True)


def quantize_psi(psi, bits, counter=None):
    n = 1 << bits
    count(counter, np.size(psi), "quantize")
    return _nearest(np.asarray(psi) * (n * 4 / TWO_PI) - 0.5, n, circular=False)


def dequantize_phi(idx, bits):
    idx = np.asarray(idx)
    if np.any(idx < 0) or np.any(idx >= (1 << bits)):
        raise FormatError(f"phi index out of range for {bits}-bit field")
    return (2 * idx + 1) * np.pi / (1 << bits)


def dequantize_psi(idx, bits):
    idx = np.asarray(idx)
    if np.any(idx < 0) or np.any(idx >= (1 << bits)):
        raise FormatError(f"psi index out of range for {bits}-bit field")
    return (2 * idx + 1) * np.pi / (1 << (bits + 2))


def quantize_angles(a, n_b, counter=None):
    return QuantizedAngles(phi_idx=quantize_phi(a.phi, n_b + 2, counter),
                           psi_idx=quantize_psi(a.psi, n_b, counter),
                           n_b=n_b, n_r=a.n_r, n_c=a.n_c)


def dequantize_angles(qa, n_r=None, n_c=None):
    n_r = qa.n_r if n_r is None else n_r
    n_c = qa.n_c if n_c is None else n_c
    return AngleSet(phi=dequantize_phi(qa.phi_idx, qa.n_b + 2),
                    psi=dequantize_psi(qa.psi_idx, qa.n_b), n_r=n_r, n_c=n_c)


def _field_layout(n_r, n_c, n_b):
    """Per-subcarrier field order (phi/psi tags, angle slot) and widths."""
    m = min(n_c, n_r - 1)
    kinds, slots, widths = [], [], []
    pos = 0
    for i in range(1, m + 1):
        cnt = n_r - i
        kinds += [0] * cnt + [1] * cnt
        slots += list(range(pos, pos + cnt)) * 2
        widths += [n_b + 2] * cnt + [n_b] * cnt
        pos += cnt
    return np.array(kinds), np.array(slots), np.array(widths)


def pack_angle_indices(phi_idx, psi_idx, n_r, n_c, n_b):
    """Pack (n_items, n_a) index arrays into the CBR bit order."""
    kinds, slots, widths = _field_layout(n_r, n_c, n_b)
    phi_idx = np.atleast_2d(phi_idx)
    psi_idx = np.atleast_2d(psi_idx)
    fields = np.where(kinds[None, :] == 0, phi_idx[:, slots], psi_idx[:, slots])
    return pack_fields(fields, np.tile(widths, phi_idx.shape[0]))


def unpack_angle_indices(bits, n_items, n_r, n_c, n_b):
    kinds, slots, widths = _field_layout(n_r, n_c, n_b)
    n_a = num_angles(n_r, n_c)
    fields = unpack_fields(bits, np.tile(widths, n_items), n_items * widths.size)
    fields = fields.reshape(n_items, widths.size)
    phi_idx = np.zeros((n_items, n_a), dtype=np.int64)
    psi_idx = np.zeros((n_items, n_a), dtype=np.int64)
    phi_idx[:, slots[kinds == 0]] = fields[:, kinds == 0]
    psi_idx[:, slots[kinds == 1]] = fields[:, kinds == 1]
    return phi_idx, psi_idx


def legacy_cbr_bits(n_sc, n_r, n_c, n_b):
    return n_sc * num_angles(n_r, n_c) * (2 * n_b + 2)


def legacy_encode_cbr(q_list, n_b, counter=None):
    """Compress steering matrices of shape (n_sc, n_r, n_c) into a CBR."""
    q_list = np.asarray(q_list)
    if q_list.ndim != 3:
        raise ConfigurationError("expected a (n_sc, n_r, n_c) stack of steering matrices")
    n_sc, n_r, n_c = q_list.shape
    qa = quantize_angles(angles_from_q(q_list, counter=counter), n_b, counter)
    bits = pack_angle_indices(qa.phi_idx, qa.psi_idx, n_r, n_c, n_b)
    return CompressedCbr("legacy", bits, n_sc, n_r, n_c, {"n_b": n_b})


def legacy_decode_cbr(cbr):
    n_b = cbr.params["n_b"]
    if cbr.n_bits != legacy_cbr_bits(cbr.n_sc, cbr.n_r, cbr.n_c, n_b):
        raise FormatError(f"legacy CBR has {cbr.n_bits} bits, expected "
                          f"{legacy_cbr_bits(cbr.n_sc, cbr.n_r, cbr.n_c, n_b)}")
    phi_idx, psi_idx = unpack_angle_indices(cbr.bits, cbr.n_sc, cbr.n_r, cbr.n_c, n_b)
    qa = QuantizedAngles(phi_idx, psi_idx, n_b, cbr.n_r, cbr.n_c)
    return q_from_angles(dequantize_angles(qa))


class LegacyCodec:
    def __init__(self, n_b=4):
        self.n_b = n_b
        self.name = f"legacy(n_b={n_b})"

    def encode(self, q_list, counter=None):
        return legacy_encode_cbr(q_list, self.n_b, counter)

    def decode(self, cbr):
        return legacy_decode_cbr(cbr)


class PerfectCodec:
    """Uncompressed feedback: Q-hat = Q. Upper bound for PER comparisons."""

    name = "perfect"

    def encode(self, q_list, counter=None):
        q_list = np.asarray(q_list)
        return CompressedCbr("perfect", np.zeros(0, np.uint8), *q_list.shape,
                             params={"q": q_list})

    def decode(self, cbr):
        return cbr.params["q"]

