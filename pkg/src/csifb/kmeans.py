"""K-means codebook codecs: joint angles, split angles and raw steering matrix.

Training vectors, Lloyd training with k-means++ seeding, codebook compression
for model sharing, nearest-codeword search and CBR packing.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from .bits import CompressedCbr, pack_fields, unpack_fields
from .counting import count
from .errors import ConfigurationError, FormatError, TrainingError
from .givens import (HALF_PI, TWO_PI, AngleSet, angles_from_q, dequantize_phi,
                     dequantize_psi, num_angles, q_from_angles, quantize_phi,
                     quantize_psi)
from .steering import check_steering, orthonormalize


class KmeansScheme(enum.IntEnum):
    JOINT_ANGLES = 1
    SPLIT_ANGLES = 2
    STEERING_MATRIX = 3

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"joint": cls.JOINT_ANGLES, "split": cls.SPLIT_ANGLES,
                   "steering": cls.STEERING_MATRIX, "1": cls.JOINT_ANGLES,
                   "2": cls.SPLIT_ANGLES, "3": cls.STEERING_MATRIX}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ConfigurationError(f"unknown K-means scheme {value!r}") from None

    @property
    def short(self):
        return {1: "joint", 2: "split", 3: "steering"}[int(self)]


def vector_length(scheme, n_r, n_c):
    scheme = KmeansScheme.parse(scheme)
    n_a = num_angles(n_r, n_c)
    if scheme is KmeansScheme.JOINT_ANGLES:
        return 2 * n_a
    if scheme is KmeansScheme.SPLIT_ANGLES:
        return n_a
    return 2 * n_r * n_c - n_c


@dataclass
class Codebook:
    centroids: np.ndarray  # (N_k, M) float32
    scheme: KmeansScheme
    n_r: int
    n_c: int
    n_bf: int
    wcss_history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        self.scheme = KmeansScheme.parse(self.scheme)
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        n_k, m = self.centroids.shape
        if n_k != 1 << self.n_bf:
            raise ConfigurationError(f"{n_k} centroids but n_bf={self.n_bf}")
        if m != vector_length(self.scheme, self.n_r, self.n_c):
            raise ConfigurationError(f"centroid length {m} does not match scheme")

    @property
    def n_k(self):
        return self.centroids.shape[0]

    @property
    def m(self):
        return self.centroids.shape[1]


def flatten_q(q):
    """Real parts row-major, then imaginary parts of all rows but the last."""
    q = np.asarray(q)
    re = q.real.reshape(q.shape[:-2] + (-1,))
    im = q[..., :-1, :].imag.reshape(q.shape[:-2] + (-1,))
    return np.concatenate([re, im], axis=-1)


def unflatten_q(v, n_r, n_c):
    v = np.asarray(v, dtype=np.float64)
    nre = n_r * n_c
    q = v[..., :nre].reshape(v.shape[:-1] + (n_r, n_c)).astype(np.complex128)
    q[..., :-1, :] += 1j * v[..., nre:].reshape(v.shape[:-1] + (n_r - 1, n_c))
    return q


def build_training_vectors(dataset, scheme):
    """Training vectors from a stack of steering matrices (..., n_r, n_c).

    SPLIT_ANGLES yields two vectors per matrix, phi then psi, interleaved.
    """
    scheme = KmeansScheme.parse(scheme)
    q = np.asarray(dataset)
    if q.size == 0:
        raise ConfigurationError("empty dataset")
    n_r, n_c = q.shape[-2:]
    q = q.reshape((-1, n_r, n_c))
    check_steering(q)
    if scheme is KmeansScheme.STEERING_MATRIX:
        return flatten_q(q)
    a = angles_from_q(q, check=False)
    if scheme is KmeansScheme.JOINT_ANGLES:
        return np.concatenate([a.phi, a.psi], axis=-1)
    return np.stack([a.phi, a.psi], axis=1).reshape(-1, a.phi.shape[-1])


def _sq_dists(x, c, c_sq):
    # |x|^2 - 2 x.c + |c|^2, clipped at zero; only used to propose labels
    d = (x * x).sum(1)[:, None] - 2.0 * (x @ c.T) + c_sq[None, :]
    return np.maximum(d, 0.0)


def _assign(x, centroids, chunk=4096):
    c_sq = (centroids * centroids).sum(1)
    labels = np.empty(x.shape[0], dtype=np.int64)
    for s in range(0, x.shape[0], chunk):
        labels[s:s + chunk] = np.argmin(_sq_dists(x[s:s + chunk], centroids, c_sq), axis=1)
    return labels


def _point_costs(x, centroids, labels):
    d = x - centroids[labels]
    return (d * d).sum(1)


def _kmeans_pp(x, n_k, rng):
    n = x.shape[0]
    centroids = np.empty((n_k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(1)
    for k in range(1, n_k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centroids[k] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[k]) ** 2).sum(1))
    return centroids


def train_codebook(vectors, n_bf, max_iter=100, tol=1e-6, seed=0, scheme=None,
                   n_r=None, n_c=None):
    """Lloyd's algorithm with k-means++ seeding.

    Returns a :class:`Codebook` when ``scheme``, ``n_r`` and ``n_c`` are given,
    otherwise ``(centroids, wcss_history)``. ``wcss_history[0]`` is the cost of
    the seeded centroids; each later entry follows one assign/update round and
    is never larger than its predecessor.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n_k = 1 << n_bf
    if x.ndim != 2 or x.shape[0] < n_k:
        raise TrainingError(f"need at least N_k={n_k} training vectors, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, n_k, rng)
    labels = _assign(x, centroids)
    costs = _point_costs(x, centroids, labels)
    history = [float(costs.sum())]
    for _ in range(max_iter):
        centroids = _update(x, labels, costs, centroids)
        costs = _point_costs(x, centroids, labels)
        proposal = _assign(x, centroids)
        new_costs = _point_costs(x, centroids, proposal)
        # only accept strict improvements so float noise in the expanded
        # distance can never raise the objective
        better = new_costs < costs
        changed = bool(np.any(better))
        labels = np.where(better, proposal, labels)
        costs = np.where(better, new_costs, costs)
        wcss = float(costs.sum())
        prev = history[-1]
        history.append(wcss)
        if not changed or prev == 0 or (prev - wcss) / prev < tol:
            break
    if not np.all(np.isfinite(centroids)):
        raise TrainingError("non-finite centroid")
    if scheme is None:
        return centroids, history
    return Codebook(centroids, scheme, n_r, n_c, n_bf, wcss_history=history)


def _update(x, labels, costs, centroids):
    n_k = centroids.shape[0]
    labels_view = labels
    counts = np.bincount(labels_view, minlength=n_k)
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        # move the farthest points into the empty clusters
        order = np.argsort(-costs, kind="stable")
        taken = 0
        for k in empty:
            while counts[labels_view[order[taken]]] <= 1:
                taken += 1
            i = order[taken]
            counts[labels_view[i]] -= 1
            labels_view[i] = k
            counts[k] = 1
            costs[i] = 0.0
            taken += 1
    sums = np.zeros_like(centroids)
    np.add.at(sums, labels_view, x)
    return sums / counts[:, None]


def nearest_codewords(v, centroids, counter=None, chunk=256):
    """Index of the closest centroid for each row of ``v`` (ties: lowest index)."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    c = np.asarray(centroids, dtype=np.float64)
    if v.shape[-1] != c.shape[-1]:
        raise ConfigurationError(f"vector length {v.shape[-1]} != codeword length {c.shape[-1]}")
    out = np.empty(v.shape[0], dtype=np.int64)
    for s in range(0, v.shape[0], chunk):
        d = v[s:s + chunk, None, :] - c[None, :, :]
        d2 = d * d
        count(counter, d2.size, "search")
        out[s:s + chunk] = np.argmin(d2.sum(-1), axis=1)
    return out


def nearest_codeword(v, cb, counter=None):
    cents = cb.centroids if isinstance(cb, Codebook) else cb
    v = np.asarray(v)
    if v.ndim != 1:
        raise ConfigurationError("nearest_codeword takes a single vector")
    return int(nearest_codewords(v, cents, counter)[0])


@dataclass
class CompressedCodebook:
    scheme: KmeansScheme
    n_r: int
    n_c: int
    n_bf: int
    n_b: int
    bits: np.ndarray

    @property
    def n_bits(self):
        return int(self.bits.size)


def compressed_codebook_bits(scheme, n_r, n_c, n_bf, n_b):
    scheme = KmeansScheme.parse(scheme)
    n_a = num_angles(n_r, n_c)
    n_k = 1 << n_bf
    if scheme is KmeansScheme.SPLIT_ANGLES:
        return n_k * n_a * (n_b + 2)
    return n_k * n_a * (2 * n_b + 2)


def compress_codebook(cb, n_b=4):
    """Quantise the codebook for model sharing.

    Angle codewords reuse the legacy grids: JOINT puts phi on the (n_b+2)-bit
    grid and psi on the n_b-bit grid; SPLIT puts every element on the
    (n_b+2)-bit phi grid. STEERING codewords are re-orthonormalised and
    converted to angles first, then packed like JOINT. Per codeword the
    layout is all phi fields then all psi fields (SPLIT: the M elements).
    """
    c = np.asarray(cb.centroids, dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise TrainingError("non-finite centroid")
    n_a = num_angles(cb.n_r, cb.n_c)
    if cb.scheme is KmeansScheme.SPLIT_ANGLES:
        idx = quantize_phi(np.mod(c, TWO_PI), n_b + 2)
        bits = pack_fields(idx, n_b + 2)
    else:
        if cb.scheme is KmeansScheme.STEERING_MATRIX:
            q = orthonormalize(unflatten_q(c, cb.n_r, cb.n_c))
            a = angles_from_q(q, check=False)
            phi, psi = a.phi, a.psi
        else:
            phi, psi = np.mod(c[:, :n_a], TWO_PI), np.clip(c[:, n_a:], 0.0, HALF_PI)
        fields = np.concatenate([quantize_phi(phi, n_b + 2), quantize_psi(psi, n_b)], axis=1)
        widths = np.array([n_b + 2] * n_a + [n_b] * n_a)
        bits = pack_fields(fields, np.tile(widths, cb.n_k))
    return CompressedCodebook(cb.scheme, cb.n_r, cb.n_c, cb.n_bf, n_b, bits)


def decompress_codebook(ccb):
    """Rebuild a usable codebook; STEERING codewords come back as flattened Q."""
    n_a = num_angles(ccb.n_r, ccb.n_c)
    n_k = 1 << ccb.n_bf
    expected = compressed_codebook_bits(ccb.scheme, ccb.n_r, ccb.n_c, ccb.n_bf, ccb.n_b)
    if ccb.n_bits != expected:
        raise FormatError(f"compressed codebook has {ccb.n_bits} bits, expected {expected}")
    n_b = ccb.n_b
    if ccb.scheme is KmeansScheme.SPLIT_ANGLES:
        idx = unpack_fields(ccb.bits, n_b + 2, n_k * n_a).reshape(n_k, n_a)
        cents = dequantize_phi(idx, n_b + 2)
    else:
        widths = np.array([n_b + 2] * n_a + [n_b] * n_a)
        f = unpack_fields(ccb.bits, np.tile(widths, n_k), n_k * 2 * n_a).reshape(n_k, 2 * n_a)
        phi = dequantize_phi(f[:, :n_a], n_b + 2)
        psi = dequantize_psi(f[:, n_a:], n_b)
        if ccb.scheme is KmeansScheme.STEERING_MATRIX:
            cents = flatten_q(q_from_angles(AngleSet(phi, psi, ccb.n_r, ccb.n_c)))
        else:
            cents = np.concatenate([phi, psi], axis=1)
    return Codebook(cents, ccb.scheme, ccb.n_r, ccb.n_c, ccb.n_bf)


def kmeans_cbr_bits(scheme, n_sc, n_bf):
    scheme = KmeansScheme.parse(scheme)
    return (2 if scheme is KmeansScheme.SPLIT_ANGLES else 1) * n_sc * n_bf


def kmeans_encode_cbr(q_list, cb, counter=None):
    q_list = np.asarray(q_list)
    n_sc, n_r, n_c = q_list.shape
    if (n_r, n_c) != (cb.n_r, cb.n_c):
        raise ConfigurationError(f"codebook is for ({cb.n_r},{cb.n_c}), got ({n_r},{n_c})")
    if cb.scheme is KmeansScheme.STEERING_MATRIX:
        vecs = flatten_q(q_list)
    else:
        a = angles_from_q(q_list, counter=counter)
        if cb.scheme is KmeansScheme.JOINT_ANGLES:
            vecs = np.concatenate([a.phi, a.psi], axis=-1)
        else:
            vecs = np.stack([a.phi, a.psi], axis=1).reshape(-1, a.phi.shape[-1])
    idx = nearest_codewords(vecs, cb.centroids, counter)
    bits = pack_fields(idx, cb.n_bf)
    return CompressedCbr(f"kmeans-{cb.scheme.short}", bits, n_sc, n_r, n_c,
                         {"n_bf": cb.n_bf, "scheme": int(cb.scheme)})


def kmeans_decode_cbr(cbr, cb):
    if cbr.params.get("scheme") != int(cb.scheme) or cbr.params.get("n_bf") != cb.n_bf:
        raise ConfigurationError("CBR was produced with a different codebook scheme")
    per_sc = 2 if cb.scheme is KmeansScheme.SPLIT_ANGLES else 1
    n_idx = per_sc * cbr.n_sc
    if cbr.n_bits != n_idx * cb.n_bf:
        raise FormatError(f"K-means CBR has {cbr.n_bits} bits, expected {n_idx * cb.n_bf}")
    idx = unpack_fields(cbr.bits, cb.n_bf, n_idx)
    words = np.asarray(cb.centroids, dtype=np.float64)[idx]
    n_a = num_angles(cb.n_r, cb.n_c)
    if cb.scheme is KmeansScheme.STEERING_MATRIX:
        return orthonormalize(unflatten_q(words, cb.n_r, cb.n_c))
    if cb.scheme is KmeansScheme.JOINT_ANGLES:
        phi, psi = words[:, :n_a], words[:, n_a:]
    else:
        words = words.reshape(cbr.n_sc, 2, n_a)
        phi, psi = words[:, 0], words[:, 1]
    a = AngleSet(np.mod(phi, TWO_PI), np.clip(psi, 0.0, HALF_PI), cb.n_r, cb.n_c)
    return q_from_angles(a)


class KmeansCodec:
    """Beamformee/beamformer pair sharing one (decompressed) codebook."""

    def __init__(self, codebook):
        self.codebook = codebook
        self.name = f"kmeans-{codebook.scheme.short}(n_bf={codebook.n_bf})"

    def encode(self, q_list, counter=None):
        return kmeans_encode_cbr(q_list, self.codebook, counter)

    def decode(self, cbr):
        return kmeans_decode_cbr(cbr, self.codebook)
