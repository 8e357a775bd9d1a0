"""Synthetic training-data collection and binary persistence.

Every binary format starts with a 4-byte magic and a u16 version whose high
byte is the major and low byte the minor revision. All multi-byte fields
are little-endian; floats are IEEE 754 binary32. Files are written to a
temporary sibling and renamed into place.
"""
import json
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autoenc import FnnModel, QuantizedModel
from .channel import (DEFAULT_N_FFT, ChannelProfile, default_subcarriers,
                      frequency_response, generate_channel)
from .errors import ConfigurationError, FormatError
from .kmeans import Codebook, CompressedCodebook, KmeansScheme, vector_length
from .steering import compute_steering

VERSION = (1, 0)

DATASET_MAGIC = b"CSID"
CODEBOOK_MAGIC = b"CSCB"
COMPRESSED_MAGIC = b"CSCC"
MODEL_MAGIC = b"CSNN"

_DATASET_HDR = struct.Struct("<4sHBBHIQ")
_CODEBOOK_HDR = struct.Struct("<4sHBBBBH")
_COMPRESSED_HDR = struct.Struct("<4sHBBBBBQ")
_MODEL_HDR = struct.Struct("<4sHBBB")  # magic, version, role, n_layers, quant bits (0 = f32)

_ROLES = {"encoder": 0, "decoder": 1}
_ACTS = {"linear": 0, "tanh": 1}


@dataclass
class CsiDataset:
    q: np.ndarray  # complex64 (n_soundings, n_sc, n_r, n_c)
    seed: int
    profile: ChannelProfile = None
    n_fft: int = DEFAULT_N_FFT
    subcarrier_indices: np.ndarray = None

    @property
    def n_soundings(self):
        return self.q.shape[0]

    @property
    def n_sc(self):
        return self.q.shape[1]

    @property
    def n_r(self):
        return self.q.shape[2]

    @property
    def n_c(self):
        return self.q.shape[3]

    def __eq__(self, other):
        if not isinstance(other, CsiDataset):
            return NotImplemented
        same_sc = (self.subcarrier_indices is None and other.subcarrier_indices is None) or (
            self.subcarrier_indices is not None and other.subcarrier_indices is not None
            and np.array_equal(self.subcarrier_indices, other.subcarrier_indices))
        return (self.seed == other.seed and self.profile == other.profile
                and self.n_fft == other.n_fft and same_sc
                and self.q.dtype == other.q.dtype
                and self.q.shape == other.q.shape and self.q.tobytes() == other.q.tobytes())


def sounding_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def generate_dataset(profile, n_soundings, n_sc=64, seed=0, n_c=2, n_fft=DEFAULT_N_FFT):
    """Steering matrices of ``n_soundings`` independent channel realisations."""
    profile.validate()
    if n_soundings < 1 or n_sc < 1:
        raise ConfigurationError("n_soundings and n_sc must be at least 1")
    sc = default_subcarriers(n_fft, n_sc)
    h = np.stack([frequency_response(generate_channel(profile, sounding_seed(seed, i)),
                                     n_fft, sc).h for i in range(n_soundings)])
    q = np.ascontiguousarray(compute_steering(h, n_c), dtype=np.complex64)
    q[..., -1, :] = q[..., -1, :].real  # exact zero imaginary part after the cast
    return CsiDataset(q=q, seed=seed, profile=profile, n_fft=n_fft, subcarrier_indices=sc)


# ------------------------------------------------------------------ helpers

def _atomic_write(path, payload):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _version_word():
    return (VERSION[0] << 8) | VERSION[1]


def _check_header(buf, magic, hdr, strict=True):
    if len(buf) < hdr.size:
        raise FormatError(f"truncated header: {len(buf)} of {hdr.size} bytes", len(buf))
    fields = hdr.unpack_from(buf, 0)
    if fields[0] != magic:
        raise FormatError(f"bad magic {fields[0]!r}, expected {magic!r}", 0)
    major, minor = fields[1] >> 8, fields[1] & 0xFF
    if major != VERSION[0]:
        raise FormatError(f"unsupported major version {major}", 4)
    if minor > VERSION[1]:
        msg = f"unknown minor version {major}.{minor}"
        if strict:
            raise FormatError(msg + " (strict mode)", 4)
        warnings.warn(msg + "; reading best-effort")
    return fields


def _take(buf, offset, nbytes, what):
    if offset + nbytes > len(buf):
        raise FormatError(f"truncated {what}: need {nbytes} bytes, {len(buf) - offset} left",
                          offset)
    return buf[offset:offset + nbytes]


def _no_trailing(buf, offset):
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} unexpected trailing bytes", offset)


# ----------------------------------------------------------------- dataset

def dataset_bytes(d):
    hdr = _DATASET_HDR.pack(DATASET_MAGIC, _version_word(), d.n_r, d.n_c, d.n_sc,
                            d.n_soundings, d.seed)
    return hdr + np.ascontiguousarray(d.q, dtype="<c8").tobytes()


def write_dataset(d, path):
    path = Path(path)
    _atomic_write(path, dataset_bytes(d))
    sidecar = {
        "format": "CSID", "version": list(VERSION), "seed": d.seed, "n_fft": d.n_fft,
        "subcarrier_indices": None if d.subcarrier_indices is None
        else [int(k) for k in d.subcarrier_indices],
        "profile": None if d.profile is None else d.profile.to_dict(),
    }
    _atomic_write(path.with_name(path.name + ".json"),
                  (json.dumps(sidecar, indent=2) + "\n").encode())


def parse_dataset(buf, strict=True):
    _, _, n_r, n_c, n_sc, n_snd, seed = _check_header(buf, DATASET_MAGIC, _DATASET_HDR, strict)
    if n_r < 1 or n_c < 1 or n_c > n_r:
        raise FormatError(f"invalid dimensions n_r={n_r}, n_c={n_c}", 6)
    off = _DATASET_HDR.size
    nbytes = n_snd * n_sc * n_r * n_c * 8
    raw = _take(buf, off, nbytes, "steering matrices")
    _no_trailing(buf, off + nbytes)
    q = np.frombuffer(raw, dtype="<c8").astype(np.complex64).reshape(n_snd, n_sc, n_r, n_c)
    return CsiDataset(q=q, seed=seed)


def read_dataset(path, strict=True):
    path = Path(path)
    d = parse_dataset(path.read_bytes(), strict)
    sidecar = path.with_name(path.name + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        if meta.get("seed") != d.seed:
            raise FormatError("sidecar seed does not match the dataset header")
        if meta.get("profile"):
            d.profile = ChannelProfile(**meta["profile"])
        d.n_fft = meta.get("n_fft", DEFAULT_N_FFT)
        if meta.get("subcarrier_indices") is not None:
            d.subcarrier_indices = np.asarray(meta["subcarrier_indices"], dtype=np.int64)
    return d


# ---------------------------------------------------------------- codebook

def codebook_bytes(cb):
    hdr = _CODEBOOK_HDR.pack(CODEBOOK_MAGIC, _version_word(), int(cb.scheme), cb.n_r,
                             cb.n_c, cb.n_bf, cb.m)
    return hdr + np.ascontiguousarray(cb.centroids, dtype="<f4").tobytes()


def parse_codebook(buf, strict=True):
    _, _, scheme, n_r, n_c, n_bf, m = _check_header(buf, CODEBOOK_MAGIC, _CODEBOOK_HDR, strict)
    try:
        scheme = KmeansScheme(scheme)
        expected_m = vector_length(scheme, n_r, n_c)
    except (ValueError, ConfigurationError):
        raise FormatError(f"invalid scheme/dimensions ({scheme}, {n_r}, {n_c})", 6) from None
    if m != expected_m or n_bf > 24:
        raise FormatError(f"header M={m}, n_bf={n_bf} inconsistent with scheme", 10)
    off = _CODEBOOK_HDR.size
    nbytes = (1 << n_bf) * m * 4
    raw = _take(buf, off, nbytes, "centroids")
    _no_trailing(buf, off + nbytes)
    cents = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(1 << n_bf, m)
    return Codebook(cents, scheme, n_r, n_c, n_bf)


def write_codebook(cb, path):
    _atomic_write(path, codebook_bytes(cb))


def read_codebook(path, strict=True):
    return parse_codebook(Path(path).read_bytes(), strict)


# ----------------------------------------------------- compressed codebook

def compressed_codebook_bytes(ccb):
    hdr = _COMPRESSED_HDR.pack(COMPRESSED_MAGIC, _version_word(), int(ccb.scheme), ccb.n_r,
                               ccb.n_c, ccb.n_bf, ccb.n_b, ccb.n_bits)
    return hdr + np.packbits(ccb.bits).tobytes()


def parse_compressed_codebook(buf, strict=True):
    fields = _check_header(buf, COMPRESSED_MAGIC, _COMPRESSED_HDR, strict)
    _, _, scheme, n_r, n_c, n_bf, n_b, n_bits = fields
    try:
        scheme = KmeansScheme(scheme)
    except ValueError:
        raise FormatError(f"invalid scheme tag {scheme}", 6) from None
    off = _COMPRESSED_HDR.size
    nbytes = (n_bits + 7) // 8
    raw = _take(buf, off, nbytes, "codebook bitstream")
    _no_trailing(buf, off + nbytes)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:n_bits]
    return CompressedCodebook(scheme, n_r, n_c, n_bf, n_b, bits)


def write_compressed_codebook(ccb, path):
    _atomic_write(path, compressed_codebook_bytes(ccb))


def read_compressed_codebook(path, strict=True):
    return parse_compressed_codebook(Path(path).read_bytes(), strict)


# ------------------------------------------------------------------- model

def model_bytes(model):
    """Header then, per layer, W (row-major, shape N_l x N_{l+1}) and b.

    PTQ models store a float32 scale followed by int8 (bits <= 8) or int16
    weights before each bias vector.
    """
    quant = model.bits if isinstance(model, QuantizedModel) else 0
    weights = model.int_weights if quant else model.weights
    sizes = model.layer_sizes
    parts = [_MODEL_HDR.pack(MODEL_MAGIC, _version_word(), _ROLES[model.role],
                             len(weights), quant),
             struct.pack(f"<{len(sizes)}H", *sizes),
             bytes(_ACTS[a] for a in model.activations)]
    for k, w in enumerate(weights):
        if quant:
            parts.append(struct.pack("<f", float(model.scales[k])))
            parts.append(np.ascontiguousarray(w, dtype="<i1" if quant <= 8 else "<i2").tobytes())
        else:
            parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(model.biases[k], dtype="<f4").tobytes())
    return b"".join(parts)


def parse_model(buf, strict=True):
    _, _, role, n_layers, quant = _check_header(buf, MODEL_MAGIC, _MODEL_HDR, strict)
    roles = {v: k for k, v in _ROLES.items()}
    acts = {v: k for k, v in _ACTS.items()}
    if role not in roles or n_layers < 1 or quant == 1 or quant > 16:
        raise FormatError(f"invalid role/layer/quantisation fields ({role}, {n_layers}, {quant})", 6)
    off = _MODEL_HDR.size
    sizes = struct.unpack(f"<{n_layers + 1}H", _take(buf, off, 2 * (n_layers + 1), "layer sizes"))
    off += 2 * (n_layers + 1)
    tags = _take(buf, off, n_layers, "activation tags")
    if any(t not in acts for t in tags):
        raise FormatError("unknown activation tag", off)
    off += n_layers
    weights, biases, scales = [], [], []
    wdt = "<f4" if not quant else ("<i1" if quant <= 8 else "<i2")
    for k in range(n_layers):
        if quant:
            (scale,) = struct.unpack("<f", _take(buf, off, 4, "scale"))
            scales.append(np.float32(scale))
            off += 4
        n = sizes[k] * sizes[k + 1]
        itemsize = np.dtype(wdt).itemsize
        w = np.frombuffer(_take(buf, off, n * itemsize, f"layer {k} weights"), dtype=wdt)
        off += n * itemsize
        b = np.frombuffer(_take(buf, off, 4 * sizes[k + 1], f"layer {k} bias"), dtype="<f4")
        off += 4 * sizes[k + 1]
        weights.append(w.astype(np.dtype(wdt).newbyteorder("=")).reshape(sizes[k], sizes[k + 1]))
        biases.append(b.astype(np.float32))
    _no_trailing(buf, off)
    act_list = [acts[t] for t in tags]
    if quant:
        return QuantizedModel(weights, scales, biases, act_list, quant, roles[role])
    return FnnModel(weights, biases, act_list, roles[role])


def write_model(model, path):
    _atomic_write(path, model_bytes(model))


def read_model(path, strict=True):
    return parse_model(Path(path).read_bytes(), strict)
