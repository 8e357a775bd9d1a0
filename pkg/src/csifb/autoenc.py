"""FNN autoencoder codecs.

Two schemes share the same feedforward building block:

* ``Q_ELEMENT_SERIES``: one autoencoder compresses the series (over
  subcarriers) of every real/imaginary component of Q; the latent floats are
  shortened from 32 to ``n_q`` bits.
* ``ANGLE_SERIES``: separate phi and psi autoencoders compress the series of
  each Givens angle; the tanh-bounded latent is quantised uniformly with
  ``n_b + 2`` (phi) or ``n_b`` (psi) bits.

Post-training quantisation of the encoder coefficients lives here as well.
"""
import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bits import CompressedCbr, pack_fields, unpack_fields
from .counting import count
from .errors import ConfigurationError, FormatError, TrainingError
from .givens import HALF_PI, TWO_PI, AngleSet, angles_from_q, num_angles, q_from_angles
from .kmeans import flatten_q, unflatten_q
from .steering import orthonormalize

ACTIVATIONS = ("linear", "tanh")


class AeVariant(enum.IntEnum):
    Q_ELEMENT_SERIES = 1
    ANGLE_SERIES = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"qseries": cls.Q_ELEMENT_SERIES, "angle": cls.ANGLE_SERIES,
                   "angles": cls.ANGLE_SERIES}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ConfigurationError(f"unknown autoencoder scheme {value!r}") from None


@dataclass
class AeScheme:
    variant: AeVariant
    n_q: int = 16
    n_b: int = 4

    def __post_init__(self):
        self.variant = AeVariant.parse(self.variant)
        if self.n_q not in (16, 32):
            raise ConfigurationError(f"n_q must be 16 or 32, got {self.n_q}")


@dataclass
class FnnModel:
    weights: list  # W[l] has shape (N_l, N_{l+1})
    biases: list
    activations: list
    role: str = "encoder"

    @property
    def layer_sizes(self):
        if not self.weights:
            return []
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_weights(self):
        return sum(w.size for w in self.weights)

    @property
    def n_biases(self):
        return sum(b.size for b in self.biases)

    def astype(self, dtype):
        return FnnModel([w.astype(dtype) for w in self.weights],
                        [b.astype(dtype) for b in self.biases],
                        list(self.activations), self.role)


def init_fnn(layer_sizes, activations=None, seed=0, role="encoder", dtype=np.float64):
    """Glorot-uniform weights, zero biases; hidden tanh, linear output by default."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigurationError(f"need at least two layers of size >= 1, got {sizes}")
    n_layers = len(sizes) - 1
    if activations is None:
        activations = ["tanh"] * (n_layers - 1) + ["linear"]
    if len(activations) != n_layers or any(a not in ACTIVATIONS for a in activations):
        raise ConfigurationError(f"bad activation list {activations}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return FnnModel(weights, biases, list(activations), role)


def _act(name, z):
    return np.tanh(z) if name == "tanh" else z


def forward(model, x, counter=None):
    x = np.asarray(x)
    if not model.weights:
        raise ConfigurationError("empty model")
    if x.shape[-1] != model.weights[0].shape[0]:
        raise ConfigurationError(f"input length {x.shape[-1]} != N_0={model.weights[0].shape[0]}")
    for w, b, a in zip(model.weights, model.biases, model.activations):
        count(counter, x.size // x.shape[-1] * w.size, "fnn")
        x = _act(a, x @ w + b)
    return x


def _stack(*models):
    layers = []
    for m in models:
        layers += list(zip(m.weights, m.biases, m.activations))
    return layers


def mse_and_grads(layers, x, target):
    """Mean-squared error over all elements and its gradients.

    ``layers`` is a list of ``(W, b, activation)``; returns
    ``(loss, [(dW, db), ...])``.
    """
    acts = [x]
    for w, b, a in layers:
        acts.append(_act(a, acts[-1] @ w + b))
    err = acts[-1] - target
    loss = float(np.mean(err * err))
    delta = 2.0 * err / err.size
    grads = [None] * len(layers)
    for k in reversed(range(len(layers))):
        w, _, a = layers[k]
        if a == "tanh":
            delta = delta * (1.0 - acts[k + 1] ** 2)
        grads[k] = (acts[k].T @ delta, delta.sum(0))
        if k:
            delta = delta @ w.T
    return loss, grads


@dataclass
class TrainConfig:
    encoder_sizes: tuple = (64, 40, 6)
    encoder_output: str = "linear"
    epochs: int = 200
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch: int = 64
    seed: int = 0


@dataclass
class TrainResult:
    encoder: FnnModel
    decoder: FnnModel
    loss_history: list = field(default_factory=list)


def train_autoencoder(samples, config=None, **overrides):
    """Jointly train encoder and mirrored decoder on reconstruction MSE.

    Mini-batch gradient descent with momentum; the shuffling and
    initialisation are seeded so the trajectory is reproducible. Returns
    float32 halves and the per-epoch training MSE (entry 0 is the untrained
    loss).
    """
    cfg = config or TrainConfig()
    if overrides:
        cfg = TrainConfig(**{**cfg.__dict__, **overrides})
    x = np.asarray(samples, dtype=np.float64)
    sizes = list(cfg.encoder_sizes)
    if x.ndim != 2 or x.shape[1] != sizes[0]:
        raise ConfigurationError(f"samples must have length N_0={sizes[0]}")
    if sizes[-1] >= sizes[0]:
        raise ConfigurationError("encoder output must be shorter than its input")
    n_hidden = len(sizes) - 2
    enc = init_fnn(sizes, ["tanh"] * n_hidden + [cfg.encoder_output], cfg.seed, "encoder")
    dec = init_fnn(sizes[::-1], ["tanh"] * n_hidden + ["linear"], cfg.seed + 1, "decoder")
    layers = [[w, b, a] for w, b, a in _stack(enc, dec)]
    vel = [(np.zeros_like(w), np.zeros_like(b)) for w, b, _ in layers]
    rng = np.random.default_rng(cfg.seed)

    def full_loss():
        return mse_and_grads([tuple(l) for l in layers], x, x)[0]

    history = [full_loss()]
    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        for s in range(0, x.shape[0], cfg.batch):
            xb = x[order[s:s + cfg.batch]]
            _, grads = mse_and_grads([tuple(l) for l in layers], xb, xb)
            for k, (gw, gb) in enumerate(grads):
                vw, vb = vel[k]
                vw *= cfg.momentum
                vw -= cfg.learning_rate * gw
                vb *= cfg.momentum
                vb -= cfg.learning_rate * gb
                layers[k][0] += vw
                layers[k][1] += vb
        loss = full_loss()
        if not np.isfinite(loss):
            raise TrainingError("autoencoder training diverged (non-finite loss)")
        history.append(loss)
    n_enc = len(sizes) - 1
    enc = FnnModel([l[0] for l in layers[:n_enc]], [l[1] for l in layers[:n_enc]],
                   [l[2] for l in layers[:n_enc]], "encoder").astype(np.float32)
    dec = FnnModel([l[0] for l in layers[n_enc:]], [l[1] for l in layers[n_enc:]],
                   [l[2] for l in layers[n_enc:]], "decoder").astype(np.float32)
    return TrainResult(enc, dec, history)


# ---------------------------------------------------------------- samples

def scale_phi(phi):
    return np.asarray(phi) / np.pi - 1.0


def unscale_phi(z):
    return (np.asarray(z) + 1.0) * np.pi


def scale_psi(psi):
    return np.asarray(psi) * (4.0 / np.pi) - 1.0


def unscale_psi(z):
    return (np.asarray(z) + 1.0) * (np.pi / 4.0)


def build_ae_samples(q, scheme, n_0=None):
    """Per-component series across subcarriers.

    ``q`` has shape (n_soundings, n_sc, n_r, n_c) or (n_sc, n_r, n_c).
    Q_ELEMENT_SERIES returns an array (n_soundings * (2 n_r n_c - n_c), n_sc);
    ANGLE_SERIES returns ``{"phi": ..., "psi": ...}`` each of shape
    (n_soundings * n_a, n_sc), already scaled to [-1, 1].
    """
    variant = AeVariant.parse(scheme.variant if isinstance(scheme, AeScheme) else scheme)
    q = np.asarray(q)
    if q.ndim == 3:
        q = q[None]
    n_snd, n_sc, n_r, n_c = q.shape
    if n_0 is not None and n_sc != n_0:
        raise ConfigurationError(f"{n_sc} subcarriers but encoder expects N_0={n_0}")
    if variant is AeVariant.Q_ELEMENT_SERIES:
        v = flatten_q(q)  # (snd, sc, M)
        return np.ascontiguousarray(v.transpose(0, 2, 1).reshape(-1, n_sc))
    a = angles_from_q(q)
    phi = scale_phi(a.phi).transpose(0, 2, 1).reshape(-1, n_sc)
    psi = scale_psi(a.psi).transpose(0, 2, 1).reshape(-1, n_sc)
    return {"phi": np.ascontiguousarray(phi), "psi": np.ascontiguousarray(psi)}


# ------------------------------------------------------- post-compression

F16_MAX = float(np.finfo(np.float16).max)


def reduce_bit_width(values, n_q, stats=None):
    """32-bit floats to ``n_q``-bit floats (16: IEEE binary16, round-half-even).

    Values beyond the binary16 range are clamped to +-65504; the number of
    clamped values is added to ``stats["overflow"]`` when ``stats`` is given.
    """
    v = np.asarray(values, dtype=np.float32)
    if n_q == 32:
        return v.copy()
    if n_q != 16:
        raise ConfigurationError(f"n_q must be 16 or 32, got {n_q}")
    over = np.abs(v) > F16_MAX
    if np.any(over):
        if stats is not None:
            stats["overflow"] = stats.get("overflow", 0) + int(over.sum())
        warnings.warn(f"{int(over.sum())} values clamped to binary16 range")
        v = np.clip(v, -F16_MAX, F16_MAX)
    return v.astype(np.float16)


def extend_bit_width(reduced):
    return np.asarray(reduced).astype(np.float32)


def _float_bits(values, n_q):
    dt = np.uint16 if n_q == 16 else np.uint32
    return pack_fields(np.ascontiguousarray(values).view(dt).ravel().astype(np.uint64), n_q)


def _bits_float(bits, n_q, shape):
    raw = unpack_fields(bits, n_q, int(np.prod(shape)))
    dt, ft = (np.uint16, np.float16) if n_q == 16 else (np.uint32, np.float32)
    return raw.astype(dt).view(ft).reshape(shape)


def latent_quantize(z, bits):
    """Uniform mid-rise quantiser on [-1, 1] with 2**bits levels."""
    n = 1 << bits
    return np.clip(np.floor((np.asarray(z) + 1.0) * (n / 2.0)), 0, n - 1).astype(np.int64)


def latent_dequantize(idx, bits):
    n = 1 << bits
    idx = np.asarray(idx)
    if np.any(idx < 0) or np.any(idx >= n):
        raise FormatError("latent index out of range")
    return -1.0 + (2.0 * idx + 1.0) / n


# ------------------------------------------------------------------ codecs

def qseries_cbr_bits(n_r, n_c, n_l, n_q):
    return (2 * n_r * n_c - n_c) * n_l * n_q


def angle_cbr_bits(n_r, n_c, n_l_phi, n_l_psi, n_b):
    n_a = num_angles(n_r, n_c)
    return n_a * n_l_phi * (n_b + 2) + n_a * n_l_psi * n_b


def _out_len(model):
    return model.layer_sizes[-1]


def ae_encode_cbr(q_list, encoders, scheme, counter=None, stats=None):
    """Compress (n_sc, n_r, n_c) steering matrices with trained encoder(s).

    ``encoders`` is one :class:`FnnModel` for Q_ELEMENT_SERIES or a
    ``(phi_encoder, psi_encoder)`` pair for ANGLE_SERIES.
    """
    q_list = np.asarray(q_list)
    n_sc, n_r, n_c = q_list.shape
    if scheme.variant is AeVariant.Q_ELEMENT_SERIES:
        enc = encoders
        if isinstance(enc, (tuple, list)):
            raise ConfigurationError("Q-series scheme uses a single encoder")
        x = build_ae_samples(q_list, scheme, n_0=enc.layer_sizes[0])
        z = forward(enc, x.astype(np.float32), counter)
        bits = _float_bits(reduce_bit_width(z, scheme.n_q, stats), scheme.n_q)
        return CompressedCbr("ae-qseries", bits, n_sc, n_r, n_c,
                             {"n_q": scheme.n_q, "n_l": _out_len(enc), "variant": 1})
    if not isinstance(encoders, (tuple, list)) or len(encoders) != 2:
        raise ConfigurationError("angle scheme needs (phi_encoder, psi_encoder)")
    enc_phi, enc_psi = encoders
    s = build_ae_samples(q_list, scheme, n_0=enc_phi.layer_sizes[0])
    zp = forward(enc_phi, s["phi"].astype(np.float32), counter)
    zs = forward(enc_psi, s["psi"].astype(np.float32), counter)
    bits = np.concatenate([
        pack_fields(latent_quantize(zp, scheme.n_b + 2), scheme.n_b + 2),
        pack_fields(latent_quantize(zs, scheme.n_b), scheme.n_b)])
    return CompressedCbr("ae-angle", bits, n_sc, n_r, n_c,
                         {"n_b": scheme.n_b, "n_l_phi": _out_len(enc_phi),
                          "n_l_psi": _out_len(enc_psi), "variant": 2})


def ae_decode_cbr(cbr, decoders, scheme):
    n_sc, n_r, n_c = cbr.n_sc, cbr.n_r, cbr.n_c
    if scheme.variant is AeVariant.Q_ELEMENT_SERIES:
        dec = decoders
        if cbr.params.get("variant") != 1 or isinstance(dec, (tuple, list)):
            raise ConfigurationError("CBR/decoder do not match the Q-series scheme")
        n_l = dec.layer_sizes[0]
        m = 2 * n_r * n_c - n_c
        if cbr.n_bits != qseries_cbr_bits(n_r, n_c, n_l, scheme.n_q):
            raise FormatError("Q-series CBR length does not match the decoder")
        z = extend_bit_width(_bits_float(cbr.bits, scheme.n_q, (m, n_l)))
        series = forward(dec, z).astype(np.float64)  # (m, n_sc)
        return orthonormalize(unflatten_q(series.T, n_r, n_c))
    if cbr.params.get("variant") != 2:
        raise ConfigurationError("CBR/decoder do not match the angle scheme")
    dec_phi, dec_psi = decoders
    n_a = num_angles(n_r, n_c)
    lp, ls = dec_phi.layer_sizes[0], dec_psi.layer_sizes[0]
    if cbr.n_bits != angle_cbr_bits(n_r, n_c, lp, ls, scheme.n_b):
        raise FormatError("angle CBR length does not match the decoders")
    cut = n_a * lp * (scheme.n_b + 2)
    ip = unpack_fields(cbr.bits[:cut], scheme.n_b + 2, n_a * lp).reshape(n_a, lp)
    is_ = unpack_fields(cbr.bits[cut:], scheme.n_b, n_a * ls).reshape(n_a, ls)
    zp = latent_dequantize(ip, scheme.n_b + 2).astype(np.float32)
    zs = latent_dequantize(is_, scheme.n_b).astype(np.float32)
    phi = unscale_phi(forward(dec_phi, zp).astype(np.float64)).T  # (n_sc, n_a)
    psi = unscale_psi(forward(dec_psi, zs).astype(np.float64)).T
    phi = np.clip(phi, 0.0, np.nextafter(TWO_PI, 0.0))
    psi = np.clip(psi, 0.0, HALF_PI)
    return q_from_angles(AngleSet(phi, psi, n_r, n_c))


class AeCodec:
    """Encoder half at the beamformee, decoder half at the beamformer."""

    def __init__(self, scheme, encoders, decoders):
        self.scheme = scheme
        self.encoders = encoders
        self.decoders = decoders
        if scheme.variant is AeVariant.Q_ELEMENT_SERIES:
            self.name = f"ae-qseries(N_L={_out_len(encoders)},n_q={scheme.n_q})"
        else:
            self.name = (f"ae-angle(N_L={_out_len(encoders[0])}/{_out_len(encoders[1])},"
                         f"n_b={scheme.n_b})")

    def encode(self, q_list, counter=None):
        return ae_encode_cbr(q_list, self.encoders, self.scheme, counter)

    def decode(self, cbr):
        return ae_decode_cbr(cbr, self.decoders, self.scheme)


# --------------------------------------------------------------------- PTQ

@dataclass
class QuantizedModel:
    int_weights: list
    scales: list  # one float32 per weight tensor
    biases: list  # float32, untouched
    activations: list
    bits: int
    role: str = "encoder"

    @property
    def layer_sizes(self):
        return [self.int_weights[0].shape[0]] + [w.shape[1] for w in self.int_weights]

    def dequantize(self):
        return FnnModel([(q.astype(np.float32) * s).astype(np.float32)
                         for q, s in zip(self.int_weights, self.scales)],
                        [b.copy() for b in self.biases], list(self.activations), self.role)


def ptq_quantize(model, bits=8):
    """Symmetric per-tensor post-training quantisation of the weights."""
    if not 2 <= bits <= 16:
        raise ConfigurationError(f"PTQ bit width must be in [2, 16], got {bits}")
    qmax = (1 << (bits - 1)) - 1
    dt = np.int8 if bits <= 8 else np.int16
    ints, scales = [], []
    for w in model.weights:
        w = np.asarray(w, dtype=np.float32)
        peak = float(np.max(np.abs(w))) if w.size else 0.0
        scale = np.float32(peak / qmax) if peak > 0 else np.float32(1.0)
        ints.append(np.clip(np.rint(w / scale), -qmax, qmax).astype(dt))
        scales.append(scale)
    return QuantizedModel(ints, scales, [np.asarray(b, np.float32) for b in model.biases],
                          list(model.activations), bits, model.role)


def model_sharing_bits(models, ptq_bits=None, include_scales=False):
    """Bits to ship encoder coefficients to the beamformee.

    Unquantised: 32 bits per weight and bias. With PTQ: ``ptq_bits`` per
    weight, 32 per bias, plus 32 per tensor scale if ``include_scales``.
    """
    if models is None:
        return 0
    if isinstance(models, (FnnModel, QuantizedModel)):
        models = [models]
    total = 0
    for m in models:
        if isinstance(m, QuantizedModel):
            bits = m.bits
            n_w = sum(w.size for w in m.int_weights)
            n_b = sum(b.size for b in m.biases)
            n_t = len(m.int_weights)
        else:
            bits = ptq_bits
            n_w, n_b, n_t = m.n_weights, m.n_biases, len(m.weights)
        if bits is None:
            total += 32 * (n_w + n_b)
        else:
            total += bits * n_w + 32 * n_b + (32 * n_t if include_scales else 0)
    return total


def encoder_multiplications(layer_sizes):
    return sum(a * b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))
