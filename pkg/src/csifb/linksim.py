"""Monte-Carlo PER of beamformed 2-stream transmission with fed-back steering.

PHY proxy: rate-1/2 K=7 (133, 171) convolutional code, zero-tailed; a fixed
pseudo-random interleaver spanning all subcarriers, streams and OFDM symbols;
Gray 16-QAM; MMSE equalisation of the effective channel H Q-hat; max-log
LLRs; soft Viterbi. Packets are simulated in batches; every trial draws its
channel, payload and noise from its own seed so results do not depend on
batching or thread scheduling.
"""
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelProfile, default_subcarriers, frequency_response, generate_channel
from .errors import ConfigurationError
from .steering import compute_steering

K = 7
N_STATES = 1 << (K - 1)
GENERATORS = (0o133, 0o171)
BITS_PER_SYMBOL = 4
INTERLEAVER_SEED = 0x802_11


def _parity(x):
    return bin(x).count("1") & 1


# trellis: register = (input << 6) | state, state holds the previous six inputs
_OUT = np.array([[[_parity(((b << 6) | s) & g) for g in GENERATORS] for b in (0, 1)]
                 for s in range(N_STATES)], dtype=np.int8)  # [state, input, output]
_NEXT = np.array([[((b << 6) | s) >> 1 for b in (0, 1)] for s in range(N_STATES)])


def conv_encode(bits):
    """Encode (..., n) bits with six zero tail bits; returns (..., 2 (n + 6))."""
    bits = np.asarray(bits, dtype=np.uint8)
    tail = np.zeros(bits.shape[:-1] + (K - 1,), dtype=np.uint8)
    u = np.concatenate([bits, tail], axis=-1).astype(np.int64)
    # register at time t is u[t] u[t-1] ... u[t-6]
    padded = np.concatenate([np.zeros(u.shape[:-1] + (K - 1,), np.int64), u], axis=-1)
    n = u.shape[-1]
    out = np.empty(u.shape[:-1] + (n, 2), dtype=np.uint8)
    for j, g in enumerate(GENERATORS):
        acc = np.zeros(u.shape, dtype=np.int64)
        for d in range(K):
            if (g >> (K - 1 - d)) & 1:
                acc ^= padded[..., K - 1 - d: K - 1 - d + n]
        out[..., j] = acc
    return out.reshape(u.shape[:-1] + (2 * n,))


# predecessors of each next-state: ns = (b << 5) | (s >> 1)
_PRED = np.array([[((ns & 31) << 1) | r for r in (0, 1)] for ns in range(N_STATES)])
_PRED_IN = np.array([ns >> 5 for ns in range(N_STATES)])
_PRED_SYM = np.array([[_OUT[_PRED[ns, r], _PRED_IN[ns]] @ [2, 1] for r in (0, 1)]
                      for ns in range(N_STATES)])  # output pair as integer 0..3


def viterbi_decode(llr, n_info):
    """Soft-decision Viterbi for a batch of zero-tailed codewords.

    ``llr`` has shape (batch, 2 (n_info + 6)); positive values favour bit 0.
    Returns (batch, n_info) hard decisions.
    """
    llr = np.atleast_2d(np.asarray(llr, dtype=np.float64))
    batch = llr.shape[0]
    n = n_info + K - 1
    pairs = llr[:, :2 * n].reshape(batch, n, 2)
    # branch metric for output symbol (c0 c1) = ((1-2c0) L0 + (1-2c1) L1) / 2
    signs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.float64)
    bm_all = 0.5 * pairs @ signs.T  # (batch, n, 4)
    pm = np.full((batch, N_STATES), -np.inf)
    pm[:, 0] = 0.0
    decisions = np.empty((n, batch, N_STATES), dtype=np.bool_)
    p0, p1 = _PRED[:, 0], _PRED[:, 1]
    s0, s1 = _PRED_SYM[:, 0], _PRED_SYM[:, 1]
    for t in range(n):
        bm = bm_all[:, t]
        m0 = pm[:, p0] + bm[:, s0]
        m1 = pm[:, p1] + bm[:, s1]
        choose1 = m1 > m0
        decisions[t] = choose1
        pm = np.where(choose1, m1, m0)
        pm -= pm.max(axis=1, keepdims=True)
    state = np.zeros(batch, dtype=np.int64)
    rows = np.arange(batch)
    out = np.empty((batch, n), dtype=np.uint8)
    for t in range(n - 1, -1, -1):
        out[:, t] = _PRED_IN[state]
        r = decisions[t, rows, state]
        state = _PRED[state, r.astype(np.int64)]
    return out[:, :n_info]


# Gray 16-QAM: per axis two bits, 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
_PAM_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0])
_PAM_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]])
QAM_SCALE = 1.0 / np.sqrt(10.0)


def qam16_map(bits):
    b = np.asarray(bits).reshape(np.shape(bits)[:-1] + (-1, 4))
    i = np.array([[-3.0, -1.0], [3.0, 1.0]])[b[..., 0], b[..., 1]]
    q = np.array([[-3.0, -1.0], [3.0, 1.0]])[b[..., 2], b[..., 3]]
    return (i + 1j * q) * QAM_SCALE


def qam16_llr(y, noise_var):
    """Max-log LLRs (positive favours 0) for unit-gain symbols ``y``.

    ``noise_var`` is the complex noise variance per symbol; broadcast with y.
    Returns (..., 4 * len) LLRs in bit order b0 b1 (I) b2 b3 (Q).
    """
    out = []
    for comp in (np.real(y), np.imag(y)):
        d2 = (comp[..., None] / QAM_SCALE - _PAM_LEVELS) ** 2 * (QAM_SCALE ** 2)
        d2 = d2 / np.asarray(noise_var)[..., None]
        for k in range(2):
            zero = _PAM_BITS[:, k] == 0
            out.append(d2[..., ~zero].min(-1) - d2[..., zero].min(-1))
    llr = np.stack(out, axis=-1)  # (..., 4)
    return llr.reshape(llr.shape[:-2] + (-1,))


@dataclass
class SimConfig:
    n_r: int = 8
    n_c: int = 2
    n_rx: int = 2
    payload_bits: int = 1000
    snr_grid_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    trials_per_point: int = 1000
    master_seed: int = 0
    n_sc: int = 64
    n_fft: int = 256
    profile: ChannelProfile = None
    batch: int = 250
    threads: int = 1

    def __post_init__(self):
        if self.profile is None:
            self.profile = ChannelProfile(n_tx=self.n_r, n_rx=self.n_rx)
        if self.n_c > min(self.n_r, self.n_rx):
            raise ConfigurationError("n_c must not exceed min(n_r, n_rx)")
        if self.trials_per_point < 1 or self.payload_bits < 1:
            raise ConfigurationError("trials and payload must be positive")
        if (self.profile.n_tx, self.profile.n_rx) != (self.n_r, self.n_rx):
            raise ConfigurationError("channel profile antenna counts disagree with config")


@dataclass
class PerPoint:
    snr_db: float
    trials: int
    errors: int
    # per-trial packet failures in trial order, kept for paired comparisons
    failures: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def per(self):
        return self.errors / self.trials if self.trials else 0.0


@dataclass
class _Layout:
    n_coded: int
    n_ofdm: int
    perm: np.ndarray = field(repr=False)


def packet_layout(payload_bits, n_sc, n_streams):
    n_coded = 2 * (payload_bits + K - 1)
    per_ofdm = n_sc * n_streams * BITS_PER_SYMBOL
    n_ofdm = math.ceil(n_coded / per_ofdm)
    total = n_ofdm * per_ofdm
    perm = np.random.default_rng(INTERLEAVER_SEED).permutation(total)
    return _Layout(n_coded, n_ofdm, perm)


def trial_seeds(master_seed, snr_index, trial_index):
    """(channel seed, data seed) from a SeedSequence over the three integers."""
    s = np.random.SeedSequence([master_seed, snr_index, trial_index]).generate_state(2, np.uint64)
    return int(s[0]), int(s[1])


def simulate_packets(h, q_hat, snr_db, payload_bits, data_seeds, max_ofdm=None):
    """Simulate one packet per batch entry; returns a boolean pass array.

    ``h``: (B, n_sc, n_rx, n_tx); ``q_hat``: (B, n_sc, n_tx, n_c). Transmit
    power is one, split evenly over the streams; the complex noise variance
    per receive antenna is 10**(-snr_db / 10).
    """
    h = np.asarray(h)
    q_hat = np.asarray(q_hat)
    B, n_sc, n_rx, n_tx = h.shape
    n_c = q_hat.shape[-1]
    if q_hat.shape != (B, n_sc, n_tx, n_c) or n_c > n_rx:
        raise ConfigurationError(f"q_hat shape {q_hat.shape} inconsistent with h {h.shape}")
    lay = packet_layout(payload_bits, n_sc, n_c)
    if max_ofdm is not None and lay.n_ofdm > max_ofdm:
        raise ConfigurationError("payload does not fit the available subcarriers/streams")
    total = lay.perm.size
    n0 = 10.0 ** (-snr_db / 10.0)
    rngs = [np.random.default_rng(s) for s in data_seeds]
    payload = np.stack([r.integers(0, 2, payload_bits, dtype=np.uint8) for r in rngs])
    pad = np.stack([r.integers(0, 2, total - lay.n_coded, dtype=np.uint8) for r in rngs])
    shape = (lay.n_ofdm, n_sc, n_rx)
    noise = np.stack([(r.standard_normal(shape) + 1j * r.standard_normal(shape))
                      * np.sqrt(n0 / 2.0) for r in rngs])
    coded = np.concatenate([conv_encode(payload), pad], axis=1)
    tx_bits = np.empty_like(coded)
    tx_bits[:, lay.perm] = coded
    # slot order: ofdm symbol, subcarrier, stream
    sym = qam16_map(tx_bits).reshape(B, lay.n_ofdm, n_sc, n_c)
    heff = (h @ q_hat) / np.sqrt(n_c)  # (B, n_sc, n_rx, n_c)
    y = np.einsum("bkrc,bokc->bokr", heff, sym) + noise
    hh = np.swapaxes(heff, -1, -2).conj()
    gram = hh @ heff + n0 * np.eye(n_c)
    w = np.linalg.solve(gram, hh)  # (B, n_sc, n_c, n_rx)
    gain = np.real(np.einsum("bkcr,bkrc->bkc", w, heff))  # diag(W Heff)
    gain = np.clip(gain, 1e-12, 1.0 - 1e-12)
    est = np.einsum("bkcr,bokr->bokc", w, y) / gain[:, None]
    nvar = np.broadcast_to(((1.0 - gain) / gain)[:, None], est.shape)
    llr = qam16_llr(est, nvar).reshape(B, total)
    deint = llr[:, lay.perm][:, :lay.n_coded]
    decoded = viterbi_decode(deint, payload_bits)
    return np.all(decoded == payload, axis=1)


def simulate_packet(freq_channel, q_hat, snr_db, payload_bits, seed):
    """Single packet through ``freq_channel`` with steering ``q_hat``; True on success."""
    h = freq_channel.h if hasattr(freq_channel, "h") else np.asarray(freq_channel)
    return bool(simulate_packets(h[None], np.asarray(q_hat)[None], snr_db, payload_bits,
                                 [seed])[0])


def _trial_channels(config, snr_index, trials):
    sc = default_subcarriers(config.n_fft, config.n_sc)
    hs, data_seeds = [], []
    for t in trials:
        ch_seed, data_seed = trial_seeds(config.master_seed, snr_index, t)
        hs.append(frequency_response(generate_channel(config.profile, ch_seed),
                                     config.n_fft, sc).h)
        data_seeds.append(data_seed)
    return np.stack(hs), data_seeds


def _run_batch(config, codec, snr_index, snr_db, trials):
    h, data_seeds = _trial_channels(config, snr_index, trials)
    q = compute_steering(h, config.n_c)
    q_hat = np.stack([codec.decode(codec.encode(qi)) for qi in q])
    ok = simulate_packets(h, q_hat, snr_db, config.payload_bits, data_seeds)
    return ~ok


def per_point(config, codec, snr_index, snr_db, trials=None):
    """Run ``trials`` (default: all configured) independent packets at one SNR."""
    trials = range(config.trials_per_point) if trials is None else trials
    trials = list(trials)
    chunks = [trials[s:s + config.batch] for s in range(0, len(trials), config.batch)]
    if config.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            fails = list(pool.map(lambda c: _run_batch(config, codec, snr_index, snr_db, c),
                                  chunks))
    else:
        fails = [_run_batch(config, codec, snr_index, snr_db, c) for c in chunks]
    fails = np.concatenate(fails) if fails else np.zeros(0, dtype=bool)
    return PerPoint(float(snr_db), len(trials), int(fails.sum()), fails)


def per_curve(config, codec):
    if codec is None:
        raise ConfigurationError("no codec/trained artifact supplied")
    return [per_point(config, codec, i, snr) for i, snr in enumerate(config.snr_grid_db)]


# ------------------------------------------------------------- statistics

def wilson_interval(errors, trials, z=1.959963984540054):
    if trials == 0:
        return 0.0, 1.0
    p = errors / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def significantly_greater(a, b, z=1.6448536269514722):
    """One-sided two-proportion z-test that PER(a) > PER(b) at 95 %."""
    p1, p2 = a.per, b.per
    pooled = (a.errors + b.errors) / (a.trials + b.trials)
    se = math.sqrt(pooled * (1 - pooled) * (1 / a.trials + 1 / b.trials))
    if se == 0:
        return False
    return (p1 - p2) / se > z


def paired_greater(a, b, alpha=0.05):
    """Exact one-sided sign test that PER(a) > PER(b) on paired trials.

    Both points must come from the same trials (same seeds), so each trial
    gives a pair of outcomes. Only discordant pairs carry information; under
    equal PER the count where only ``a`` failed is Binomial(n_disc, 1/2).
    Returns ``(significant, p_value)``.
    """
    if a.failures is None or b.failures is None or a.failures.shape != b.failures.shape:
        raise ConfigurationError("paired test needs per-trial outcomes from the same trials")
    only_a = int(np.sum(a.failures & ~b.failures))
    only_b = int(np.sum(b.failures & ~a.failures))
    n = only_a + only_b
    p = sum(math.comb(n, k) for k in range(only_a, n + 1)) / (1 << n) if n else 1.0
    return p < alpha, p


def not_less(a, b):
    """Point-estimate ordering PER(a) >= PER(b); ties count as ordered."""
    return a.per >= b.per


PER_CSV_FIELDS = ["scheme", "variant", "params", "snr_db", "trials", "errors", "per"]


def per_csv(rows):
    """``rows``: iterable of (scheme, variant, params, PerPoint)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PER_CSV_FIELDS)
    for scheme, variant, params, p in rows:
        w.writerow([scheme, variant, params, f"{p.snr_db:g}", p.trials, p.errors, f"{p.per:.6f}"])
    return buf.getvalue()
