"""Tapped-delay-line Rayleigh MIMO channel and its OFDM frequency response.

A stand-in for the TGn model D: exponential power-delay profile, i.i.d.
Rayleigh taps per antenna pair, block fading.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

DEFAULT_N_FFT = 256
DEFAULT_N_SC = 64


@dataclass(frozen=True)
class ChannelProfile:
    n_tx: int = 8
    n_rx: int = 2
    n_taps: int = 8
    tap_spacing: float = 50e-9
    rms_delay_spread: float = 50e-9

    def validate(self):
        if self.n_tx < 1 or self.n_rx < 1 or self.n_taps < 1:
            raise ConfigurationError(
                f"profile needs at least one tx/rx antenna and one tap, got {self}")
        if self.tap_spacing <= 0 or self.rms_delay_spread <= 0:
            raise ConfigurationError("tap spacing and delay spread must be positive")

    def tap_powers(self):
        """Normalised exponential power-delay profile (sums to one)."""
        self.validate()
        delays = np.arange(self.n_taps) * self.tap_spacing
        p = np.exp(-delays / self.rms_delay_spread)
        return p / p.sum()

    def to_dict(self):
        return {"n_tx": self.n_tx, "n_rx": self.n_rx, "n_taps": self.n_taps,
                "tap_spacing": self.tap_spacing,
                "rms_delay_spread": self.rms_delay_spread}


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray  # [tap, rx, tx]
    profile: ChannelProfile
    seed: int


@dataclass(frozen=True)
class FreqChannel:
    h: np.ndarray  # [subcarrier, rx, tx]
    subcarrier_indices: np.ndarray
    n_fft: int


def default_subcarriers(n_fft=DEFAULT_N_FFT, n_sc=DEFAULT_N_SC):
    """Evenly spaced feedback bins ``s, 2s, ..., n_sc s`` with ``s = n_fft // n_sc``.

    The last bin may equal ``n_fft``, which is the same tone as bin 0.
    """
    if n_sc < 1 or n_sc > n_fft:
        raise ConfigurationError(f"cannot place {n_sc} subcarriers in {n_fft} bins")
    return np.arange(1, n_sc + 1) * (n_fft // n_sc)


def generate_channel(profile, seed):
    profile.validate()
    rng = np.random.default_rng(seed)
    shape = (profile.n_taps, profile.n_rx, profile.n_tx)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    taps = g * np.sqrt(profile.tap_powers())[:, None, None]
    return ChannelRealization(taps=taps, profile=profile, seed=seed)


def frequency_response(ch, n_fft=DEFAULT_N_FFT, subcarrier_indices=None):
    if subcarrier_indices is None:
        subcarrier_indices = default_subcarriers(n_fft)
    k = np.asarray(subcarrier_indices, dtype=np.int64)
    if k.ndim != 1 or np.any(k < 0) or np.any(k > n_fft):
        raise ConfigurationError(f"subcarrier indices must lie in [0, {n_fft}]")
    t = np.arange(ch.taps.shape[0])
    dft = np.exp(-2j * np.pi * np.outer(k, t) / n_fft)
    h = np.einsum("kt,trx->krx", dft, ch.taps)
    return FreqChannel(h=h, subcarrier_indices=k, n_fft=n_fft)
