"""Beamforming CSI feedback compression laboratory.

Legacy Givens-rotation feedback, K-means codebook codecs and FNN
autoencoder codecs, with overhead/complexity accounting and a link-level
PER simulator.
"""
from .channel import ChannelProfile, frequency_response, generate_channel
from .errors import (ConfigurationError, CsifbError, FormatError, PreconditionError,
                     TrainingError)
from .givens import LegacyCodec, PerfectCodec
from .steering import compute_steering, normalize_convention

__version__ = "0.1.0"
