"""Big-endian fixed-width bit-field packing used by every CBR and codebook stream."""
from dataclasses import dataclass, field

import numpy as np


def pack_fields(values, width):
    """Pack non-negative integers into a flat 0/1 array, MSB first per field.

    ``width`` is a scalar or an array broadcastable to ``values``.
    """
    values = np.asarray(values, dtype=np.uint64).ravel()
    widths = np.broadcast_to(np.asarray(width, dtype=np.int64), np.shape(values)).ravel()
    if values.size == 0:
        return np.zeros(0, dtype=np.uint8)
    if np.any(values >> widths.astype(np.uint64) != 0):
        raise ValueError("value does not fit in its field width")
    wmax = int(widths.max())
    shifts = np.arange(wmax - 1, -1, -1, dtype=np.uint64)
    table = ((values[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
    # right-align each field inside the wmax-wide row
    keep = np.arange(wmax)[None, :] >= (wmax - widths)[:, None]
    return table[keep]


def unpack_fields(bits, width, count):
    """Inverse of :func:`pack_fields` for ``count`` fields."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    widths = np.broadcast_to(np.asarray(width, dtype=np.int64), (count,)).ravel()
    if bits.size != int(widths.sum()):
        raise ValueError(f"expected {int(widths.sum())} bits, got {bits.size}")
    out = np.zeros(count, dtype=np.uint64)
    ends = np.cumsum(widths)
    starts = ends - widths
    for w in np.unique(widths):
        sel = np.nonzero(widths == w)[0]
        idx = starts[sel][:, None] + np.arange(w)[None, :]
        weights = np.uint64(1) << np.arange(w - 1, -1, -1, dtype=np.uint64)
        out[sel] = (bits[idx].astype(np.uint64) * weights).sum(axis=1)
    return out.astype(np.int64)


@dataclass
class CompressedCbr:
    """A compressed beamforming report: the feedback bitstream plus its framing."""

    scheme: str
    bits: np.ndarray
    n_sc: int
    n_r: int
    n_c: int
    params: dict = field(default_factory=dict)

    @property
    def n_bits(self):
        return int(self.bits.size)

    def to_bytes(self):
        return np.packbits(self.bits).tobytes()
