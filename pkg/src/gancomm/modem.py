"""Gray-mapped QAM modulation and soft demodulation.

Both constellations are separable: each I/Q dimension carries an
independent Gray-coded pattern, so bit metrics are computed per
dimension.  LLR sign convention: positive means bit 0 is more likely.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError, FramingError

# 4-QAM: one bit per dimension, 0 -> +1, 1 -> -1, scaled to unit energy.
# Symbol labels (b0 b1): 00 -> ++, 01 -> +-, 11 -> --, 10 -> -+.
_A4 = 1.0 / np.sqrt(2.0)

# 16-QAM: two bits per dimension, Gray levels 00,01,11,10 -> -3,-1,+1,+3,
# scaled by 1/sqrt(10) for unit average energy.
_LEV16 = np.array([-3.0, -1.0, +3.0, +1.0]) / np.sqrt(10.0)  # index = b0<<1 | b1
_BITS16 = np.array([[0, 0], [0, 1], [1, 1], [1, 0]])  # sorted by level
_SORTED16 = np.array([-3.0, -1.0, +1.0, +3.0]) / np.sqrt(10.0)


def _check_bits(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise DomainError("bits must be 0 or 1")
    return bits.astype(np.int64)


def bpsk_mod(bits) -> np.ndarray:
    """0 -> +1, 1 -> -1 (real antipodal)."""
    b = _check_bits(bits)
    return 1.0 - 2.0 * b.astype(np.float64)


def qam_mod(bits, order: int) -> np.ndarray:
    """Map a bit sequence onto Gray-labeled 4- or 16-QAM, unit mean energy.

    >>> qam_mod([0, 0], 4)
    array([0.70710678+0.70710678j])
    """
    b = _check_bits(bits)
    if order == 4:
        if b.size % 2:
            raise FramingError("4-QAM needs an even number of bits")
        pairs = b.reshape(-1, 2)
        return (1.0 - 2.0 * pairs[:, 0]) * _A4 + 1j * (1.0 - 2.0 * pairs[:, 1]) * _A4
    if order == 16:
        if b.size % 4:
            raise FramingError("16-QAM needs a multiple of 4 bits")
        quads = b.reshape(-1, 4)
        i_lev = _LEV16[(quads[:, 0] << 1) | quads[:, 1]]
        q_lev = _LEV16[(quads[:, 2] << 1) | quads[:, 3]]
        return i_lev + 1j * q_lev
    raise ConfigError(f"unsupported QAM order {order}")


def _hard16(vals: np.ndarray) -> np.ndarray:
    """Nearest of the four 16-QAM levels -> the 2 Gray bits per value."""
    idx = np.argmin(np.abs(vals[:, None] - _SORTED16[None, :]), axis=1)
    return _BITS16[idx]


def _llr_dim16(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Max-log metrics for the two bits of one 16-QAM dimension."""
    d2 = (z[:, None] - _SORTED16[None, :]) ** 2  # distances to -3,-1,+1,+3
    out = np.empty((z.size, 2))
    for j in range(2):
        mask0 = _BITS16[:, j] == 0
        out[:, j] = w * (d2[:, ~mask0].min(axis=1) - d2[:, mask0].min(axis=1))
    return out


def qam_demod(
    y: np.ndarray,
    order: int,
    sigma2: float,
    gains: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Hard decisions plus max-log LLRs (positive favors bit 0).

    If per-symbol complex gains are given, symbols are equalized as y/h
    and the metrics weighted by |h|^2/sigma2; zero-gain symbols become
    erasures (hard bits 0, LLRs 0).
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    if sigma2 <= 0:
        sigma2 = 1e-300  # noiseless: LLR magnitude irrelevant, sign kept
    if gains is None:
        z = y
        w = np.full(y.shape, 1.0 / sigma2)
    else:
        g = np.asarray(gains, dtype=np.complex128).ravel()
        if g.shape != y.shape:
            raise FramingError("gains must match symbol count")
        live = np.abs(g) > 0
        z = np.where(live, y / np.where(live, g, 1.0), 0.0)
        w = np.where(live, np.abs(g) ** 2 / sigma2, 0.0)

    if order == 4:
        llr = np.empty((y.size, 2))
        llr[:, 0] = 4.0 * _A4 * w * z.real
        llr[:, 1] = 4.0 * _A4 * w * z.imag
        hard = np.where(llr < 0, 1, 0)
        hard[w == 0.0] = 0
        return hard.reshape(-1), llr.reshape(-1)
    if order == 16:
        llr = np.empty((y.size, 4))
        llr[:, 0:2] = _llr_dim16(z.real, w)
        llr[:, 2:4] = _llr_dim16(z.imag, w)
        hard = np.empty((y.size, 4), dtype=np.int64)
        hard[:, 0:2] = _hard16(z.real)
        hard[:, 2:4] = _hard16(z.imag)
        hard[w == 0.0] = 0
        llr[w == 0.0] = 0.0
        return hard.reshape(-1), llr.reshape(-1)
    raise ConfigError(f"unsupported QAM order {order}")
