"""Radix-2 FFT and a 64-subcarrier OFDM transceiver with CP 16.

fft is the unnormalized decimation-in-time transform; ifft carries the
1/N factor so ifft(fft(x)) == x.  The OFDM chain internally rescales
time-domain symbols by sqrt(N) so the serialized signal keeps unit
average power per time sample, which keeps the SNR bookkeeping of
snr_to_noise_var valid sample-for-sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import coding, modem
from .channels import ChannelRealization, complex_noise, multipath
from .errors import ConfigError, FramingError


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 DIT transform along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 0 or (n & (n - 1)) != 0:
        raise ConfigError(f"fft length {n} is not a power of two")
    out = x[..., _bit_reverse_indices(n)].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(x.shape[:-1] + (n // size, size))
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return out


def ifft(x: np.ndarray) -> np.ndarray:
    """Inverse transform, normalized by 1/N."""
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


@dataclass(frozen=True)
class OfdmSpec:
    """Frame geometry: one all-known pilot symbol, then data symbols."""

    subcarriers: int = 64
    cyclic_prefix: int = 16
    order: int = 4  # 4-QAM data modulation

    def __post_init__(self):
        if self.subcarriers & (self.subcarriers - 1):
            raise ConfigError("subcarrier count must be a power of two")
        if self.cyclic_prefix < 2:
            raise ConfigError("cyclic prefix shorter than the channel delay spread")

    @property
    def bits_per_symbol(self) -> int:
        return self.subcarriers * int(np.log2(self.order))

    def pilot_freq(self) -> np.ndarray:
        return np.ones(self.subcarriers, dtype=np.complex128)


def _to_time(freq_syms: np.ndarray, spec: OfdmSpec) -> np.ndarray:
    """IFFT each row, scale to unit sample power, prepend CP, serialize."""
    n = spec.subcarriers
    t = ifft(freq_syms) * np.sqrt(n)
    with_cp = np.concatenate([t[:, n - spec.cyclic_prefix :], t], axis=1)
    return with_cp.reshape(-1)


def _from_time(serial: np.ndarray, n_syms: int, spec: OfdmSpec) -> np.ndarray:
    """Split serialized samples back into symbols, strip CP, FFT, unscale."""
    n, cp = spec.subcarriers, spec.cyclic_prefix
    sym_len = n + cp
    body = serial[: n_syms * sym_len].reshape(n_syms, sym_len)[:, cp:]
    return fft(body) / np.sqrt(n)


def channel_freq_response(realization: ChannelRealization, n: int) -> np.ndarray:
    """Exact per-subcarrier response of the realized taps (oracle CSI)."""
    taps = realization.taps
    padded = np.zeros(taps.shape[:-1] + (n,), dtype=np.complex128)
    padded[..., : taps.shape[-1]] = taps
    return fft(padded)


def ofdm_chain(
    bits: np.ndarray,
    spec: OfdmSpec,
    realization: ChannelRealization,
    sigma2: float,
    rng: np.random.Generator,
    coded: bool = False,
    trellis: coding.TrellisSpec = coding.DEFAULT_TRELLIS,
    perfect_csi: bool = False,
) -> tuple[np.ndarray, dict]:
    """Run one OFDM frame end to end over a multipath realization.

    Uncoded: bits -> QAM -> S/P -> ifft -> +CP -> channel -> -CP -> fft
    -> estimate -> one-tap equalize -> demod.  Coded prepends RSC
    encoding and appends soft Viterbi.  The channel estimate is LS from
    the pilot symbol (H_k = Y_k / P_k) unless perfect_csi is set.
    Returns (recovered info bits, diagnostics dict).
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if realization.kind != "multipath":
        raise ConfigError("ofdm_chain expects a multipath realization")

    tx_bits = coding.rsc_encode(bits, trellis) if coded else bits
    if tx_bits.size % spec.bits_per_symbol:
        raise FramingError(
            f"{tx_bits.size} transmit bits do not fill whole OFDM symbols "
            f"of {spec.bits_per_symbol} bits"
        )
    syms = modem.qam_mod(tx_bits, spec.order).reshape(-1, spec.subcarriers)
    frame_freq = np.vstack([spec.pilot_freq()[None, :], syms])
    serial = _to_time(frame_freq, spec)

    rx_serial = multipath(serial, realization, sigma2, rng)
    rx_freq = _from_time(rx_serial, frame_freq.shape[0], spec)

    if perfect_csi:
        h_hat = channel_freq_response(realization, spec.subcarriers).reshape(-1)
    else:
        h_hat = rx_freq[0] / spec.pilot_freq()
    data_freq = rx_freq[1:].reshape(-1)
    gains = np.tile(h_hat, syms.shape[0])
    hard, llr = modem.qam_demod(data_freq, spec.order, sigma2, gains=gains)

    if coded:
        out = coding.viterbi_decode(llr, trellis)
    else:
        out = hard
    diag = {"h_hat": h_hat, "rx_freq": rx_freq}
    return out, diag
