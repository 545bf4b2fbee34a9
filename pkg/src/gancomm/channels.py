"""Ground-truth stochastic channels: AWGN, flat Rayleigh, 3-tap multipath.

Complex blocks are numpy complex128 arrays, optionally with a leading
batch axis.  Noise variance sigma2 is always per complex dimension
(split equally across I and Q); a purely real signal therefore sees
variance sigma2/2.  All randomness flows through an explicit
numpy Generator so runs replay exactly from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

N_TAPS = 3
TAP_DELAYS = (0, 1, 2)


def snr_to_noise_var(snr_db: float, bits_per_block: int, symbols_per_block: int) -> float:
    """Noise variance per complex dimension for a given Eb/N0 in dB.

    With unit average transmit power, a block spends ``symbols_per_block``
    units of energy on ``bits_per_block`` information bits, so
    sigma2 = K / (N * 10^(snr/10)).

    >>> snr_to_noise_var(0.0, 8, 8)
    1.0
    """
    if symbols_per_block <= 0:
        raise ConfigError("symbols_per_block must be positive")
    if bits_per_block <= 0:
        raise ConfigError("bits_per_block must be positive")
    return symbols_per_block / (bits_per_block * 10.0 ** (snr_db / 10.0))


def complex_noise(rng: np.random.Generator, shape, sigma2: float) -> np.ndarray:
    """Circularly-symmetric Gaussian noise with E|w|^2 = sigma2."""
    if sigma2 < 0:
        raise DomainError("noise variance must be non-negative")
    if sigma2 == 0:
        return np.zeros(shape, dtype=np.complex128)
    s = np.sqrt(sigma2 / 2.0)
    return rng.normal(0.0, s, shape) + 1j * rng.normal(0.0, s, shape)


def awgn(x: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """y = x + w with w ~ CN(0, sigma2) i.i.d. per symbol."""
    x = np.asarray(x, dtype=np.complex128)
    return x + complex_noise(rng, x.shape, sigma2)


def awgn_real(x: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Real-signal AWGN: one real dimension, so variance sigma2/2."""
    x = np.asarray(x, dtype=np.float64)
    if sigma2 < 0:
        raise DomainError("noise variance must be non-negative")
    if sigma2 == 0:
        return x.copy()
    return x + rng.normal(0.0, np.sqrt(sigma2 / 2.0), x.shape)


def rayleigh_flat(
    x: np.ndarray, sigma2: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-symbol fading y_n = h_n x_n + w_n with h_n ~ CN(0,1) i.i.d.

    Returns (y, h); h is for oracle-CSI baselines only and is never fed
    to a learned receiver.
    """
    x = np.asarray(x, dtype=np.complex128)
    h = complex_noise(rng, x.shape, 1.0)
    return h * x + complex_noise(rng, x.shape, sigma2), h


def pdp_weights(kind: str, n_taps: int = N_TAPS) -> np.ndarray:
    """Average tap powers E|b_k|^2: all-ones, or halving per delay."""
    if kind == "equal":
        return np.ones(n_taps)
    if kind == "exponential":
        return 2.0 ** -np.arange(n_taps, dtype=np.float64)
    raise ConfigError(f"unknown PDP kind {kind!r}")


@dataclass
class ChannelProfile:
    """Static channel description shared by a whole experiment."""

    kind: str  # awgn | rayleigh_flat | multipath
    pdp: str = "equal"
    pilot_len: int = 1
    pilot_value: complex = 1.0 + 0.0j
    # block fading: one gain per block (learned systems). Per-symbol
    # i.i.d. fading is only used by the classical Rayleigh baseline.
    block_fading: bool = True

    def __post_init__(self):
        if self.kind not in ("awgn", "rayleigh_flat", "multipath"):
            raise ConfigError(f"unknown channel kind {self.kind!r}")
        if self.kind == "multipath" and self.pdp not in ("equal", "exponential"):
            raise ConfigError(f"unknown PDP kind {self.pdp!r}")
        if self.pilot_len < 0:
            raise ConfigError("pilot_len must be non-negative")

    @property
    def extra_symbols(self) -> int:
        """Convolution tail length added to every transmitted block."""
        return N_TAPS - 1 if self.kind == "multipath" else 0

    def pilots(self) -> np.ndarray:
        return np.full(self.pilot_len, self.pilot_value, dtype=np.complex128)


@dataclass
class ChannelRealization:
    """One draw of channel state for a batch of blocks.

    flat_gains has shape (batch,) for rayleigh; taps has shape
    (batch, 3) with symbol-spaced delays 0, 1, 2 for multipath; both
    are None for awgn.
    """

    kind: str
    flat_gains: np.ndarray | None = None
    taps: np.ndarray | None = None
    sigma2: float = 0.0

    @property
    def batch(self) -> int:
        if self.flat_gains is not None:
            return self.flat_gains.shape[0]
        if self.taps is not None:
            return self.taps.shape[0]
        return 0


def draw_realization(
    profile: ChannelProfile, sigma2: float, rng: np.random.Generator, batch: int = 1
) -> ChannelRealization:
    """Draw fresh per-block channel state (nothing for awgn)."""
    if profile.kind == "awgn":
        return ChannelRealization("awgn", sigma2=sigma2)
    if profile.kind == "rayleigh_flat":
        return ChannelRealization(
            "rayleigh_flat", flat_gains=complex_noise(rng, (batch,), 1.0), sigma2=sigma2
        )
    weights = pdp_weights(profile.pdp)
    taps = np.empty((batch, N_TAPS), dtype=np.complex128)
    for k in range(N_TAPS):
        taps[:, k] = complex_noise(rng, (batch,), weights[k])
    return ChannelRealization("multipath", taps=taps, sigma2=sigma2)


def _convolve_taps(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Linear convolution with delays 0..2; output length K + 2."""
    k_len = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (k_len + N_TAPS - 1,), dtype=np.complex128)
    for d in TAP_DELAYS:
        out[..., d : d + k_len] += taps[..., d : d + 1] * x
    return out


def multipath(
    x: np.ndarray,
    realization: ChannelRealization,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """y = (x * h) + w over the realized 3-tap response, length K+2."""
    if realization.kind != "multipath":
        raise ConfigError("multipath() needs a multipath realization")
    if realization.taps is None:
        raise ConfigError("realization has no taps (missing PDP draw)")
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 1:
        y = _convolve_taps(x[None, :], realization.taps)[0]
    else:
        y = _convolve_taps(x, realization.taps)
    return y + complex_noise(rng, y.shape, sigma2)


def apply_realization(
    x: np.ndarray,
    realization: ChannelRealization,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pass (batch, K) data blocks through the realized channel plus noise."""
    x = np.asarray(x, dtype=np.complex128)
    if realization.kind == "awgn":
        return awgn(x, sigma2, rng)
    if realization.kind == "rayleigh_flat":
        return realization.flat_gains[:, None] * x + complex_noise(rng, x.shape, sigma2)
    return multipath(x, realization, sigma2, rng)


def transmit_pilots(
    profile: ChannelProfile,
    realization: ChannelRealization,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Send the profile's known pilots through the same channel state.

    Noise is drawn independently of the data transmission.  Output shape
    is (batch, pilot_len) plus the multipath tail when applicable.
    """
    if profile.pilot_len == 0:
        batch = max(realization.batch, 1)
        return np.zeros((batch, 0), dtype=np.complex128)
    pilots = profile.pilots()
    if realization.kind == "awgn":
        return pilots[None, :] + complex_noise(rng, (1, profile.pilot_len), sigma2)
    batch = realization.batch
    tiled = np.broadcast_to(pilots, (batch, profile.pilot_len))
    if realization.kind == "rayleigh_flat":
        y = realization.flat_gains[:, None] * tiled
    else:
        y = _convolve_taps(tiled, realization.taps)
    return y + complex_noise(rng, y.shape, sigma2)


def c_to_ri(x: np.ndarray) -> np.ndarray:
    """(..., K) complex -> (..., K, 2) stacked real/imag."""
    x = np.asarray(x, dtype=np.complex128)
    return np.stack([x.real, x.imag], axis=-1)


def ri_to_c(x: np.ndarray) -> np.ndarray:
    """(..., K, 2) stacked real/imag -> (..., K) complex."""
    x = np.asarray(x, dtype=np.float64)
    return x[..., 0] + 1j * x[..., 1]
