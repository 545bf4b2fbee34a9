"""FFT engine and the OFDM pilot/CP/equalization chain."""

import csv
import pathlib

import numpy as np
import pytest

from gancomm.channels import ChannelProfile, ChannelRealization, draw_realization
from gancomm.errors import ConfigError, FramingError
from gancomm.ofdm import OfdmSpec, channel_freq_response, fft, ifft, ofdm_chain

GOLDENS = pathlib.Path(__file__).parent / "goldens"


def test_fft_matches_direct_dft_golden():
    rows = list(csv.DictReader(open(GOLDENS / "dft16.csv")))
    x = np.array([complex(float(r["re_in"]), float(r["im_in"])) for r in rows])
    want = np.array([complex(float(r["re_out"]), float(r["im_out"])) for r in rows])
    assert np.max(np.abs(fft(x) - want)) < 1e-9


def test_fft_matches_reference_library_across_sizes():
    rng = np.random.default_rng(97)
    for n in (2, 4, 8, 64, 256):
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        assert np.max(np.abs(fft(x) - np.fft.fft(x))) < 1e-10
        assert np.max(np.abs(ifft(x) - np.fft.ifft(x))) < 1e-10


def test_fft_ifft_roundtrip_error_below_1e9():
    rng = np.random.default_rng(101)
    x = rng.normal(size=(50, 64)) + 1j * rng.normal(size=(50, 64))
    assert np.max(np.abs(ifft(fft(x)) - x)) < 1e-9
    assert np.max(np.abs(fft(ifft(x)) - x)) < 1e-9


def test_fft_linearity_and_parseval():
    rng = np.random.default_rng(103)
    x = rng.normal(size=64) + 1j * rng.normal(size=64)
    y = rng.normal(size=64) + 1j * rng.normal(size=64)
    assert np.allclose(fft(x + 3j * y), fft(x) + 3j * fft(y), atol=1e-10)
    assert abs(np.sum(np.abs(fft(x)) ** 2) - 64 * np.sum(np.abs(x) ** 2)) < 1e-8


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        fft(np.zeros(12, dtype=complex))
    with pytest.raises(ConfigError):
        OfdmSpec(subcarriers=48)


def test_channel_freq_response_is_dft_of_taps():
    rng = np.random.default_rng(107)
    real = draw_realization(ChannelProfile("multipath", pdp="equal"), 0.0, rng)
    h = channel_freq_response(real, 64)[0]
    k = np.arange(64)
    want = sum(real.taps[0, d] * np.exp(-2j * np.pi * k * d / 64) for d in range(3))
    assert np.allclose(h, want, atol=1e-10)


def test_uncoded_chain_recovers_bits_at_high_snr():
    rng = np.random.default_rng(109)
    spec = OfdmSpec()
    for _ in range(20):
        real = draw_realization(ChannelProfile("multipath", pdp="equal"), 0.0, rng)
        while np.min(np.abs(channel_freq_response(real, 64))) < 0.3:
            real = draw_realization(ChannelProfile("multipath", pdp="equal"), 0.0, rng)
        bits = rng.integers(0, 2, 128)
        out, diag = ofdm_chain(bits, spec, real, 1e-8, rng)
        assert np.array_equal(out, bits)
        # LS estimate converges to the true response as noise vanishes
        assert np.allclose(diag["h_hat"], channel_freq_response(real, 64)[0],
                           atol=1e-3)


def test_cyclic_prefix_makes_equalization_exact_per_subcarrier():
    # with CP >= delay spread, y_k = H_k x_k exactly at zero noise
    rng = np.random.default_rng(113)
    spec = OfdmSpec()
    real = draw_realization(ChannelProfile("multipath", pdp="exponential"), 0.0, rng)
    bits = rng.integers(0, 2, 128)
    out, diag = ofdm_chain(bits, spec, real, 0.0, rng, perfect_csi=True)
    assert np.array_equal(out, bits)
    h = channel_freq_response(real, 64)[0]
    assert np.allclose(diag["rx_freq"][0], h, atol=1e-9)  # pilot row = H * 1


def test_coded_chain_frame_geometry():
    rng = np.random.default_rng(127)
    spec = OfdmSpec()
    real = draw_realization(ChannelProfile("multipath", pdp="equal"), 0.0, rng)
    # rate 1/2 with 2 tail steps: 62 info bits -> 128 coded -> one symbol
    bits = rng.integers(0, 2, 62)
    out, _ = ofdm_chain(bits, spec, real, 1e-8, rng, coded=True)
    assert out.shape == (62,)
    with pytest.raises(FramingError):
        ofdm_chain(rng.integers(0, 2, 100), spec, real, 0.1, rng)


def test_chain_rejects_wrong_realization_kind():
    rng = np.random.default_rng(131)
    flat = ChannelRealization("rayleigh_flat", flat_gains=np.ones(1, complex))
    with pytest.raises(ConfigError):
        ofdm_chain(np.zeros(128, dtype=int), OfdmSpec(), flat, 0.1, rng)
