"""Monte Carlo BER/BLER evaluation and constellation dumps.

Every curve is measured against the real channel; the GAN surrogate
never appears on an evaluation path.  Randomness is derived per block
from a counter-based generator, so results do not depend on batching
and a rerun with the same seed reproduces curves byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import (
    ChannelProfile,
    apply_realization,
    awgn_real,
    c_to_ri,
    complex_noise,
    draw_realization,
    ri_to_c,
    snr_to_noise_var,
    transmit_pilots,
)
from .coding import DEFAULT_TRELLIS, hamming74_encode, rsc_encode, viterbi_decode
from .config import ExperimentConfig
from .errors import ConfigError, ContractError, FramingError
from .modem import bpsk_mod, qam_demod, qam_mod
from .ofdm import OfdmSpec, ofdm_chain
from .tensor import Tensor
from .training import Components, pilot_obs_len

CSV_HEADER = "snr_db,ber,bler,bits,blocks,ci95"
CHUNK = 512  # blocks decided per vectorized pass; counts are chunk-invariant

# disjoint counter streams so evaluation and dumps never share randomness
EVAL_STREAM = 0
DUMP_STREAM = 1


def block_rng(seed: int, snr_index: int, block_index: int,
              stream: int = EVAL_STREAM) -> np.random.Generator:
    """Per-block generator from (seed, snr point, block index).

    The block index sits in its own 64-bit counter word, so every block
    owns a disjoint slice of the Philox counter space and parallel or
    re-batched evaluation consumes identical randomness per block.
    """
    bg = np.random.Philox(key=seed, counter=[0, block_index, snr_index, stream])
    return np.random.Generator(bg)


def ber(tx_bits, rx_bits) -> float:
    """Fraction of differing bits."""
    a = np.asarray(tx_bits)
    b = np.asarray(rx_bits)
    if a.shape != b.shape:
        raise FramingError(f"bit arrays differ in shape: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise FramingError("empty bit arrays")
    return float(np.mean(a != b))


def bler(tx_blocks, rx_blocks) -> float:
    """Fraction of blocks with at least one differing bit."""
    a = np.asarray(tx_blocks)
    b = np.asarray(rx_blocks)
    if a.shape != b.shape or a.ndim != 2:
        raise FramingError("bler() wants two equal-shape (blocks, bits) arrays")
    return float(np.mean(np.any(a != b, axis=1)))


def wilson_halfwidth(errors: int, trials: int, z: float = 1.96) -> float:
    """Half-width of the Wilson 95% interval for a binomial proportion."""
    if trials <= 0:
        return 0.0
    p = errors / trials
    denom = 1.0 + z * z / trials
    return z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom


def qfunc(x) -> np.ndarray:
    """Gaussian tail probability Q(x) = 0.5 erfc(x / sqrt(2))."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.array([0.5 * math.erfc(v / math.sqrt(2.0)) for v in np.atleast_1d(arr)])
    return out if arr.ndim else float(out[0])


def qam4_awgn_ber(snr_db: float) -> float:
    """Closed-form Gray 4-QAM bit error rate on AWGN at Eb/N0 = snr_db."""
    gamma = 10.0 ** (snr_db / 10.0)
    return float(qfunc(math.sqrt(2.0 * gamma)))


def qam4_rayleigh_ber(snr_db: float) -> float:
    """Closed-form Gray 4-QAM BER on flat Rayleigh with coherent detection."""
    gamma = 10.0 ** (snr_db / 10.0)
    return 0.5 * (1.0 - math.sqrt(gamma / (1.0 + gamma)))


@dataclass
class BerPoint:
    snr_db: float
    bits_sent: int
    bit_errors: int
    blocks_sent: int
    block_errors: int
    ber: float
    bler: float
    ci95_halfwidth: float
    capped: bool = False  # stopped by max_blocks before min_errors


class UncodedQamSystem:
    """Gray-mapped QAM with coherent max-log detection, no code."""

    def __init__(self, n_info: int, kind: str, order: int = 4):
        bps = {4: 2, 16: 4}[order]
        if n_info % bps:
            raise ConfigError(f"{order}-QAM block needs a multiple of {bps} bits")
        if kind not in ("awgn", "rayleigh_flat"):
            raise ConfigError("uncoded single-carrier supports awgn or rayleigh_flat")
        self.name = f"uncoded_qam{order}_{kind}"
        self.order = order
        self.kind = kind
        self.n_info = n_info
        self.k = n_info // bps
        self.n_chan = self.k

    def simulate(self, rngs, sigma2: float):
        b, k = len(rngs), self.k
        s = np.empty((b, self.n_info), dtype=np.int64)
        h = np.ones((b, k), dtype=np.complex128)
        w = np.empty((b, k), dtype=np.complex128)
        for j, rng in enumerate(rngs):
            s[j] = rng.integers(0, 2, self.n_info)
            if self.kind == "rayleigh_flat":
                h[j] = complex_noise(rng, (k,), 1.0)
            w[j] = complex_noise(rng, (k,), 1.0)
        x = qam_mod(s.reshape(-1), self.order).reshape(b, k)
        y = h * x + math.sqrt(sigma2) * w
        gains = h.reshape(-1) if self.kind == "rayleigh_flat" else None
        hard, _ = qam_demod(y.reshape(-1), self.order, sigma2, gains=gains)
        return s, hard.reshape(b, self.n_info)


class HammingBpskSystem:
    """Hamming(7,4), BPSK, exhaustive soft maximum-likelihood decoding."""

    def __init__(self, kind: str = "awgn"):
        if kind != "awgn":
            raise ConfigError("the Hamming baseline runs on awgn")
        self.name = "hamming74_mld_awgn"
        self.n_info = 4
        self.n_chan = 7
        infos = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1).astype(np.int64)
        self._infos = infos
        self._codebook = np.array(
            [bpsk_mod(hamming74_encode(u)) for u in infos], dtype=np.float64
        )

    def simulate(self, rngs, sigma2: float):
        b = len(rngs)
        s = np.empty((b, 4), dtype=np.int64)
        w = np.empty((b, 7))
        for j, rng in enumerate(rngs):
            s[j] = rng.integers(0, 2, 4)
            w[j] = rng.normal(0.0, 1.0, 7)
        idx = s @ (1 << np.arange(3, -1, -1))
        y = self._codebook[idx] + math.sqrt(sigma2 / 2.0) * w
        best = np.argmax(y @ self._codebook.T, axis=1)
        return s, self._infos[best]


class RscQamSystem:
    """Rate-1/2 RSC with tail bits, 4-QAM, soft Viterbi decoding."""

    def __init__(self, n_info: int, kind: str):
        if kind not in ("awgn", "rayleigh_flat"):
            raise ConfigError("the RSC baseline supports awgn or rayleigh_flat")
        self.name = f"rsc_viterbi_qam4_{kind}"
        self.kind = kind
        self.n_info = n_info
        self.k = n_info + DEFAULT_TRELLIS.tail_bits  # 2 coded bits per symbol
        self.n_chan = self.k

    def simulate(self, rngs, sigma2: float):
        b, k = len(rngs), self.k
        s = np.empty((b, self.n_info), dtype=np.int64)
        h = np.ones((b, k), dtype=np.complex128)
        w = np.empty((b, k), dtype=np.complex128)
        for j, rng in enumerate(rngs):
            s[j] = rng.integers(0, 2, self.n_info)
            if self.kind == "rayleigh_flat":
                h[j] = complex_noise(rng, (k,), 1.0)
            w[j] = complex_noise(rng, (k,), 1.0)
        coded = np.stack([rsc_encode(s[j]) for j in range(b)])
        x = qam_mod(coded.reshape(-1), 4).reshape(b, k)
        y = h * x + math.sqrt(sigma2) * w
        gains = h.reshape(-1) if self.kind == "rayleigh_flat" else None
        _, llr = qam_demod(y.reshape(-1), 4, sigma2, gains=gains)
        llr = llr.reshape(b, 2 * k)
        out = np.stack([viterbi_decode(llr[j]) for j in range(b)])
        return s, out


class OfdmSystem:
    """One pilot-led OFDM frame per block over the 3-tap channel."""

    def __init__(self, pdp: str, coded: bool, perfect_csi: bool = False,
                 n_data_syms: int = 1):
        self.spec = OfdmSpec()
        self.coded = coded
        self.perfect_csi = perfect_csi
        bits_per_sym = self.spec.bits_per_symbol
        if coded:
            # rate 1/2 plus tail must fill the data symbols exactly
            self.n_info = ((n_data_syms * bits_per_sym) // 2
                           - DEFAULT_TRELLIS.tail_steps)
        else:
            self.n_info = n_data_syms * bits_per_sym
        self.n_chan = (n_data_syms + 1) * (self.spec.subcarriers
                                           + self.spec.cyclic_prefix)
        self.profile = ChannelProfile("multipath", pdp=pdp)
        csi = "perfect" if perfect_csi else "ls"
        self.name = f"ofdm_{'rsc_' if coded else ''}qam4_{pdp}_{csi}csi"

    def simulate(self, rngs, sigma2: float):
        b = len(rngs)
        s = np.empty((b, self.n_info), dtype=np.int64)
        out = np.empty((b, self.n_info), dtype=np.int64)
        for j, rng in enumerate(rngs):
            s[j] = rng.integers(0, 2, self.n_info)
            real = draw_realization(self.profile, sigma2, rng)
            hat, _ = ofdm_chain(s[j], self.spec, real, sigma2, rng,
                                coded=self.coded, perfect_csi=self.perfect_csi)
            out[j] = hat
        return s, out


class LearnedSystem:
    """Trained transmitter/receiver pair scored on the real channel."""

    def __init__(self, comps: Components, cfg: ExperimentConfig, trained: bool):
        if comps.rx is None:
            raise ConfigError("this system has no receiver to evaluate")
        self.comps = comps
        self.cfg = cfg
        self.ready = trained
        self.name = cfg.system
        self.n_info = cfg.block.n
        self.n_chan = cfg.block.k
        ch = cfg.channel
        # evaluation may deliberately mismatch the training power-delay profile
        self.profile = ChannelProfile(ch.kind, pdp=ch.eval_pdp or ch.pdp,
                                      pilot_len=ch.pilot_len)
        self.yp_len = pilot_obs_len(cfg)

    def simulate(self, rngs, sigma2: float):
        b = len(rngs)
        n = self.n_info
        s = np.empty((b, n), dtype=np.int64)
        reals = []
        for j, rng in enumerate(rngs):
            s[j] = rng.integers(0, 2, n)
            reals.append(draw_realization(self.profile, sigma2, rng))
        x = self.comps.source.encode(s.astype(np.float64))
        if self.cfg.train.real_signal:
            y = np.stack([awgn_real(x[j], sigma2, rngs[j]) for j in range(b)])
            y_p = None
        else:
            x_c = ri_to_c(x)
            y_rows = []
            yp_rows = []
            for j, rng in enumerate(rngs):
                y_rows.append(apply_realization(x_c[j:j + 1], reals[j], sigma2, rng)[0])
                if self.yp_len > 0:
                    yp_rows.append(
                        transmit_pilots(self.profile, reals[j], sigma2, rng)[0]
                    )
            y = c_to_ri(np.stack(y_rows))
            y_p = c_to_ri(np.stack(yp_rows)) if yp_rows else None
        pred = self.comps.rx.forward(
            Tensor(y), Tensor(y_p) if y_p is not None else None
        )
        return s, (pred.data > 0.5).astype(np.int64)


def build_eval_system(cfg: ExperimentConfig, comps: Components | None = None,
                      trained: bool = False):
    """Map a config to a simulatable system; learned ones need components."""
    kind = cfg.channel.kind
    sys = cfg.system
    if sys == "baseline_uncoded":
        return UncodedQamSystem(cfg.block.n, kind)
    if sys == "baseline_hamming":
        return HammingBpskSystem(kind)
    if sys == "baseline_rsc":
        return RscQamSystem(cfg.block.n, kind)
    if sys in ("baseline_ofdm", "baseline_ofdm_coded"):
        if kind != "multipath":
            raise ConfigError("OFDM baselines run on the multipath channel")
        return OfdmSystem(cfg.channel.eval_pdp or cfg.channel.pdp,
                          coded=sys == "baseline_ofdm_coded",
                          perfect_csi=cfg.channel.perfect_csi)
    if sys in ("e2e_fcn", "e2e_cnn"):
        if comps is None:
            raise ContractError("learned systems need trained components")
        return LearnedSystem(comps, cfg, trained)
    raise ConfigError(f"system {sys!r} has no BER evaluation")


def monte_carlo_curve(system, cfg: ExperimentConfig) -> list[BerPoint]:
    """Sweep cfg.eval.snr_list; per point stop at min_errors bit errors
    or max_blocks blocks, whichever first.  Real channel only."""
    if not getattr(system, "ready", True):
        raise ContractError("refusing to evaluate an untrained learned system")
    ev = cfg.eval
    if not ev.snr_list:
        raise ConfigError("empty SNR list")
    points = []
    for si, snr in enumerate(ev.snr_list):
        sigma2 = snr_to_noise_var(snr, system.n_info, system.n_chan)
        bit_err = blk_err = bits = blocks = 0
        while bit_err < ev.min_errors and blocks < ev.max_blocks:
            b = int(min(CHUNK, ev.max_blocks - blocks))
            rngs = [block_rng(cfg.seed, si, blocks + j) for j in range(b)]
            tx, rx = system.simulate(rngs, sigma2)
            diff = tx != rx
            # stop exactly at the block that crosses min_errors so the
            # recorded counts do not depend on the chunk size
            cum = bit_err + np.cumsum(diff.sum(axis=1))
            hit = np.nonzero(cum >= ev.min_errors)[0]
            if hit.size:
                diff = diff[: int(hit[0]) + 1]
                b = diff.shape[0]
            bit_err += int(diff.sum())
            blk_err += int(diff.any(axis=1).sum())
            blocks += b
            bits += b * system.n_info
        points.append(BerPoint(
            snr_db=float(snr), bits_sent=bits, bit_errors=bit_err,
            blocks_sent=blocks, block_errors=blk_err,
            ber=bit_err / bits, bler=blk_err / blocks,
            ci95_halfwidth=wilson_halfwidth(bit_err, bits),
            capped=bit_err < ev.min_errors,
        ))
    return points


def curve_csv_lines(points: list[BerPoint], cfg: ExperimentConfig,
                    system_name: str) -> list[str]:
    """Self-describing curve CSV: comments, fixed header, fixed formats."""
    lines = [
        f"# config_hash: {cfg.config_hash()}",
        f"# system: {system_name}",
        "# snr axis: Eb/N0 in dB",
    ]
    capped = [f"{p.snr_db:g}" for p in points if p.capped]
    if capped:
        lines.append("# capped at max_blocks: " + " ".join(capped))
    lines.append(CSV_HEADER)
    for p in points:
        lines.append(
            f"{p.snr_db:g},{p.ber:.6e},{p.bler:.6e},{p.bits_sent},"
            f"{p.blocks_sent},{p.ci95_halfwidth:.6e}"
        )
    return lines


def write_curve_csv(path: str, points: list[BerPoint], cfg: ExperimentConfig,
                    system_name: str) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(curve_csv_lines(points, cfg, system_name)) + "\n")


def write_gnuplot(prefix: str, points: list[BerPoint]) -> list[str]:
    """Two-column whitespace files per curve, one for BER and one for BLER."""
    paths = []
    for field in ("ber", "bler"):
        path = f"{prefix}_{field}.dat"
        with open(path, "w") as fh:
            fh.write(f"# Eb/N0_dB {field}\n")
            for p in points:
                fh.write(f"{p.snr_db:g} {getattr(p, field):.6e}\n")
        paths.append(path)
    return paths


def constellation_dump(comps: Components, cfg: ExperimentConfig,
                       n_conditions: int = 25, samples_per_condition: int = 64,
                       path: str | None = None) -> list[str]:
    """Side-by-side real-channel and generator output clouds as CSV.

    Inputs are the 16 Gray-mapped 16-QAM symbols.  On awgn the condition
    is the input symbol alone (ids 0..15).  On fading channels each of
    n_conditions channel draws becomes a bin with one shared pilot
    observation (recorded as a comment), and condition_id = bin*16 +
    symbol index.  Real and generated rows come in equal numbers.
    """
    if comps.gen is None:
        raise ContractError("constellation dump needs a trained generator")
    if cfg.block.k != 1:
        raise ConfigError("constellation dump wants one symbol per block (k=1)")
    kind = cfg.channel.kind
    sigma2 = snr_to_noise_var(cfg.train.snr_db, cfg.block.n, cfg.block.k)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed,
                                               counter=[0, 0, 0, DUMP_STREAM]))
    sym_bits = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1).astype(float)
    syms = qam_mod(sym_bits.reshape(-1), 16)  # canonical 16-QAM order

    lines = [
        f"# config_hash: {cfg.config_hash()}",
        f"# channel: {kind} at train snr {cfg.train.snr_db:g} dB",
        "condition_id,source,re,im",
    ]
    profile = ChannelProfile(kind, pdp=cfg.channel.pdp, pilot_len=cfg.channel.pilot_len)
    m = samples_per_condition

    def emit(cond_id: int, source: str, vals: np.ndarray):
        for v in vals:
            lines.append(f"{cond_id},{source},{v.real:.6f},{v.imag:.6f}")

    if kind == "awgn":
        bins = [None]
    else:
        bins = [draw_realization(profile, sigma2, rng) for _ in range(n_conditions)]
    for b_idx, real in enumerate(bins):
        y_p = None
        if real is not None and profile.pilot_len > 0:
            y_p = transmit_pilots(profile, real, sigma2, rng)  # one obs per bin
            flat = y_p.reshape(-1)
            desc = " ".join(f"{v.real:.6f}{v.imag:+.6f}j" for v in flat)
            lines.append(f"# condition_bin {b_idx}: pilot_obs {desc}")
        for s_idx, x in enumerate(syms):
            cond = b_idx * 16 + s_idx if real is not None else s_idx
            x_blk = np.full((m, 1), x, dtype=np.complex128)
            if real is None:
                y_real = x_blk + complex_noise(rng, (m, 1), sigma2)
            else:
                gains = np.broadcast_to(real.flat_gains, (m,)) \
                    if real.kind == "rayleigh_flat" else None
                if gains is not None:
                    y_real = gains[:, None] * x_blk + complex_noise(rng, (m, 1), sigma2)
                else:
                    raise ConfigError("constellation dump supports awgn or "
                                      "rayleigh_flat conditioning")
            z = comps.gen.prior.sample(rng, m)
            x_ri = c_to_ri(x_blk)
            yp_t = None
            if y_p is not None:
                yp_ri = c_to_ri(y_p)  # (1, pilot_len, 2), shared across the bin
                yp_t = Tensor(np.repeat(yp_ri, m, axis=0))
            y_fake = ri_to_c(comps.gen.forward(z, x_ri, yp_t).data)
            emit(cond, "real", y_real.reshape(-1))
            emit(cond, "gan", y_fake.reshape(-1))
    if path is not None:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return lines
