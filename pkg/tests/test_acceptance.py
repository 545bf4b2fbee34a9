"""System-level acceptance gate: ten checks, one test each, in order.

Every check runs the real product path at its stated tolerance; the
training-backed ones share session fixtures so each model is trained
once and reused.  The whole gate takes tens of minutes on one core;
run the other test modules for quick feedback.
"""

import copy
import math
import time

import numpy as np
import pytest

from gancomm import cli, evaluate, training
from gancomm.channels import (
    ChannelProfile,
    c_to_ri,
    draw_realization,
    ri_to_c,
    snr_to_noise_var,
    transmit_pilots,
)
from gancomm.coding import rsc_encode, viterbi_decode
from gancomm.config import from_dict
from gancomm.evaluate import monte_carlo_curve, wilson_halfwidth
from gancomm.modem import qam_demod, qam_mod
from gancomm.ofdm import fft, ifft
from gancomm.tensor import Tensor


def crossing_db(points, level=1e-2):
    """Log-linear SNR where a descending BLER curve crosses level."""
    snrs = [p.snr_db for p in points]
    vals = [p.bler for p in points]
    if vals[0] < level:
        return snrs[0]
    for (s0, v0), (s1, v1) in zip(zip(snrs, vals), zip(snrs[1:], vals[1:])):
        if v0 >= level > v1:
            t = (math.log10(v0) - math.log10(level)) / (
                math.log10(v0) - math.log10(v1)
            )
            return s0 + t * (s1 - s0)
    return float("inf")


# --- criterion 1: reverse-mode gradients vs central finite differences ---


def test_criterion_01_gradients_match_finite_differences():
    t0 = time.perf_counter()
    report = cli.gradcheck_suite(n_seeds=100)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"gradcheck took {elapsed:.1f}s"
    for kind, err in report.items():
        assert err < 1e-4, f"{kind}: max relative error {err:.3e}"


# --- criterion 2: uncoded 4-QAM/AWGN BER vs Q(sqrt(2 Eb/N0)) ---


def test_criterion_02_uncoded_qam_matches_analytic():
    cfg = from_dict({
        "system": "baseline_uncoded", "seed": 11,
        "channel": {"kind": "awgn"},
        "block": {"n": 1000, "k": 500},
        "eval": {"snr_list": [2.0, 4.0, 6.0],
                 "min_errors": 10 ** 9, "max_blocks": 1000},
    })
    t0 = time.perf_counter()
    pts = monte_carlo_curve(evaluate.build_eval_system(cfg), cfg)
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"sweep took {elapsed:.1f}s"
    for p in pts:
        assert p.bits_sent >= 10 ** 6
        ana = evaluate.qam4_awgn_ber(p.snr_db)
        assert abs(p.ber / ana - 1.0) <= 0.10, (
            f"{p.snr_db} dB: ber {p.ber:.4e} vs analytic {ana:.4e}"
        )


# --- criterion 3: Viterbi equals exhaustive maximum likelihood ---


def test_criterion_03_viterbi_equals_exhaustive_ml():
    t0 = time.perf_counter()
    n = 12
    infos = ((np.arange(4096)[:, None] >> np.arange(n - 1, -1, -1)) & 1)
    codebook = np.stack([rsc_encode(u) for u in infos.astype(np.int64)])
    signs = 1.0 - 2.0 * codebook  # llr > 0 favors bit 0
    rng = np.random.default_rng(303)
    sigma2 = 14.0 / 12.0  # Eb/N0 = 0 dB for 12 bits over 14 symbols
    agree = 0
    for _ in range(2000):
        u = rng.integers(0, 2, n)
        coded = rsc_encode(u)
        x = qam_mod(coded, 4)
        y = x + math.sqrt(sigma2 / 2.0) * (
            rng.normal(size=x.shape) + 1j * rng.normal(size=x.shape)
        )
        _, llr = qam_demod(y, 4, sigma2)
        ml = infos[int(np.argmax(signs @ llr))]
        agree += bool(np.array_equal(viterbi_decode(llr), ml))
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"took {elapsed:.1f}s"
    assert agree == 2000, f"Viterbi matched exhaustive ML on {agree}/2000 blocks"


# --- criterion 4: Hamming(7,4) MLD exhaustiveness and calibration ---


def _oracle_hamming_bler(snr_db: float, blocks: int, seed: int):
    """Self-contained Hamming(7,4) + BPSK + MLD simulation.

    Written against its own generator matrix and modulation to act as
    an independent cross-check of the packaged baseline; block error
    rate under MLD does not depend on the generator convention.
    """
    par = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0], [1, 1, 1]])
    infos = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1)
    codebook = np.concatenate([infos, (infos @ par) % 2], axis=1)
    bpsk = 1.0 - 2.0 * codebook
    sigma_r = math.sqrt(7.0 / (8.0 * 10.0 ** (snr_db / 10.0)))
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 16, blocks)
    y = bpsk[idx] + sigma_r * rng.normal(size=(blocks, 7))
    best = np.argmax(y @ bpsk.T, axis=1)
    errors = int(np.sum(best != idx))
    return errors / blocks, wilson_halfwidth(errors, blocks)


def test_criterion_04_hamming_mld_exhaustive_and_calibrated():
    from gancomm.coding import hamming74_encode, hamming74_mld

    infos = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1).astype(np.int64)
    checked = 0
    for u in infos:
        code = hamming74_encode(u)
        for pos in range(7):
            flipped = code.copy()
            flipped[pos] ^= 1
            hat = hamming74_mld(1.0 - 2.0 * flipped)  # hard bits as BPSK
            assert np.array_equal(hat, u), f"pattern {u} pos {pos} not corrected"
            checked += 1
    assert checked == 112

    cfg = from_dict({
        "system": "baseline_hamming", "seed": 21,
        "channel": {"kind": "awgn"},
        "block": {"n": 4, "k": 7},
        "eval": {"snr_list": [6.0], "min_errors": 900, "max_blocks": 800_000},
    })
    p = monte_carlo_curve(evaluate.build_eval_system(cfg), cfg)[0]
    hw_pkg = wilson_halfwidth(p.block_errors, p.blocks_sent)
    oracle_bler, hw_o = _oracle_hamming_bler(6.0, 600_000, seed=99)
    gap = abs(p.bler - oracle_bler)
    assert gap <= hw_pkg + hw_o, (
        f"BLER {p.bler:.4e} (±{hw_pkg:.1e}) vs oracle {oracle_bler:.4e} "
        f"(±{hw_o:.1e}): 95% intervals disjoint"
    )


# --- criteria 5 and 6 share one training campaign ---

E2E_SEEDS = (1, 2, 3)
E2E_TRAIN = {
    "batch": 320, "snr_db": 3.0, "steps_r": 150, "steps_t": 350,
    "steps_gan": 400, "outer": 120, "warmup_gan": 5000,
    "real_signal": True, "bridge": "gan", "k_d": 5,
    "gan_select_interval": 10, "gan_select_batch": 4000,
    "gan_select_topk": 10, "gan_select_reduce": "max",
    "final_gan_steps": 1000, "final_rx_steps": 600, "plateau_window": 0,
}


def _e2e_cfg(seed: int, snr_list, min_errors=1000, max_blocks=400_000):
    return from_dict({
        "system": "e2e_fcn", "seed": seed,
        "channel": {"kind": "awgn", "pilot_len": 0},
        "block": {"n": 4, "k": 7},
        "train": dict(E2E_TRAIN),
        "eval": {"snr_list": list(snr_list), "min_errors": min_errors,
                 "max_blocks": max_blocks},
    })


@pytest.fixture(scope="session")
def hamming_reference_crossing():
    cfg = from_dict({
        "system": "baseline_hamming", "seed": 5,
        "channel": {"kind": "awgn"},
        "block": {"n": 4, "k": 7},
        "eval": {"snr_list": [3.0, 3.5, 4.0, 4.5, 5.0],
                 "min_errors": 1000, "max_blocks": 400_000},
    })
    pts = monte_carlo_curve(evaluate.build_eval_system(cfg), cfg)
    return crossing_db(pts)


@pytest.fixture(scope="session")
def e2e_campaign(hamming_reference_crossing):
    """Train the 4-bit/7-symbol system, retrying seeds until one lands
    within 1 dB of the Hamming reference at BLER 1e-2."""
    attempts = []
    winner = None
    for seed in E2E_SEEDS:
        cfg = _e2e_cfg(seed, [4.0, 4.5, 5.0, 5.5, 6.0])
        t0 = time.perf_counter()
        result = training.run_end_to_end(cfg)
        wall = time.perf_counter() - t0
        system = evaluate.build_eval_system(cfg, result.components, trained=True)
        pts = monte_carlo_curve(system, cfg)
        cross = crossing_db(pts)
        attempt = {
            "seed": seed, "cfg": cfg, "result": result, "wall_s": wall,
            "crossing_db": cross,
            "gap_db": cross - hamming_reference_crossing,
        }
        attempts.append(attempt)
        if wall < 1800.0 and attempt["gap_db"] <= 1.0:
            winner = attempt
            break
    return {"attempts": attempts, "winner": winner,
            "hamming_crossing": hamming_reference_crossing}


def test_criterion_05_e2e_within_1db_of_hamming(e2e_campaign):
    ham = e2e_campaign["hamming_crossing"]
    assert 3.5 < ham < 4.5, f"Hamming reference crossing {ham:.2f} dB off scale"
    for a in e2e_campaign["attempts"]:
        assert a["wall_s"] < 1800.0, (
            f"seed {a['seed']}: training took {a['wall_s']:.0f}s"
        )
    tried = ", ".join(
        f"seed {a['seed']}: {a['crossing_db']:.2f} dB (gap {a['gap_db']:+.2f})"
        for a in e2e_campaign["attempts"]
    )
    assert e2e_campaign["winner"] is not None, (
        f"no seed within 1 dB of Hamming crossing {ham:.2f} dB; tried {tried}"
    )


def test_criterion_06_gan_residual_matches_awgn(e2e_campaign):
    # Inspect the model that would be shipped: the winning seed, else the
    # attempt that came closest to the reference curve.
    picked = e2e_campaign["winner"] or min(
        e2e_campaign["attempts"], key=lambda a: a["gap_db"]
    )
    comps = picked["result"].components
    cfg = picked["cfg"]
    rng = np.random.default_rng(123)
    n = 15000  # 15000 blocks x 7 dims > 1e5 residual coordinates
    z = comps.gen.prior.sample(rng, n)
    s = rng.integers(0, 2, (n, cfg.block.n)).astype(np.float64)
    x = comps.source.encode(s)
    residual = comps.gen.forward(z, x).data - x
    assert residual.size >= 100_000
    half = snr_to_noise_var(cfg.train.snr_db, cfg.block.n, cfg.block.k) / 2.0
    mean = abs(float(residual.mean()))
    var = float(residual.var())
    assert mean < 0.05, f"residual |mean| {mean:.4f}"
    assert 0.9 * half <= var <= 1.1 * half, (
        f"residual variance {var:.4f} outside [{0.9 * half:.4f}, {1.1 * half:.4f}]"
    )


# --- criterion 7: conditional fidelity across fading states ---


def test_criterion_07_gan_tracks_pilot_implied_gain():
    cfg = from_dict({
        "system": "gan_only", "seed": 1,
        "channel": {"kind": "rayleigh_flat", "pilot_len": 2},
        "block": {"n": 4, "k": 1},
        "train": {"batch": 320, "snr_db": 7.0, "source": "qam16",
                  "warmup_gan": 5000, "steps_gan": 0, "steps_r": 0,
                  "steps_t": 0, "outer": 1, "k_d": 5,
                  "gan_select_interval": 25, "gan_select_batch": 4000,
                  "gan_select_topk": 1, "plateau_window": 0},
    })
    comps = training.run_end_to_end(cfg).components

    profile = ChannelProfile("rayleigh_flat", pilot_len=2)
    sigma2 = snr_to_noise_var(7.0, 4, 1)
    bits = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1).astype(float)
    syms = qam_mod(bits.reshape(-1), 16)
    rng = np.random.default_rng(555)
    m, n_bins = 400, 25
    ok = 0
    worst = []
    for _ in range(n_bins):
        real = draw_realization(profile, sigma2, rng)
        y_p = transmit_pilots(profile, real, sigma2, rng)  # (1, 2)
        h_pilot = y_p.mean()
        mus = np.empty(16, dtype=np.complex128)
        for i, xc in enumerate(syms):
            z = comps.gen.prior.sample(rng, m)
            x_ri = c_to_ri(np.full((m, 1), xc))
            yp_t = Tensor(np.repeat(c_to_ri(y_p), m, axis=0))
            fake = ri_to_c(comps.gen.forward(z, x_ri, yp_t).data)
            mus[i] = fake.mean()
        h_gan = np.vdot(syms, mus) / np.vdot(syms, syms)
        ratio = h_gan / h_pilot
        mag_err = abs(abs(ratio) - 1.0)
        ph_err = abs(math.degrees(np.angle(ratio)))
        good = mag_err <= 0.15 and ph_err <= 15.0
        ok += good
        worst.append((mag_err, ph_err))
    assert ok >= 0.8 * n_bins, (
        f"{ok}/{n_bins} bins within 15%/15deg; errors {sorted(worst, reverse=True)[:5]}"
    )


# --- criterion 8: OFDM chain against the flat-Rayleigh closed form ---


def test_criterion_08_ofdm_matches_rayleigh_closed_form():
    rng = np.random.default_rng(8)
    for size in (64, 128):
        x = rng.normal(size=size) + 1j * rng.normal(size=size)
        err = np.max(np.abs(ifft(fft(x)) - x))
        assert err < 1e-9, f"fft/ifft roundtrip error {err:.2e} at n={size}"

    # choose the config SNR so one subcarrier sees an average per-bit
    # SNR of exactly 10 dB: gamma_bit = E|H|^2 / (2 sigma2) with
    # E|H|^2 = 3 for the equal-power 3-tap profile
    from gancomm.channels import pdp_weights

    gain = float(pdp_weights("equal").sum())
    gamma_bit = 10.0
    sigma2_wanted = gain / (2.0 * gamma_bit)
    n_info, n_chan = 128, 160
    snr_cfg = 10.0 * math.log10(n_chan / (n_info * sigma2_wanted))
    assert abs(snr_to_noise_var(snr_cfg, n_info, n_chan) - sigma2_wanted) < 1e-12

    cfg = from_dict({
        "system": "baseline_ofdm", "seed": 7,
        "channel": {"kind": "multipath", "pdp": "equal", "perfect_csi": True},
        "block": {"n": n_info, "k": n_chan},
        "eval": {"snr_list": [snr_cfg], "min_errors": 12000,
                 "max_blocks": 20_000},
    })
    p = monte_carlo_curve(evaluate.build_eval_system(cfg), cfg)[0]
    ana = 0.5 * (1.0 - math.sqrt(gamma_bit / (1.0 + gamma_bit)))
    assert abs(p.ber / ana - 1.0) <= 0.15, (
        f"BER {p.ber:.5f} vs closed form {ana:.5f} (ratio {p.ber / ana:.3f})"
    )


# --- criteria 9a/9b/9c: desk-scale long-block properties ---

CNN_TRAIN = {
    "batch": 64, "snr_db": 4.0, "steps_r": 50, "steps_t": 50,
    "steps_gan": 0, "warmup_gan": 0, "outer": 16, "bridge": "direct",
    "width_scale": 0.25, "final_rx_steps": 100, "plateau_window": 0,
}


@pytest.fixture(scope="session")
def cnn_awgn_run():
    cfg = from_dict({
        "system": "e2e_cnn", "seed": 1,
        "channel": {"kind": "awgn", "pilot_len": 0},
        "block": {"n": 64, "k": 64},
        "train": dict(CNN_TRAIN),
        "eval": {"snr_list": [8.0], "min_errors": 80, "max_blocks": 20_000},
    })
    result = training.run_end_to_end(cfg)
    return cfg, result


def test_criterion_09a_cnn_beats_uncoded_on_awgn(cnn_awgn_run):
    cfg, result = cnn_awgn_run
    system = evaluate.build_eval_system(cfg, result.components, trained=True)
    p = monte_carlo_curve(system, cfg)[0]
    ana = evaluate.qam4_awgn_ber(8.0)
    assert p.ber < ana, (
        f"BER {p.ber:.3e} ({p.bit_errors} errors in {p.bits_sent} bits) "
        f"not below uncoded analytic {ana:.3e}"
    )


def test_criterion_09b_training_loss_decreases_to_plateau(cnn_awgn_run):
    _, result = cnn_awgn_run
    meds = np.asarray(result.receiver_loss_medians, dtype=float)
    assert meds.size >= 8
    kernel = np.ones(3) / 3.0
    padded = np.concatenate([meds[:1], meds, meds[-1:]])
    smooth = np.convolve(padded, kernel, mode="valid")
    span = float(smooth.max() - smooth.min())
    assert span > 0.0
    rises = np.diff(smooth)
    assert float(rises.max(initial=0.0)) <= 0.03 * span, (
        f"smoothed loss rises by {rises.max():.3f} against span {span:.3f}"
    )
    tail = smooth[-max(3, smooth.size // 4):]
    assert float(tail.max() - tail.min()) <= 0.10 * span, (
        "no plateau: last-quarter swing "
        f"{tail.max() - tail.min():.3f} vs span {span:.3f}"
    )


@pytest.fixture(scope="session")
def cnn_multipath_run():
    base = {
        "system": "e2e_cnn", "seed": 1,
        "channel": {"kind": "multipath", "pdp": "exponential", "pilot_len": 2},
        "block": {"n": 64, "k": 64},
        "train": dict(CNN_TRAIN, snr_db=8.0),
        "eval": {"snr_list": [8.0], "min_errors": 400, "max_blocks": 6000},
    }
    cfg = from_dict(base)
    result = training.run_end_to_end(cfg)
    return base, cfg, result


def test_criterion_09c_pdp_mismatch_degrades_less_than_3x(cnn_multipath_run):
    base, cfg, result = cnn_multipath_run
    matched = monte_carlo_curve(
        evaluate.build_eval_system(cfg, result.components, trained=True), cfg
    )[0]
    mis_dict = copy.deepcopy(base)
    mis_dict["channel"]["eval_pdp"] = "equal"
    cfg_mis = from_dict(mis_dict)
    mismatched = monte_carlo_curve(
        evaluate.build_eval_system(cfg_mis, result.components, trained=True),
        cfg_mis,
    )[0]
    assert matched.ber > 0, "matched run produced zero errors; raise max_blocks"
    ratio = mismatched.ber / matched.ber
    assert ratio < 3.0, (
        f"mismatch BER {mismatched.ber:.3e} vs matched {matched.ber:.3e} "
        f"(ratio {ratio:.2f})"
    )


# --- criterion 10: byte-identical rerun of a full pipeline ---


def test_criterion_10_train_eval_rerun_is_byte_identical(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg = from_dict({
        "system": "e2e_fcn", "seed": 42,
        "channel": {"kind": "awgn", "pilot_len": 0},
        "block": {"n": 4, "k": 7},
        "train": {"batch": 64, "snr_db": 3.0, "steps_r": 10, "steps_t": 10,
                  "steps_gan": 15, "outer": 2, "warmup_gan": 30,
                  "real_signal": True, "plateau_window": 0},
        "eval": {"snr_list": [2.0, 4.0], "min_errors": 60,
                 "max_blocks": 3000},
    })
    cfg_path.write_text(cfg.to_json())

    outputs = []
    for tag in ("a", "b"):
        run_dir = tmp_path / tag
        curve = tmp_path / f"curve_{tag}.csv"
        assert cli.main(["train", str(cfg_path), "--out", str(run_dir)]) == 0
        assert cli.main([
            "eval", str(cfg_path),
            "--ckpt", str(run_dir / "checkpoint.bin"),
            "--out", str(curve),
        ]) == 0
        outputs.append((
            curve.read_bytes(),
            (run_dir / "checkpoint.bin").read_bytes(),
        ))
    assert outputs[0][0] == outputs[1][0], "curve CSVs differ between reruns"
    assert outputs[0][1] == outputs[1][1], "checkpoints differ between reruns"
