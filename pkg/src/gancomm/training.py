"""Alternating training loop: receiver, transmitter, GAN, repeat.

Each outer iteration runs the three phases in a fixed order with the
other networks frozen: the receiver trains on real-channel outputs, the
transmitter trains through the frozen channel surrogate (or directly
through a differentiable channel model when bridge="direct"), and the
GAN trains against real channel samples produced by the frozen
transmitter.  An initial GAN-only warm-up precedes the first
transmitter phase so the surrogate is usable from the start.

Evaluation never touches the surrogate: trained systems are always
scored against the true channel (see evaluate).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tz
from .channels import (
    ChannelProfile,
    ChannelRealization,
    awgn_real,
    apply_realization,
    c_to_ri,
    complex_noise,
    draw_realization,
    ri_to_c,
    snr_to_noise_var,
    transmit_pilots,
)
from .config import ExperimentConfig
from .errors import ConfigError, ContractError, NumericalAbort
from .gan import ChannelDiscriminator, ChannelGenerator, train_gan_step
from .modem import qam_mod
from .networks import Receiver, Transmitter
from .tensor import Tape, Tensor, adam_step, backward, save_checkpoint, load_checkpoint

LOG_HEADER = "outer_iter,phase,step,loss,d_loss,g_loss,wall_ms"


class QamSource:
    """Fixed Gray-QAM encoder standing in for a trainable transmitter.

    Used by GAN-only runs that model the channel around a conventional
    constellation rather than a learned code.
    """

    def __init__(self, order: int, n_bits: int, k_sym: int):
        bps = {4: 2, 16: 4}[order]
        if n_bits != bps * k_sym:
            raise ConfigError(f"{order}-QAM needs n == {bps}*k")
        self.order = order
        self.n_bits = n_bits
        self.k_sym = k_sym
        self.params: list = []

    def encode(self, bits: np.ndarray) -> np.ndarray:
        syms = qam_mod(bits.reshape(-1), self.order).reshape(bits.shape[0], self.k_sym)
        return c_to_ri(syms)

    def set_trainable(self, flag: bool):
        pass


class NetSource:
    """Trainable transmitter adapter with the same encode() face."""

    def __init__(self, tx: Transmitter):
        self.tx = tx

    @property
    def params(self):
        return self.tx.params

    def encode(self, bits: np.ndarray) -> np.ndarray:
        return self.tx.forward(Tensor(bits.astype(np.float64))).data

    def set_trainable(self, flag: bool):
        self.tx.net.set_trainable(flag)


@dataclass
class Components:
    """Everything a run owns; generator/discriminator may be absent."""

    profile: ChannelProfile
    source: QamSource | NetSource
    rx: Receiver | None = None
    gen: ChannelGenerator | None = None
    disc: ChannelDiscriminator | None = None
    # (gap, weights) snapshots of the latest GAN phase, best first
    gen_top: list = field(default_factory=list)

    @property
    def gen_best(self) -> list | None:
        return self.gen_top[0][1] if self.gen_top else None

    @property
    def gen_best_gap(self) -> float:
        return self.gen_top[0][0] if self.gen_top else float("inf")

    @property
    def tx(self) -> Transmitter | None:
        return self.source.tx if isinstance(self.source, NetSource) else None

    def networks(self) -> dict:
        nets = {}
        if self.tx is not None:
            nets["tx"] = self.tx.net
        if self.rx is not None:
            nets["rx"] = self.rx.net
        if self.gen is not None:
            nets["gen"] = self.gen.net
        if self.disc is not None:
            nets["disc"] = self.disc.net
        return nets


def pilot_obs_len(cfg: ExperimentConfig) -> int:
    """Observed pilot length: 0 on awgn, pilot_len (+ tail) on fading."""
    ch = cfg.channel
    if ch.kind == "awgn" or ch.pilot_len == 0:
        return 0
    return ch.pilot_len + (2 if ch.kind == "multipath" else 0)


def output_len(cfg: ExperimentConfig) -> int:
    return cfg.block.k + (2 if cfg.channel.kind == "multipath" else 0)


def build_components(cfg: ExperimentConfig, rng: np.random.Generator,
                     with_gan: bool | None = None) -> Components:
    """Instantiate networks per the config; parameter init draws from rng."""
    tr, bl, ch = cfg.train, cfg.block, cfg.channel
    profile = ChannelProfile(ch.kind, pdp=ch.pdp, pilot_len=ch.pilot_len)
    out_len = output_len(cfg)
    yp_len = pilot_obs_len(cfg)
    arch = cfg.arch

    if tr.source == "net":
        tx = Transmitter(arch, bl.n, bl.k, rng, real_signal=tr.real_signal,
                         width_scale=tr.width_scale)
        source: QamSource | NetSource = NetSource(tx)
    else:
        source = QamSource(4 if tr.source == "qam4" else 16, bl.n, bl.k)

    rx = None
    if cfg.system != "gan_only":
        rx = Receiver(arch, bl.n, out_len, yp_len, rng,
                      real_signal=tr.real_signal, width_scale=tr.width_scale)

    if with_gan is None:
        with_gan = tr.bridge == "gan" or tr.steps_gan > 0 or tr.warmup_gan > 0
    gen = disc = None
    if with_gan:
        gen = ChannelGenerator(arch, bl.k, out_len, yp_len, rng,
                               real_signal=tr.real_signal, width_scale=tr.width_scale)
        disc = ChannelDiscriminator(arch, bl.k, out_len, yp_len, rng,
                                    real_signal=tr.real_signal,
                                    width_scale=tr.width_scale)
    return Components(profile, source, rx, gen, disc)


def generate_batch(
    comps: Components,
    cfg: ExperimentConfig,
    sigma2: float,
    rng: np.random.Generator,
    batch: int | None = None,
) -> dict:
    """Fresh bits, encoded blocks, channel draw, real outputs, pilots."""
    n = cfg.block.n
    b = cfg.train.batch if batch is None else batch
    s = rng.integers(0, 2, (b, n)).astype(np.float64)
    x = comps.source.encode(s)
    real = draw_realization(comps.profile, sigma2, rng, batch=b)
    if cfg.train.real_signal:
        y = awgn_real(x, sigma2, rng)
        y_p = None
    else:
        y_c = apply_realization(ri_to_c(x), real, sigma2, rng)
        y = c_to_ri(y_c)
        y_p = None
        if pilot_obs_len(cfg) > 0:
            y_p = c_to_ri(transmit_pilots(comps.profile, real, sigma2, rng))
    return {"s": s, "x": x, "y": y, "y_p": y_p, "realization": real}


def _check_finite(loss_val: float, what: str):
    if not np.isfinite(loss_val):
        raise NumericalAbort(f"{what} loss became non-finite ({loss_val})")


def system_loss(pred: Tensor, s: np.ndarray) -> Tensor:
    """Per-block summed binary cross-entropy, averaged over the batch."""
    return tz.scale(tz.bce_loss(pred, s), 1.0 / s.shape[0])


def train_receiver_phase(comps, cfg, sigma2, rng, steps, log, outer,
                         phase_name: str = "receiver") -> list[float]:
    """Adam on the receiver only, against real-channel outputs."""
    comps.source.set_trainable(False)
    losses = []
    for step in range(steps):
        t0 = time.perf_counter()
        batch = generate_batch(comps, cfg, sigma2, rng)
        y = Tensor(batch["y"])
        y_p = Tensor(batch["y_p"]) if batch["y_p"] is not None else None
        with Tape() as tape:
            pred = comps.rx.forward(y, y_p)
            loss = system_loss(pred, batch["s"])
        backward(loss, tape)
        adam_step(comps.rx.params, cfg.train.lr_rx)
        val = loss.item()
        _check_finite(val, "receiver")
        losses.append(val)
        log(outer, phase_name, step, val, "", "", time.perf_counter() - t0)
    comps.source.set_trainable(True)
    return losses


def differentiable_channel(
    x: Tensor,
    realization: ChannelRealization,
    sigma2: float,
    rng: np.random.Generator,
    real_signal: bool,
) -> Tensor:
    """The true channel written in taped ops (bridge="direct").

    Channel state and noise are constants on the tape, so gradients
    reach the transmitter exactly as they would through a perfect
    surrogate.
    """
    if real_signal:
        if sigma2 <= 0:
            return x
        return tz.add(x, Tensor(rng.normal(0.0, np.sqrt(sigma2 / 2.0), x.shape)))
    b, k = x.shape[0], x.shape[1]
    if realization.kind == "awgn":
        y = x
        out_len = k
    elif realization.kind == "rayleigh_flat":
        y = tz.complex_scale(x, realization.flat_gains)
        out_len = k
    elif realization.kind == "multipath":
        out_len = k + 2
        parts = None
        for d in range(realization.taps.shape[1]):
            term = tz.delay_pad(
                tz.complex_scale(x, realization.taps[:, d]), d, out_len, axis=1
            )
            parts = term if parts is None else tz.add(parts, term)
        y = parts
    else:
        raise ConfigError(f"unknown realization kind {realization.kind!r}")
    if sigma2 > 0:
        w = c_to_ri(complex_noise(rng, (b, out_len), sigma2))
        y = tz.add(y, Tensor(w))
    return y


def train_transmitter_phase(comps, cfg, sigma2, rng, steps, log, outer) -> list[float]:
    """Adam on the transmitter only, through the frozen surrogate.

    bridge="gan" routes the forward pass through the trained generator;
    bridge="direct" differentiates through the channel model itself.
    """
    if comps.tx is None:
        raise ContractError("transmitter phase needs a trainable transmitter")
    live_weights = None
    snapshots = []
    if cfg.train.bridge == "gan":
        if comps.gen is None:
            raise ContractError("gan bridge needs a trained generator")
        if comps.gen_top:
            # frozen pass-through only, so sharing arrays is safe
            live_weights = [p.data for p in comps.gen.params]
            snapshots = [w for _, w in comps.gen_top]
        comps.gen.set_trainable(False)
    comps.rx.net.set_trainable(False)
    losses = []
    for step in range(steps):
        t0 = time.perf_counter()
        b = cfg.train.batch
        s = rng.integers(0, 2, (b, cfg.block.n)).astype(np.float64)
        real = draw_realization(comps.profile, sigma2, rng, batch=b)
        y_p_np = None
        if pilot_obs_len(cfg) > 0:
            y_p_np = c_to_ri(transmit_pilots(comps.profile, real, sigma2, rng))
        y_p = Tensor(y_p_np) if y_p_np is not None else None
        if snapshots:
            # rotating the surrogate snapshot averages out residual
            # per-condition bias without touching per-sample variance
            for p, d in zip(comps.gen.params, snapshots[step % len(snapshots)]):
                p.data = d
        with Tape() as tape:
            x = comps.tx.forward(Tensor(s))
            if cfg.train.bridge == "gan":
                z = comps.gen.prior.sample(rng, b)
                y_hat = comps.gen.forward(z, x, y_p)
            else:
                y_hat = differentiable_channel(x, real, sigma2, rng,
                                               cfg.train.real_signal)
            pred = comps.rx.forward(y_hat, y_p)
            loss = system_loss(pred, s)
        backward(loss, tape)
        adam_step(comps.tx.params, cfg.train.lr_tx)
        val = loss.item()
        _check_finite(val, "transmitter")
        losses.append(val)
        log(outer, "transmitter", step, val, "", "", time.perf_counter() - t0)
    comps.rx.net.set_trainable(True)
    if cfg.train.bridge == "gan":
        if live_weights is not None:
            for p, d in zip(comps.gen.params, live_weights):
                p.data = d
        comps.gen.set_trainable(True)
    return losses


def _two_sample_gap(y_fake: np.ndarray, y_real: np.ndarray) -> float:
    dm = abs(float(y_fake.mean()) - float(y_real.mean()))
    dv = abs(float(y_fake.var()) / max(float(y_real.var()), 1e-12) - 1.0)
    return dm + dv


def surrogate_moment_gap(comps, cfg, sigma2, rng, n: int,
                         reduce: str = "max") -> float:
    """Two-sample gap between surrogate and real channel outputs.

    Compares mean and variance of G(z|m) against fresh real draws under
    the same conditioning distribution; uses samples only, never the
    channel's internal parameters.  When the conditioning set is small
    and discrete (awgn, no pilots) the gap is computed per message cell
    and reduced by ``reduce``: "max" guards the transmitter (one biased
    cell misleads it), "mean" matches overall-statistics checks.  The
    pooled gap would dilute residual errors by the codeword spread.
    """
    batch = generate_batch(comps, cfg, sigma2, rng, batch=n)
    z = comps.gen.prior.sample(rng, n)
    y_fake = comps.gen.forward(z, batch["x"], batch["y_p"]).data
    y_real = batch["y"]
    if cfg.channel.kind == "awgn" and batch["y_p"] is None and cfg.block.n <= 6:
        keys = batch["s"].astype(int) @ (1 << np.arange(cfg.block.n))
        gaps = [
            _two_sample_gap(y_fake[keys == key], y_real[keys == key])
            for key in np.unique(keys)
            if (keys == key).sum() >= 8
        ]
        if gaps:
            return max(gaps) if reduce == "max" else float(np.mean(gaps))
    return _two_sample_gap(y_fake, y_real)


def adopt_best_generator(comps: Components) -> None:
    """Load the phase-best generator weights (training-cycle smoothing).

    Called once after the outer loop so the exported surrogate is the
    best-selected iterate rather than wherever the limit cycle stopped.
    """
    if comps.gen_top:
        for p, d in zip(comps.gen.params, comps.gen_top[0][1]):
            p.data = d.copy()


def train_gan_phase(comps, cfg, sigma2, rng, steps, log, outer,
                    phase_name: str = "gan", select_reduce: str = "max",
                    initial_candidates: list | None = None
                    ) -> list[tuple[float, float]]:
    """Alternating discriminator/generator steps on real-channel batches.

    The GAN limit-cycles around its equilibrium, so alongside live
    training the phase tracks the moment-gap-best generator weights;
    transmitter phases and the exported surrogate use those while the
    live pair keeps training uninterrupted.
    """
    if comps.gen is None or comps.disc is None:
        raise ContractError("gan phase needs generator and discriminator")
    comps.source.set_trainable(False)
    tr = cfg.train

    def consider(gap, weights):
        if len(comps.gen_top) < tr.gan_select_topk or gap < comps.gen_top[-1][0]:
            comps.gen_top.append((gap, weights))
            comps.gen_top.sort(key=lambda t: t[0])
            del comps.gen_top[tr.gan_select_topk:]

    comps.gen_top = []
    if initial_candidates:
        # carry earlier phase winners in, re-scored under this phase's
        # conditioning distribution and reduction
        live = [p.data for p in comps.gen.params]
        for weights in initial_candidates:
            for p, d in zip(comps.gen.params, weights):
                p.data = d
            gap = surrogate_moment_gap(comps, cfg, sigma2, rng,
                                       tr.gan_select_batch, reduce=select_reduce)
            consider(gap, weights)
        for p, d in zip(comps.gen.params, live):
            p.data = d
    out = []
    for step in range(steps):
        t0 = time.perf_counter()
        batch = generate_batch(comps, cfg, sigma2, rng)
        d_loss, g_loss = train_gan_step(
            batch["x"], batch["y_p"], batch["y"], comps.gen, comps.disc, rng,
            k_d=tr.k_d, lr=tr.lr_gan,
        )
        _check_finite(d_loss, "discriminator")
        _check_finite(g_loss, "generator")
        out.append((d_loss, g_loss))
        if tr.gan_select_interval and (
            (step + 1) % tr.gan_select_interval == 0 or step == steps - 1
        ):
            gap = surrogate_moment_gap(comps, cfg, sigma2, rng, tr.gan_select_batch,
                                       reduce=select_reduce)
            consider(gap, [p.data.copy() for p in comps.gen.params])
        log(outer, phase_name, step, "", f"{d_loss:.6f}", f"{g_loss:.6f}",
            time.perf_counter() - t0)
    comps.source.set_trainable(True)
    return out


@dataclass
class TrainResult:
    components: Components
    log_rows: list = field(default_factory=list)
    outer_done: int = 0
    stop_reason: str = "max_outer"
    receiver_loss_medians: list = field(default_factory=list)


def _collect_state(comps: Components) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for net in comps.networks().values():
        arrays.update(net.state_arrays())
    return arrays


def save_run_checkpoint(path: str, comps: Components, cfg: ExperimentConfig,
                        outer_done: int, rng: np.random.Generator,
                        note: str = "") -> None:
    save_checkpoint(path, _collect_state(comps))
    sidecar = {
        "outer_done": outer_done,
        "rng_state": rng.bit_generator.state,
        "config_hash": cfg.config_hash(),
        "note": note,
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_run_checkpoint(path: str, comps: Components,
                        cfg: ExperimentConfig) -> tuple[int, dict]:
    arrays = load_checkpoint(path)
    for net in comps.networks().values():
        net.load_state(arrays)
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    if sidecar.get("config_hash") != cfg.config_hash():
        raise ConfigError("checkpoint was produced by a different config")
    return sidecar["outer_done"], sidecar["rng_state"]


def run_end_to_end(
    cfg: ExperimentConfig,
    out_dir: str | None = None,
    resume_from: str | None = None,
    quiet: bool = True,
) -> TrainResult:
    """Execute the full schedule; returns trained components plus the log.

    Writes train_log.csv and checkpoint.bin(.json) into out_dir when
    given.  A non-finite loss saves a diagnostic checkpoint and raises
    NumericalAbort.
    """
    tr = cfg.train
    rng = np.random.default_rng(cfg.seed)
    comps = build_components(cfg, rng)
    sigma2 = snr_to_noise_var(tr.snr_db, cfg.block.n, cfg.block.k)

    result = TrainResult(comps)
    t_start = time.perf_counter()

    def log(outer, phase, step, loss, d_loss, g_loss, wall_s):
        loss_s = loss if isinstance(loss, str) else f"{loss:.6f}"
        result.log_rows.append(
            f"{outer},{phase},{step},{loss_s},{d_loss},{g_loss},{wall_s * 1e3:.3f}"
        )

    start_outer = 0
    if resume_from is not None:
        start_outer, rng_state = load_run_checkpoint(resume_from, comps, cfg)
        rng.bit_generator.state = rng_state

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "checkpoint.bin") if out_dir else None

    def dump(note=""):
        if ckpt_path:
            save_run_checkpoint(ckpt_path, comps, cfg, result.outer_done, rng, note)

    try:
        with_gan = comps.gen is not None
        if with_gan and tr.warmup_gan > 0 and start_outer == 0:
            train_gan_phase(comps, cfg, sigma2, rng, tr.warmup_gan, log, -1,
                            phase_name="gan_warmup",
                            select_reduce=tr.gan_select_reduce)

        medians = result.receiver_loss_medians
        for outer in range(start_outer, tr.outer):
            if comps.rx is not None and tr.steps_r > 0:
                r_losses = train_receiver_phase(comps, cfg, sigma2, rng,
                                                tr.steps_r, log, outer)
                medians.append(float(np.median(r_losses)))
            if comps.tx is not None and comps.rx is not None and tr.steps_t > 0:
                train_transmitter_phase(comps, cfg, sigma2, rng, tr.steps_t,
                                        log, outer)
            if with_gan and tr.steps_gan > 0:
                train_gan_phase(comps, cfg, sigma2, rng, tr.steps_gan, log, outer,
                                select_reduce=tr.gan_select_reduce)
            result.outer_done = outer + 1
            if tr.checkpoint_interval and (outer + 1) % tr.checkpoint_interval == 0:
                dump()
            if (len(medians) > tr.plateau_window and tr.plateau_window > 0
                    and medians[-tr.plateau_window - 1] > 0):
                rel = (medians[-tr.plateau_window - 1] - medians[-1]) / medians[
                    -tr.plateau_window - 1
                ]
                if rel < tr.plateau_rel:
                    result.stop_reason = "plateau"
                    break
    except NumericalAbort:
        dump(note="nan_abort")
        raise

    if comps.rx is not None and tr.final_rx_steps > 0 and comps.tx is not None:
        # the last transmitter phase moved the code after the receiver
        # last saw it; refresh the receiver against the final code
        train_receiver_phase(comps, cfg, sigma2, rng, tr.final_rx_steps, log,
                             result.outer_done, phase_name="rx_final")
    if comps.gen is not None:
        if tr.final_gan_steps > 0:
            # the outer loop selects surrogates by worst conditioning cell
            # (what the transmitter needs); the export is judged on overall
            # statistics, so the polish pass averages cells instead, with
            # the loop's winners re-scored as candidates
            prior = [w for _, w in comps.gen_top]
            train_gan_phase(comps, cfg, sigma2, rng, tr.final_gan_steps, log,
                            result.outer_done, phase_name="gan_final",
                            select_reduce="mean", initial_candidates=prior)
        adopt_best_generator(comps)
    dump()
    if out_dir:
        with open(os.path.join(out_dir, "train_log.csv"), "w") as fh:
            fh.write(LOG_HEADER + "\n")
            fh.write("\n".join(result.log_rows) + "\n")
    if not quiet:
        print(f"training done: {result.outer_done} outer iterations, "
              f"{result.stop_reason}, {time.perf_counter() - t_start:.1f}s")
    return result
