"""Experiment configuration: JSON schema, validation, canonical hashing.

A config fully determines a run: system, channel profile, block
geometry, training schedule, evaluation sweep, and seed.  The canonical
hash of the parsed config is embedded in every output CSV so results
point back to their configuration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError

SYSTEMS = (
    "e2e_fcn",
    "e2e_cnn",
    "baseline_uncoded",
    "baseline_hamming",
    "baseline_rsc",
    "baseline_ofdm",
    "baseline_ofdm_coded",
    "gan_only",
)
CHANNEL_KINDS = ("awgn", "rayleigh_flat", "multipath")
PDP_KINDS = ("equal", "exponential")
BRIDGES = ("gan", "direct")
SOURCES = ("net", "qam4", "qam16")


@dataclass
class ChannelConfig:
    kind: str = "awgn"
    pdp: str = "equal"
    pilot_len: int = 1
    # evaluation-time PDP override (train/test mismatch experiments);
    # None means evaluate with the training PDP.
    eval_pdp: str | None = None
    # OFDM baselines may equalize with the exact realized response
    # instead of the LS pilot estimate
    perfect_csi: bool = False


@dataclass
class BlockConfig:
    n: int = 4  # information bits per block
    k: int = 7  # channel symbols per block


@dataclass
class TrainConfig:
    batch: int = 320
    snr_db: float = 3.0
    steps_r: int = 200
    steps_t: int = 200
    steps_gan: int = 200
    outer: int = 10
    lr_tx: float = 0.001
    lr_rx: float = 0.001
    lr_gan: float = 0.0001
    k_d: int = 1
    warmup_gan: int = 200  # GAN-only steps before the first transmitter phase
    width_scale: float = 1.0
    real_signal: bool = False
    bridge: str = "gan"  # transmitter-phase channel: gan surrogate or direct
    source: str = "net"  # encoded-signal source for GAN-only runs
    plateau_rel: float = 0.01
    plateau_window: int = 5
    checkpoint_interval: int = 0  # outer iterations between checkpoints; 0 = final only
    # surrogate selection: every interval GAN steps, score the generator by a
    # two-sample moment gap against real channel outputs and keep the best
    # weights of the phase; 0 disables selection.
    gan_select_interval: int = 100
    gan_select_batch: int = 4000
    # transmitter phases rotate through this many best-by-gap snapshots;
    # residual per-condition biases differ across snapshots and average out
    gan_select_topk: int = 1
    gan_select_reduce: str = "max"  # cell aggregation: max or mean
    # extra GAN steps after the outer loop, against the frozen final
    # transmitter, so the exported surrogate matches the final code
    final_gan_steps: int = 0
    # extra receiver steps after the outer loop; the last transmitter
    # phase moves the code after the receiver last trained on it
    final_rx_steps: int = 0


@dataclass
class EvalConfig:
    snr_list: list = field(default_factory=lambda: [float(s) for s in range(0, 13)])
    min_errors: int = 200
    max_blocks: int = 1_000_000


@dataclass
class ExperimentConfig:
    system: str = "e2e_fcn"
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    block: BlockConfig = field(default_factory=BlockConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0

    @property
    def arch(self) -> str:
        return "cnn" if self.system == "e2e_cnn" else "fcn"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _build(cls, data: dict, where: str):
    allowed = {f for f in cls.__dataclass_fields__}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown {where} keys: {sorted(extra)}")
    return cls(**data)


def from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    sub = {}
    for key, cls in (("channel", ChannelConfig), ("block", BlockConfig),
                     ("train", TrainConfig), ("eval", EvalConfig)):
        if key in data:
            raw = data.pop(key)
            if not isinstance(raw, dict):
                raise ConfigError(f"{key} section must be a mapping")
            sub[key] = _build(cls, raw, key)
    cfg = _build(ExperimentConfig, {**data, **sub}, "top-level")
    validate(cfg)
    return cfg


def load(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(data)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.system not in SYSTEMS:
        raise ConfigError(f"unknown system {cfg.system!r}; choose from {SYSTEMS}")
    ch, bl, tr, ev = cfg.channel, cfg.block, cfg.train, cfg.eval
    if ch.kind not in CHANNEL_KINDS:
        raise ConfigError(f"unknown channel kind {ch.kind!r}")
    if ch.pdp not in PDP_KINDS:
        raise ConfigError(f"unknown PDP {ch.pdp!r}")
    if ch.eval_pdp is not None and ch.eval_pdp not in PDP_KINDS:
        raise ConfigError(f"unknown eval PDP {ch.eval_pdp!r}")
    if ch.pilot_len < 0:
        raise ConfigError("pilot_len must be non-negative")
    if bl.n <= 0 or bl.k <= 0:
        raise ConfigError("block sizes must be positive")
    if tr.batch <= 0:
        raise ConfigError("batch size must be positive")
    if min(tr.lr_tx, tr.lr_rx, tr.lr_gan) <= 0:
        raise ConfigError("learning rates must be positive")
    if tr.bridge not in BRIDGES:
        raise ConfigError(f"unknown bridge {tr.bridge!r}")
    if tr.source not in SOURCES:
        raise ConfigError(f"unknown source {tr.source!r}")
    if tr.k_d < 1:
        raise ConfigError("k_d must be at least 1")
    if tr.gan_select_reduce not in ("max", "mean"):
        raise ConfigError(f"unknown gan_select_reduce {tr.gan_select_reduce!r}")
    if tr.real_signal and ch.kind != "awgn":
        raise ConfigError("real-signal mode only makes sense on the awgn channel")
    if cfg.system == "e2e_cnn" and bl.n != bl.k:
        raise ConfigError("the conv architecture requires n == k")
    if cfg.system == "gan_only" and tr.source == "net":
        raise ConfigError("gan_only runs need a fixed symbol source (qam4/qam16)")
    if tr.source == "qam16" and bl.n != 4 * bl.k:
        raise ConfigError("qam16 source needs n == 4*k")
    if tr.source == "qam4" and bl.n != 2 * bl.k:
        raise ConfigError("qam4 source needs n == 2*k")
    if not ev.snr_list:
        raise ConfigError("snr_list must be non-empty")
    if ev.min_errors <= 0 or ev.max_blocks <= 0:
        raise ConfigError("stopping rule values must be positive")
