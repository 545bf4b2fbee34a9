"""Conditional GAN channel surrogate.

The generator maps (noise z, conditioning m) to a fake channel output
with exactly the real channel's output shape; the discriminator scores
(candidate output, m) in (0,1).  Conditioning m is the encoded block x
plus, for fading channels, the received pilot observations y_p.

Losses follow the standard conditional min-max objective with one
deliberate change: the generator minimizes -mean log D(fake) (the
non-saturating form) rather than maximizing log(1 - D(fake)), which has
the same fixed point but keeps gradients alive early in training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .errors import ConfigError, DimensionError
from .networks import (
    CNN_DISC_CONV,
    CNN_DISC_FC,
    CNN_GEN,
    FCN_DISC_HIDDEN,
    FCN_GEN_HIDDEN,
    LayerSpec,
    Network,
    scaled_width,
)
from .tensor import Tape, Tensor, adam_step, backward, zero_grads


@dataclass
class NoisePrior:
    """Standard Gaussian noise input; dim matches the output real dims."""

    dim: int

    def __post_init__(self):
        if self.dim <= 0:
            raise ConfigError("noise dimension must be positive")

    def sample(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        return rng.normal(size=(batch, self.dim))


def _flat(x: Tensor) -> Tensor:
    if x.ndim == 2:
        return x
    return tz.reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))


def _pad_seq(x: Tensor, out_len: int) -> Tensor:
    if x.shape[1] == out_len:
        return x
    if x.shape[1] > out_len:
        raise DimensionError("conditioning longer than the channel output")
    return tz.pad_tail(x, out_len - x.shape[1], axis=1)


class ChannelGenerator:
    """G(z | m): surrogate channel with the true output shape.

    x_len is the encoded block length K; out_len the channel output
    length (K, or K+2 when the channel has a 2-symbol delay spread);
    yp_len the pilot observation length (0 disables pilot conditioning).
    """

    def __init__(self, arch: str, x_len: int, out_len: int, yp_len: int,
                 rng: np.random.Generator, real_signal: bool = False,
                 width_scale: float = 1.0):
        self.arch = arch
        self.x_len = x_len
        self.out_len = out_len
        self.yp_len = yp_len
        self.real_signal = real_signal
        dims = 1 if real_signal else 2
        self.dims = dims
        self.prior = NoisePrior(out_len * dims)
        if arch == "fcn":
            in_w = (out_len + x_len + yp_len) * dims
            layers = [LayerSpec("dense", w, act="relu") for w in FCN_GEN_HIDDEN]
            layers.append(LayerSpec("dense", out_len * dims))
            self.net = Network("gen", (in_w,), layers, rng)
        elif arch == "cnn":
            if real_signal:
                raise ConfigError("conv generator handles complex blocks only")
            ch = 2 + 2 + (2 if yp_len > 0 else 0)  # z, x, [y_p]
            layers = [
                LayerSpec("conv1d", scaled_width(c, width_scale), kernel=k, act=a)
                for (k, c, a) in CNN_GEN[:-1]
            ]
            layers.append(LayerSpec("conv1d", 2, kernel=CNN_GEN[-1][0]))
            self.net = Network("gen", (out_len, ch), layers, rng)
        else:
            raise ConfigError(f"unknown architecture {arch!r}")

    @property
    def params(self):
        return self.net.params

    def set_trainable(self, flag: bool):
        self.net.set_trainable(flag)

    def forward(self, z, x, y_p=None) -> Tensor:
        """z (B, d_z); x (B, K, 2) or (B, K); y_p (B, yp_len, 2) or None."""
        z = z if isinstance(z, Tensor) else Tensor(z)
        x = x if isinstance(x, Tensor) else Tensor(x)
        if (y_p is None) != (self.yp_len == 0):
            raise DimensionError("pilot conditioning must match the configured length")
        if y_p is not None and not isinstance(y_p, Tensor):
            y_p = Tensor(y_p)
        b = x.shape[0]
        if self.arch == "fcn":
            parts = [_flat(z), _flat(x)]
            if y_p is not None:
                parts.append(_flat(y_p))
            out = self.net.forward(tz.concat(parts, axis=1))
            if self.real_signal:
                return out
            return tz.reshape(out, (b, self.out_len, 2))
        z_seq = tz.reshape(z, (b, self.out_len, 2))
        parts = [z_seq, _pad_seq(x, self.out_len)]
        if y_p is not None:
            parts.append(_pad_seq(y_p, self.out_len))
        return self.net.forward(tz.concat(parts, axis=2))


class ChannelDiscriminator:
    """D(candidate | m) -> per-sample score in (0,1)."""

    def __init__(self, arch: str, x_len: int, out_len: int, yp_len: int,
                 rng: np.random.Generator, real_signal: bool = False,
                 width_scale: float = 1.0):
        self.arch = arch
        self.x_len = x_len
        self.out_len = out_len
        self.yp_len = yp_len
        self.real_signal = real_signal
        dims = 1 if real_signal else 2
        if arch == "fcn":
            in_w = (out_len + x_len + yp_len) * dims
            layers = [LayerSpec("dense", w, act="relu") for w in FCN_DISC_HIDDEN]
            layers.append(LayerSpec("dense", 1, act="sigmoid"))
            self.net = Network("disc", (in_w,), layers, rng)
        elif arch == "cnn":
            if real_signal:
                raise ConfigError("conv discriminator handles complex blocks only")
            ch = 2 + 2 + (2 if yp_len > 0 else 0)
            layers = [
                LayerSpec("conv1d", scaled_width(c, width_scale), kernel=k, act=a)
                for (k, c, a) in CNN_DISC_CONV
            ]
            layers += [LayerSpec("dense", w, act=a) for (w, a) in CNN_DISC_FC]
            self.net = Network("disc", (out_len, ch), layers, rng)
        else:
            raise ConfigError(f"unknown architecture {arch!r}")

    @property
    def params(self):
        return self.net.params

    def set_trainable(self, flag: bool):
        self.net.set_trainable(flag)

    def forward(self, y, x, y_p=None) -> Tensor:
        """Returns (B, 1) scores."""
        y = y if isinstance(y, Tensor) else Tensor(y)
        x = x if isinstance(x, Tensor) else Tensor(x)
        if y_p is not None and not isinstance(y_p, Tensor):
            y_p = Tensor(y_p)
        if self.arch == "fcn":
            parts = [_flat(y), _flat(x)]
            if y_p is not None:
                parts.append(_flat(y_p))
            return self.net.forward(tz.concat(parts, axis=1))
        parts = [y, _pad_seq(x, self.out_len)]
        if y_p is not None:
            parts.append(_pad_seq(y_p, self.out_len))
        return self.net.forward(tz.concat(parts, axis=2))


def discriminator_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """-mean log D(real) - mean log(1 - D(fake)), eps-clamped.

    Equals the mean binary cross-entropy of the scores against label 1
    (real) plus label 0 (fake).
    """
    n_r = real_scores.size
    n_f = fake_scores.size
    lr_ = tz.scale(tz.bce_loss(real_scores, np.ones(real_scores.shape)), 1.0 / n_r)
    lf_ = tz.scale(tz.bce_loss(fake_scores, np.zeros(fake_scores.shape)), 1.0 / n_f)
    return tz.add(lr_, lf_)


def generator_loss(fake_scores: Tensor) -> Tensor:
    """Non-saturating objective -mean log D(fake)."""
    n = fake_scores.size
    return tz.scale(tz.bce_loss(fake_scores, np.ones(fake_scores.shape)), 1.0 / n)


def train_gan_step(
    x_cond: np.ndarray,
    yp_cond: np.ndarray | None,
    y_real: np.ndarray,
    gen: ChannelGenerator,
    disc: ChannelDiscriminator,
    rng: np.random.Generator,
    k_d: int = 1,
    lr: float = 1e-4,
) -> tuple[float, float]:
    """k_d discriminator Adam steps then one generator step.

    Conditioning arrays come from a frozen transmitter and the real
    channel; only the stated network's parameters change in each step.
    """
    batch = x_cond.shape[0]
    d_loss_val = g_loss_val = float("nan")

    gen.set_trainable(False)
    for _ in range(k_d):
        z = gen.prior.sample(rng, batch)
        with Tape() as tape:
            fake = gen.forward(z, x_cond, yp_cond)
            d_real = disc.forward(y_real, x_cond, yp_cond)
            d_fake = disc.forward(fake, x_cond, yp_cond)
            d_loss = discriminator_loss(d_real, d_fake)
        backward(d_loss, tape)
        adam_step(disc.params, lr)
        d_loss_val = d_loss.item()
    gen.set_trainable(True)

    disc.set_trainable(False)
    z = gen.prior.sample(rng, batch)
    with Tape() as tape:
        fake = gen.forward(z, x_cond, yp_cond)
        d_fake = disc.forward(fake, x_cond, yp_cond)
        g_loss = generator_loss(d_fake)
    backward(g_loss, tape)
    adam_step(gen.params, lr)
    zero_grads(disc.params)
    disc.set_trainable(True)
    g_loss_val = g_loss.item()

    return d_loss_val, g_loss_val
