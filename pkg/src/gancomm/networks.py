"""Learnable transmitter/receiver networks and the generic layer stack.

Two architectures: small fully-connected stacks for short blocks
(hidden widths {32, 32} for transmitter/receiver) and 1-D convolutional
stacks for long blocks.  The reference convolutional shapes are
transmitter conv(5)x256, conv(3)x128, conv(3)x64, conv(3)x2 + power
normalization and receiver seven conv(5) layers (256, 128, 128, 128,
64, 64, 64) followed by conv(3)x1 with sigmoid; a width_scale knob
shrinks channel counts proportionally for quick desk-scale runs while
keeping the layer pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tz
from .errors import ConfigError, DimensionError, FramingError
from .tensor import Parameter, Tensor

FCN_TX_HIDDEN = (32, 32)
FCN_RX_HIDDEN = (32, 32)
FCN_GEN_HIDDEN = (128, 128, 128)
FCN_DISC_HIDDEN = (32, 32, 32)

CNN_TX = ((5, 256, "relu"), (3, 128, "relu"), (3, 64, "relu"), (3, 2, "none"))
CNN_RX = (
    (5, 256, "relu"),
    (5, 128, "relu"),
    (5, 128, "relu"),
    (5, 128, "relu"),
    (5, 64, "relu"),
    (5, 64, "relu"),
    (5, 64, "relu"),
    (3, 1, "sigmoid"),
)
CNN_GEN = ((5, 256, "relu"), (3, 128, "relu"), (3, 64, "relu"), (3, 2, "none"))
CNN_DISC_CONV = ((5, 256, "relu"), (3, 128, "relu"), (3, 64, "relu"), (3, 16, "relu"))
CNN_DISC_FC = ((100, "relu"), (1, "sigmoid"))


@dataclass
class LayerSpec:
    """One layer: dense(width), conv1d(kernel, channels) or normalize."""

    kind: str
    width: int = 0
    kernel: int = 0
    act: str = "none"


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, shape)


def scaled_width(w: int, width_scale: float) -> int:
    if width_scale == 1.0:
        return w
    return max(2, int(round(w * width_scale)))


class Network:
    """Sequential layer stack over the taped tensor ops.

    in_shape is (length, channels) when the first layer is conv1d, or
    (width,) when it is dense.  A dense layer directly after conv
    layers flattens (length * channels) itself.
    """

    def __init__(self, name: str, in_shape: tuple, layers: list[LayerSpec],
                 rng: np.random.Generator, dims_per_symbol: int = 2):
        self.name = name
        self.layers = layers
        self.dims_per_symbol = dims_per_symbol
        self.params: list[Parameter] = []
        self._built: list[tuple] = []

        shape = tuple(in_shape)
        for i, spec in enumerate(layers):
            if spec.kind == "dense":
                n_in = int(np.prod(shape))
                w = Parameter(
                    glorot_uniform(rng, (spec.width, n_in), n_in, spec.width),
                    f"{name}.{i}.w",
                )
                b = Parameter(np.zeros(spec.width), f"{name}.{i}.b")
                self.params += [w, b]
                self._built.append(("dense", w, b, spec.act))
                shape = (spec.width,)
            elif spec.kind == "conv1d":
                if len(shape) != 2:
                    raise ConfigError(f"{name}: conv1d layer {i} needs (length, channels) input")
                length, c_in = shape
                fan_in, fan_out = spec.kernel * c_in, spec.kernel * spec.width
                w = Parameter(
                    glorot_uniform(rng, (spec.kernel, c_in, spec.width), fan_in, fan_out),
                    f"{name}.{i}.w",
                )
                b = Parameter(np.zeros(spec.width), f"{name}.{i}.b")
                self.params += [w, b]
                self._built.append(("conv1d", w, b, spec.act))
                shape = (length, spec.width)
            elif spec.kind == "normalize":
                self._built.append(("normalize",))
            else:
                raise ConfigError(f"unknown layer kind {spec.kind!r}")
        self.out_shape = shape

    def forward(self, x: Tensor) -> Tensor:
        for entry in self._built:
            if entry[0] == "dense":
                _, w, b, act = entry
                x = tz.dense_forward(x, w, b, act=act)
            elif entry[0] == "conv1d":
                _, w, b, act = entry
                x = tz.conv1d_forward(x, w, b, act=act)
            else:
                x = tz.power_normalize(x, dims_per_symbol=self.dims_per_symbol)
        return x

    def param_digest(self) -> str:
        """Order-stable hash of all parameter values (phase-isolation checks)."""
        import hashlib

        h = hashlib.sha256()
        for p in self.params:
            h.update(p.name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Weights plus optimizer state, keyed for the checkpoint container."""
        out: dict[str, np.ndarray] = {}
        for p in self.params:
            out[p.name] = p.data.copy()
            out[p.name + ".adam_m"] = p.adam_m.copy()
            out[p.name + ".adam_v"] = p.adam_v.copy()
            out[p.name + ".adam_t"] = np.asarray(float(p.adam_t))
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.params:
            if p.name not in arrays:
                raise ConfigError(f"checkpoint missing parameter {p.name}")
            if arrays[p.name].shape != p.data.shape:
                raise ConfigError(f"checkpoint shape mismatch for {p.name}")
            p.data = arrays[p.name].copy()
            p.adam_m = arrays[p.name + ".adam_m"].copy()
            p.adam_v = arrays[p.name + ".adam_v"].copy()
            p.adam_t = int(arrays[p.name + ".adam_t"].ravel()[0])
            p.zero_grad()

    def set_trainable(self, flag: bool) -> None:
        for p in self.params:
            p.requires_grad = flag


class Transmitter:
    """Maps N information bits to K unit-power channel symbols.

    real_signal=True emits K real symbols (one dimension per symbol);
    otherwise K complex symbols as (K, 2) reals.
    """

    def __init__(self, arch: str, n_bits: int, k_sym: int,
                 rng: np.random.Generator, real_signal: bool = False,
                 width_scale: float = 1.0):
        self.arch = arch
        self.n_bits = n_bits
        self.k_sym = k_sym
        self.real_signal = real_signal
        dims = 1 if real_signal else 2
        self.out_dims = k_sym * dims
        if arch == "fcn":
            layers = [LayerSpec("dense", w, act="relu") for w in FCN_TX_HIDDEN]
            layers.append(LayerSpec("dense", self.out_dims))
            layers.append(LayerSpec("normalize"))
            self.net = Network("tx", (n_bits,), layers, rng, dims_per_symbol=dims)
        elif arch == "cnn":
            if real_signal:
                raise ConfigError("conv transmitter emits complex symbols only")
            if n_bits != k_sym:
                raise ConfigError("conv transmitter requires N == K (one bit per symbol)")
            layers = [
                LayerSpec("conv1d", scaled_width(c, width_scale), kernel=k, act=a)
                for (k, c, a) in CNN_TX[:-1]
            ]
            layers.append(LayerSpec("conv1d", 2, kernel=CNN_TX[-1][0]))
            layers.append(LayerSpec("normalize"))
            self.net = Network("tx", (k_sym, 1), layers, rng, dims_per_symbol=2)
        else:
            raise ConfigError(f"unknown architecture {arch!r}")

    @property
    def params(self):
        return self.net.params

    def forward(self, bits: Tensor) -> Tensor:
        """bits (B, N) in {0,1} -> (B, K, 2) complex-as-real or (B, K) real."""
        if bits.ndim != 2 or bits.shape[1] != self.n_bits:
            raise DimensionError(f"transmitter expects (B, {self.n_bits}) bits")
        if self.arch == "cnn":
            x = tz.reshape(bits, (bits.shape[0], self.n_bits, 1))
            return self.net.forward(x)
        out = self.net.forward(bits)
        if self.real_signal:
            return out
        return tz.reshape(out, (bits.shape[0], self.k_sym, 2))


class Receiver:
    """Maps the received block (and pilot observations) to N soft bits.

    y_len is the per-block received length (K, or K+2 after a
    delay-spread channel); yp_len the pilot observation length (0 when
    the channel needs no sounding).
    """

    def __init__(self, arch: str, n_bits: int, y_len: int, yp_len: int,
                 rng: np.random.Generator, real_signal: bool = False,
                 width_scale: float = 1.0):
        self.arch = arch
        self.n_bits = n_bits
        self.y_len = y_len
        self.yp_len = yp_len
        self.real_signal = real_signal
        dims = 1 if real_signal else 2
        if arch == "fcn":
            in_w = (y_len + yp_len) * dims
            layers = [LayerSpec("dense", w, act="relu") for w in FCN_RX_HIDDEN]
            layers.append(LayerSpec("dense", n_bits, act="sigmoid"))
            self.net = Network("rx", (in_w,), layers, rng)
        elif arch == "cnn":
            if real_signal:
                raise ConfigError("conv receiver takes complex blocks only")
            if n_bits > y_len:
                raise ConfigError("conv receiver cannot emit more bits than positions")
            ch = 2 + (2 if yp_len > 0 else 0)
            layers = [
                LayerSpec("conv1d", scaled_width(c, width_scale), kernel=k, act=a)
                for (k, c, a) in CNN_RX[:-1]
            ]
            k_last, c_last, a_last = CNN_RX[-1]
            layers.append(LayerSpec("conv1d", c_last, kernel=k_last, act=a_last))
            self.net = Network("rx", (y_len, ch), layers, rng)
        else:
            raise ConfigError(f"unknown architecture {arch!r}")

    @property
    def params(self):
        return self.net.params

    def forward(self, y: Tensor, y_p: Tensor | None = None) -> Tensor:
        """y (B, y_len, 2) or (B, y_len) real; y_p (B, yp_len, 2) or None."""
        if (y_p is None) != (self.yp_len == 0):
            raise FramingError("pilot input must match the configured pilot length")
        if self.arch == "fcn":
            b = y.shape[0]
            flat = tz.reshape(y, (b, int(np.prod(y.shape[1:]))))
            if y_p is not None:
                flat_p = tz.reshape(y_p, (b, int(np.prod(y_p.shape[1:]))))
                flat = tz.concat([flat, flat_p], axis=1)
            return self.net.forward(flat)
        if y.shape[1] != self.y_len:
            raise FramingError(f"receiver expects length {self.y_len}, got {y.shape[1]}")
        x = y
        if y_p is not None:
            if y_p.shape[1] < self.y_len:
                x_p = tz.pad_tail(y_p, self.y_len - y_p.shape[1], axis=1)
            elif y_p.shape[1] > self.y_len:
                raise FramingError("pilot observation longer than the data block")
            else:
                x_p = y_p
            x = tz.concat([x, x_p], axis=2)
        out = self.net.forward(x)  # (B, y_len, 1)
        out = tz.reshape(out, (out.shape[0], self.y_len))
        if self.y_len != self.n_bits:
            out = tz.take_front(out, self.n_bits, axis=1)
        return out
