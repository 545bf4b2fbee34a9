"""Small dense-tensor engine with taped reverse-mode differentiation.

Everything is float64 numpy underneath.  Operations record themselves on
the innermost active :class:`Tape`; :func:`backward` replays the records
in reverse execution order (which is already a valid topological order)
and accumulates adjoints into each reachable :class:`Parameter`'s
``grad``.  There is no broadcasting beyond what the listed ops need, no
graph optimization, and no view aliasing: every op produces a fresh
array.

Batching convention: the network-level ops (``dense_forward``,
``conv1d_forward``, ``power_normalize``) accept either a single sample
or a batch with a leading batch axis.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, DomainError

BCE_EPS = 1e-12

_TAPE_STACK: list["Tape"] = []


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """Dense real-valued array plus a requires-grad flag."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, _check: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        if _check and not np.all(np.isfinite(arr)):
            raise DomainError("tensor values must be finite")
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable tensor carrying its gradient and Adam state."""

    __slots__ = ("name", "grad", "adam_m", "adam_v", "adam_t")

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.adam_t = 0

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of executed ops, replayable in reverse for adjoints.

    Records are appended in execution order, so every op appears after
    the producers of its inputs by construction.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp) -> None:
        self.records.append((out, inputs, vjp))

    def __len__(self):
        return len(self.records)


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap an op result, recording it when a tape is live and grads flow."""
    rg = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=rg, _check=False)
    tape = _active_tape()
    if tape is not None and rg:
        tape.record(out, inputs, vjp)
    return out


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise / shape plumbing


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} vs {b.shape}")

    def vjp(g):
        return (g if a.requires_grad else None, g if b.requires_grad else None)

    return _make(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes {a.shape} vs {b.shape}")

    def vjp(g):
        return (g if a.requires_grad else None, -g if b.requires_grad else None)

    return _make(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} vs {b.shape}")

    def vjp(g):
        ga = g * b.data if a.requires_grad else None
        gb = g * a.data if b.requires_grad else None
        return (ga, gb)

    return _make(a.data * b.data, (a, b), vjp)


def scale(a, c: float) -> Tensor:
    a = _coerce(a)
    c = float(c)

    def vjp(g):
        return (g * c if a.requires_grad else None,)

    return _make(a.data * c, (a,), vjp)


def sum_all(a) -> Tensor:
    a = _coerce(a)

    def vjp(g):
        return (np.full_like(a.data, float(g)) if a.requires_grad else None,)

    return _make(np.asarray(a.data.sum()), (a,), vjp)


def mean_all(a) -> Tensor:
    a = _coerce(a)
    n = a.size

    def vjp(g):
        return (np.full_like(a.data, float(g) / n) if a.requires_grad else None,)

    return _make(np.asarray(a.data.mean()), (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    shape = tuple(shape)
    old = a.shape

    def vjp(g):
        return (g.reshape(old) if a.requires_grad else None,)

    return _make(a.data.reshape(shape), (a,), vjp)


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_coerce(p) for p in parts]
    datas = [p.data for p in parts]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(pieces, parts))

    return _make(np.concatenate(datas, axis=axis), tuple(parts), vjp)


def take_front(a, length: int, axis: int) -> Tensor:
    """Keep the first ``length`` entries along ``axis``; zero-grad elsewhere."""
    a = _coerce(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(0, length)
    idx = tuple(idx)

    def vjp(g):
        if not a.requires_grad:
            return (None,)
        out = np.zeros_like(a.data)
        out[idx] = g
        return (out,)

    return _make(a.data[idx].copy(), (a,), vjp)


def pad_tail(a, extra: int, axis: int) -> Tensor:
    """Append ``extra`` zeros along ``axis``."""
    a = _coerce(a)
    widths = [(0, 0)] * a.ndim
    widths[axis] = (0, extra)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(0, a.shape[axis])
    idx = tuple(idx)

    def vjp(g):
        return (g[idx] if a.requires_grad else None,)

    return _make(np.pad(a.data, widths), (a,), vjp)


def delay_pad(a, delay: int, out_len: int, axis: int) -> Tensor:
    """Place ``a`` at offset ``delay`` inside a zero block of length ``out_len``."""
    a = _coerce(a)
    k = a.shape[axis]
    if delay + k > out_len:
        raise DimensionError("delay_pad: input does not fit in output length")
    shape = list(a.shape)
    shape[axis] = out_len
    data = np.zeros(shape)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(delay, delay + k)
    idx = tuple(idx)
    data[idx] = a.data

    def vjp(g):
        return (g[idx] if a.requires_grad else None,)

    return _make(data, (a,), vjp)


# ---------------------------------------------------------------------------
# activations


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(a) -> Tensor:
    a = _coerce(a)
    mask = a.data > 0

    def vjp(g):
        return (g * mask if a.requires_grad else None,)

    return _make(np.where(mask, a.data, 0.0), (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    y = _sigmoid(a.data)

    def vjp(g):
        return (g * y * (1.0 - y) if a.requires_grad else None,)

    return _make(y, (a,), vjp)


def activation(a, kind: str) -> Tensor:
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "none":
        return _coerce(a)
    raise ConfigError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# layers


def dense_forward(x, weights: Parameter, bias: Parameter, act: str = "none") -> Tensor:
    """Affine map out = act(x @ W.T + b) with W of shape (out, in).

    ``x`` may be (in,), (batch, in) or (batch, len, ch); the trailing
    axes are flattened to the weight's input width.
    """
    x = _coerce(x)
    n_out, n_in = weights.shape
    if x.ndim == 1:
        xv = reshape(x, (1, x.size))
        squeeze = True
    elif x.ndim == 2:
        xv, squeeze = x, False
    elif x.ndim == 3:
        xv = reshape(x, (x.shape[0], x.shape[1] * x.shape[2]))
        squeeze = False
    else:
        raise DimensionError(f"dense: unsupported input rank {x.ndim}")
    if xv.shape[1] != n_in:
        raise DimensionError(f"dense: input width {xv.shape[1]} vs weights {n_in}")
    if bias.shape != (n_out,):
        raise DimensionError(f"dense: bias shape {bias.shape} vs ({n_out},)")

    xd = xv.data

    def vjp(g):
        gx = g @ weights.data if xv.requires_grad else None
        gw = g.T @ xd if weights.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return (gx, gw, gb)

    out = _make(xd @ weights.data.T + bias.data, (xv, weights, bias), vjp)
    out = activation(out, act)
    if squeeze:
        out = reshape(out, (n_out,))
    return out


def conv1d_forward(x, kernels: Parameter, bias: Parameter, act: str = "none") -> Tensor:
    """Length-preserving 1-D convolution.

    ``kernels`` has shape (L, C_in, C_out) with L odd; the output at
    position n sums kernels[k] * input[n + L//2 - k] with reads outside
    the sequence treated as zero (same padding).  Accumulation runs in
    ascending k, matching the definitional double sum term for term.
    """
    x = _coerce(x)
    if x.ndim == 2:
        xv = reshape(x, (1,) + x.shape)
        squeeze = True
    elif x.ndim == 3:
        xv, squeeze = x, False
    else:
        raise DimensionError(f"conv1d: unsupported input rank {x.ndim}")
    L, c_in, c_out = kernels.shape
    if L % 2 == 0:
        raise ConfigError("conv1d kernel length must be odd")
    if xv.shape[2] != c_in:
        raise DimensionError(f"conv1d: {xv.shape[2]} input channels vs kernel {c_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"conv1d: bias shape {bias.shape} vs ({c_out},)")

    b, k_len, _ = xv.shape
    half = L // 2
    xp = np.zeros((b, k_len + 2 * half, c_in))
    xp[:, half : half + k_len] = xv.data

    out = np.zeros((b, k_len, c_out))
    for k in range(L):
        off = L - 1 - k
        out += xp[:, off : off + k_len] @ kernels.data[k]
    out += bias.data

    def vjp(g):
        gx = None
        if xv.requires_grad:
            gxp = np.zeros_like(xp)
            for k in range(L):
                off = L - 1 - k
                gxp[:, off : off + k_len] += g @ kernels.data[k].T
            gx = gxp[:, half : half + k_len]
        gw = None
        if kernels.requires_grad:
            gw = np.empty_like(kernels.data)
            for k in range(L):
                off = L - 1 - k
                gw[k] = np.tensordot(xp[:, off : off + k_len], g, axes=([0, 1], [0, 1]))
        gb = g.sum(axis=(0, 1)) if bias.requires_grad else None
        return (gx, gw, gb)

    res = _make(out, (xv, kernels, bias), vjp)
    res = activation(res, act)
    if squeeze:
        res = reshape(res, res.shape[1:])
    return res


def power_normalize(x, dims_per_symbol: int = 2) -> Tensor:
    """Scale each sample so its mean per-symbol power is exactly one.

    A sample of D real values carries D / dims_per_symbol symbols; the
    output is x * sqrt(n_symbols / sum(x^2)).  All-zero samples pass
    through unchanged.
    """
    x = _coerce(x)
    if x.ndim == 1:
        xv = reshape(x, (1, x.size))
        squeeze = True
    else:
        xv = reshape(x, (x.shape[0], x.size // x.shape[0])) if x.ndim > 2 else x
        squeeze = False
    n_sym = xv.shape[1] / dims_per_symbol
    s = np.sum(xv.data**2, axis=1, keepdims=True)
    safe = np.where(s > 0, s, 1.0)
    c = np.where(s > 0, np.sqrt(n_sym / safe), 0.0)
    y = c * xv.data

    def vjp(g):
        if not xv.requires_grad:
            return (None,)
        dot = np.sum(g * xv.data, axis=1, keepdims=True)
        return (c * (g - xv.data * dot / safe),)

    out = _make(y, (xv,), vjp)
    out = reshape(out, x.shape)
    if squeeze:
        out = reshape(out, (x.size,))
    return out


def complex_scale(x, h) -> Tensor:
    """Multiply I/Q pairs by per-sample complex constants.

    ``x`` has shape (B, K, 2); ``h`` is a complex scalar, a (B,) vector
    (one gain per block) or a (B, K) matrix (one gain per symbol).  The
    gains are channel state, not trainable, so no gradient flows to h.
    """
    x = _coerce(x)
    if x.ndim != 3 or x.shape[2] != 2:
        raise DimensionError("complex_scale expects (B, K, 2) input")
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim == 0:
        h = h.reshape(1, 1)
    elif h.ndim == 1:
        h = h[:, None]
    hr, hi = h.real[..., None], h.imag[..., None]
    xi, xq = x.data[..., :1], x.data[..., 1:]
    y = np.concatenate([hr * xi - hi * xq, hi * xi + hr * xq], axis=2)

    def vjp(g):
        if not x.requires_grad:
            return (None,)
        gi, gq = g[..., :1], g[..., 1:]
        return (np.concatenate([hr * gi + hi * gq, -hi * gi + hr * gq], axis=2),)

    return _make(y, (x,), vjp)


# ---------------------------------------------------------------------------
# losses


def bce_loss(pred, target) -> Tensor:
    """Summed binary cross-entropy -sum(t log p + (1-t) log(1-p)).

    Predictions are clamped to [BCE_EPS, 1-BCE_EPS] before the logs;
    clamped coordinates get zero gradient.
    """
    pred = _coerce(pred)
    t = _as_array(target)
    if t.shape != pred.shape:
        raise DimensionError(f"bce: shapes {pred.shape} vs {t.shape}")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise DomainError("bce targets must be 0 or 1")
    p = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (pred.data > BCE_EPS) & (pred.data < 1.0 - BCE_EPS)
    val = -np.sum(t * np.log(p) + (1.0 - t) * np.log1p(-p))

    def vjp(g):
        if not pred.requires_grad:
            return (None, None)
        gp = np.where(inside, (-t / p + (1.0 - t) / (1.0 - p)) * float(g), 0.0)
        return (gp, None)

    return _make(np.asarray(val), (pred, Tensor(t)), vjp)


# ---------------------------------------------------------------------------
# backward pass and optimizer


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(param) into every Parameter the tape reaches."""
    if loss.ndim != 0 and loss.size != 1:
        raise ContractError("backward requires a scalar loss")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, inputs, vjp in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, vjp(g)):
            if gi is None or not t.requires_grad:
                continue
            if isinstance(t, Parameter):
                t.grad += gi
            else:
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi


def adam_step(
    params,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Standard Adam with bias correction; zeroes grads afterwards."""
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    for p in params:
        g = p.grad
        p.adam_t += 1
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1**p.adam_t)
        v_hat = p.adam_v / (1.0 - beta2**p.adam_t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


def finite_difference_grad(f, param: Parameter, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. param (test oracle)."""
    base = param.data.copy()
    out = np.zeros_like(base)
    flat = out.reshape(-1)
    pf = param.data.reshape(-1)
    for i in range(pf.size):
        orig = pf[i]
        pf[i] = orig + h
        hi = float(f().data)
        pf[i] = orig - h
        lo = float(f().data)
        pf[i] = orig
        flat[i] = (hi - lo) / (2.0 * h)
    param.data = base
    return out


# ---------------------------------------------------------------------------
# checkpoint container

_MAGIC = b"GCKP"
_VERSION = 1


def save_checkpoint(path, named_arrays: dict[str, np.ndarray]) -> None:
    """Write a flat binary container: header then (name, extents, float64 data)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, len(named_arrays)))
        for name, arr in named_arrays.items():
            raw = name.encode("utf-8")
            a = np.ascontiguousarray(arr, dtype=np.float64)
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", a.ndim))
            for ext in a.shape:
                fh.write(struct.pack("<Q", ext))
            fh.write(a.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<IQ", fh.read(12))
        if version != _VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<Q", fh.read(8))
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<Q", fh.read(8))
            shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(rank))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape)
            out[name] = data.copy()
    return out
