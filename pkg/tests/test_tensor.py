"""Autodiff engine: taped gradients, numerics guards, optimizer, checkpoints."""

import numpy as np
import pytest

from gancomm import tensor as tz
from gancomm.cli import gradcheck_suite
from gancomm.errors import DimensionError, DomainError
from gancomm.tensor import Parameter, Tape, Tensor, backward, zero_grads


def taped_grads(loss_fn, params):
    zero_grads(params)
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    return [p.grad.copy() for p in params]


def test_gradients_match_finite_differences_all_layer_kinds():
    report = gradcheck_suite(n_seeds=10)
    for kind, err in report.items():
        assert err < 1e-4, f"{kind}: rel err {err:.3e}"


def test_tensor_rejects_non_finite_values():
    with pytest.raises(DomainError):
        Tensor(np.array([1.0, np.nan]))
    with pytest.raises(DomainError):
        Tensor(np.array([np.inf]))
    t = Tensor(np.array([1.0, np.nan]), _check=False)  # guard is opt-out
    assert np.isnan(t.data[1])


def test_tensor_data_is_float64():
    t = Tensor(np.array([1, 2, 3]))
    assert t.data.dtype == np.float64


def test_backward_accumulates_over_shared_input():
    # x used twice: d/dx (x*x) = 2x
    x = Parameter(np.array([1.5, -2.0]), "x")
    with Tape() as tape:
        loss = tz.sum_all(tz.mul(x, x))
    backward(loss, tape)
    assert np.allclose(x.grad, 2 * x.data)


def test_tapes_do_not_leak_between_contexts():
    x = Parameter(np.array([2.0]), "x")
    with Tape() as t1:
        a = tz.sum_all(tz.scale(x, 3.0))
    with Tape() as t2:
        b = tz.sum_all(tz.scale(x, 5.0))
    zero_grads([x])
    backward(a, t1)
    assert np.allclose(x.grad, 3.0)
    zero_grads([x])
    backward(b, t2)
    assert np.allclose(x.grad, 5.0)


def test_power_normalize_enforces_unit_mean_symbol_power():
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = Tensor(rng.normal(size=(8, 10)) * rng.uniform(0.1, 9.0))
        y = tz.power_normalize(x, dims_per_symbol=2).data
        n_sym = y.shape[1] // 2
        power = np.mean(np.sum(y.reshape(y.shape[0], n_sym, 2) ** 2, axis=2))
        assert abs(power - 1.0) < 1e-12


def test_conv1d_matches_definitional_double_sum():
    # out[n, f] = sum_k sum_c w[k, c, f] x[n + L//2 - k, c], zero outside
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 9, 3))
    w = rng.normal(size=(5, 3, 4))
    b = rng.normal(size=(4,))
    out = tz.conv1d_forward(Tensor(x), Tensor(w), Tensor(b)).data
    ref = np.zeros((2, 9, 4))
    for bi in range(2):
        for t in range(9):
            for f in range(4):
                acc = b[f]
                for k in range(5):
                    src = t + 2 - k
                    if 0 <= src < 9:
                        acc += np.dot(x[bi, src, :], w[k, :, f])
                ref[bi, t, f] = acc
    assert np.allclose(out, ref, atol=1e-12)


def test_dense_forward_shapes_and_bias():
    x = Tensor(np.ones((3, 4)))
    w = Tensor(np.zeros((2, 4)))
    b = Tensor(np.array([0.5, -1.0]))
    out = tz.dense_forward(x, w, b).data
    assert out.shape == (3, 2)
    assert np.allclose(out, [[0.5, -1.0]] * 3)


def test_activation_values():
    x = Tensor(np.array([-2.0, 0.0, 3.0]))
    assert np.allclose(tz.relu(x).data, [0.0, 0.0, 3.0])
    assert np.allclose(tz.sigmoid(x).data, 1 / (1 + np.exp([2.0, 0.0, -3.0])))
    with pytest.raises(ValueError):
        tz.activation(x, "swish")


def test_bce_loss_matches_closed_form():
    p = Tensor(np.array([[0.9, 0.2]]))
    t = np.array([[1.0, 0.0]])
    want = -(np.log(0.9) + np.log(0.8))  # summed, not averaged
    assert abs(tz.bce_loss(p, t).data - want) < 1e-12
    with pytest.raises(DomainError):
        tz.bce_loss(p, np.array([[0.5, 0.0]]))


def test_concat_and_take_front_roundtrip_gradients():
    a = Parameter(np.arange(6, dtype=float).reshape(2, 3), "a")
    b = Parameter(np.ones((2, 2)), "b")
    with Tape() as tape:
        cat = tz.concat([a, b])
        loss = tz.sum_all(tz.take_front(cat, 3, axis=1))
    zero_grads([a, b])
    backward(loss, tape)
    assert np.allclose(a.grad, np.ones((2, 3)))
    assert np.allclose(b.grad, np.zeros((2, 2)))


def test_adam_step_moves_against_gradient_and_tracks_moments():
    p = Parameter(np.array([1.0, -1.0]), "p")
    p.grad = np.array([0.5, -0.5])
    tz.adam_step([p], lr=0.01)
    assert p.adam_t == 1
    assert p.data[0] < 1.0 and p.data[1] > -1.0
    # bias-corrected first step has magnitude ~lr regardless of grad scale
    assert np.allclose(np.abs(p.data - np.array([1.0, -1.0])), 0.01, atol=1e-6)


def test_checkpoint_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    arrays = {
        "w1": rng.normal(size=(4, 5)),
        "b": rng.normal(size=(5,)),
        "count": np.array([3.0]),
    }
    path = tmp_path / "ck.bin"
    tz.save_checkpoint(path, arrays)
    loaded = tz.load_checkpoint(path)
    assert set(loaded) == set(arrays)
    for k in arrays:
        assert loaded[k].dtype == np.float64
        assert np.array_equal(loaded[k], arrays[k])


def test_checkpoint_rejects_corrupt_magic(tmp_path):
    path = tmp_path / "ck.bin"
    tz.save_checkpoint(path, {"a": np.zeros(2)})
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        tz.load_checkpoint(path)


def test_shape_mismatch_raises_dimension_error():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((3, 2)))
    with pytest.raises(DimensionError):
        tz.add(a, b)
