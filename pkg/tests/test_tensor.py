import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rocr.core import (MissingGradError, ParamSet, ShapeError, Tensor, add, bilstm, conv2d,
                       cross_entropy, elementwise, grad_check, linear, lstm_step, max_pool2d,
                       avg_pool2d, mul, relu, sgd_step, softmax, tsum)
from rocr.core.params import CheckpointError


def T(x, grad=False):
    return Tensor(np.array(x, dtype=float), requires_grad=grad)


def weighted(out, rng):
    # random projection keeps every output coordinate's gradient well away from zero
    w = Tensor(rng.normal(size=out.shape))
    return tsum(mul(out, w))


# -- conv2d -----------------------------------------------------------------

def naive_conv(x, k, b, stride, pad):
    c_in, h, w = x.shape
    c_out, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for r in range(ho):
            for c in range(wo):
                acc = b[o]
                for ci in range(c_in):
                    for i in range(kh):
                        for j in range(kw):
                            acc += k[o, ci, i, j] * xp[ci, r * stride + i, c * stride + j]
                out[o, r, c] = acc
    return out


def test_conv_identity_kernel():
    x = T(np.arange(12.0).reshape(1, 3, 4))
    y = conv2d(x, T(np.ones((1, 1, 1, 1))), T([0.0]))
    np.testing.assert_array_equal(y.data, x.data)


def test_conv_hand_sum():
    x = T([[[1, 2, 3], [4, 5, 6], [7, 8, 9]]])
    y = conv2d(x, T(np.ones((1, 1, 2, 2))), T([0.0]), stride=1, pad=0)
    np.testing.assert_array_equal(y.data, [[[12, 16], [24, 28]]])


def test_conv_zero_kernels_give_bias():
    rng = np.random.default_rng(0)
    x = T(rng.normal(size=(2, 5, 6)))
    y = conv2d(x, T(np.zeros((3, 2, 3, 3))), T([0.5, -1.0, 2.0]), pad=1)
    for o, b in enumerate([0.5, -1.0, 2.0]):
        assert np.all(y.data[o] == b)


@pytest.mark.parametrize("stride,pad,kh,kw", [(1, 0, 3, 3), (2, 1, 3, 3), (1, 1, 2, 3), (3, 2, 1, 2)])
def test_conv_matches_naive(stride, pad, kh, kw):
    rng = np.random.default_rng(stride * 10 + pad)
    x = rng.normal(size=(2, 7, 6))
    k = rng.normal(size=(3, 2, kh, kw))
    b = rng.normal(size=3)
    y = conv2d(T(x), T(k), T(b), stride=stride, pad=pad)
    assert y.shape == (3, (7 + 2 * pad - kh) // stride + 1, (6 + 2 * pad - kw) // stride + 1)
    np.testing.assert_allclose(y.data, naive_conv(x, k, b, stride, pad), rtol=1e-12, atol=1e-12)



@pytest.mark.parametrize("c_in,c_out,k,stride,pad", [(4, 2, 3, 1, 1), (2, 4, 3, 1, 1), (5, 3, 1, 1, 0),
                                                     (3, 2, 2, 1, 0), (4, 2, 3, 2, 1)])
def test_conv_gradients_all_paths(c_in, c_out, k, stride, pad):
    rng = np.random.default_rng(c_in * 7 + c_out)
    x = T(rng.normal(size=(c_in, 6, 7)))
    w = T(rng.normal(size=(c_out, c_in, k, k)) * 0.5)
    b = T(rng.normal(size=c_out))
    proj = rng.normal(size=conv2d(x, w, b, stride=stride, pad=pad).shape)
    assert grad_check(lambda: tsum(mul(conv2d(x, w, b, stride=stride, pad=pad), T(proj))), [x, w, b]) < 1e-6

def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d(T(np.zeros((2, 4, 4))), T(np.zeros((1, 3, 3, 3))), T([0.0]))


# -- linear / nonlinearities / softmax -------------------------------------

def test_linear_examples():
    np.testing.assert_array_equal(linear(T([2, 3]), T(np.eye(2)), T([0, 0])).data, [2, 3])
    np.testing.assert_array_equal(linear(T([2, 3]), T([[1, 1]]), T([0.5])).data, [5.5])
    np.testing.assert_array_equal(linear(T([2, 3]), T(np.zeros((2, 2))), T([7, 8])).data, [7, 8])
    with pytest.raises(ShapeError):
        linear(T([1, 2, 3]), T(np.eye(2)), T([0, 0]))


def test_elementwise_examples():
    assert elementwise(T([0.0]), "sigmoid").data[0] == 0.5
    assert elementwise(T([0.0]), "tanh").data[0] == 0.0
    np.testing.assert_array_equal(elementwise(T([-1, -2, -0.5]), "relu").data, [0, 0, 0])


def test_softmax_examples():
    np.testing.assert_array_equal(softmax(T([0.0, 0.0])).data, [0.5, 0.5])
    np.testing.assert_allclose(softmax(T([math.log(1), math.log(2), math.log(3)])).data,
                               [1 / 6, 2 / 6, 3 / 6], atol=1e-15)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(xs, c):
    p = softmax(T(xs)).data
    assert abs(p.sum() - 1) <= 1e-12
    assert np.all(p > 0)
    np.testing.assert_allclose(softmax(T(np.array(xs) + c)).data, p, rtol=1e-9, atol=1e-12)


def test_cross_entropy_examples():
    logits = np.zeros(5)
    logits[2] = 1e3
    assert cross_entropy(T(logits), 2).item() < 1e-12
    assert cross_entropy(T(np.zeros(7)), 3).item() == pytest.approx(math.log(7), abs=1e-14)
    assert cross_entropy(T([0.0, math.log(3)]), 0).item() == pytest.approx(math.log(4), abs=1e-14)
    with pytest.raises(IndexError):
        cross_entropy(T([0.0, 1.0]), 2)


# -- LSTM --------------------------------------------------------------------

def zero_lstm(d, u):
    return (T(np.zeros((4 * u, d))), T(np.zeros((4 * u, u))), T(np.zeros(4 * u)))


def test_lstm_zero_params():
    h, c = lstm_step(T([0.3, -1.0]), T([0.0]), T([0.0]), zero_lstm(2, 1))
    assert h.data[0] == 0 and c.data[0] == 0
    h, c = lstm_step(T([0.3, -1.0]), T([0.0]), T([1.0]), zero_lstm(2, 1))
    assert c.data[0] == pytest.approx(0.5, abs=1e-15)
    # closed form: sigmoid(0) * tanh(0.5)
    assert h.data[0] == pytest.approx(0.5 * math.tanh(0.5), abs=1e-15)
    assert h.data[0] == pytest.approx(0.23106, abs=1e-5)


def test_lstm_gate_order():
    # bias only on the forget gate slot: c' = sigmoid(b_f) * c
    u = 1
    w_ih, w_hh, _ = zero_lstm(1, u)
    b = T([0.0, 2.0, 0.0, 0.0])
    _, c = lstm_step(T([0.0]), T([0.0]), T([1.0]), (w_ih, w_hh, b))
    assert c.data[0] == pytest.approx(1 / (1 + math.exp(-2.0)))


def test_bilstm_palindrome_symmetry():
    rng = np.random.default_rng(3)
    params = (T(rng.normal(size=(8, 3))), T(rng.normal(size=(8, 2))), T(rng.normal(size=8)))
    seq = rng.normal(size=(3, 1, 3))
    pal = np.concatenate([seq, seq[::-1]], axis=0)  # length 6, palindromic
    out = bilstm(T(pal), params, params).data
    fwd, bwd = out[..., :2], out[..., 2:]
    np.testing.assert_allclose(fwd, bwd[::-1], atol=1e-14)


# -- backward ----------------------------------------------------------------

def test_backward_sum_and_square():
    p = T([1.0, 2.0, 3.0], grad=True)
    tsum(p).backward()
    np.testing.assert_array_equal(p.grad, [1, 1, 1])
    q = T([1.0, 2.0], grad=True)
    tsum(mul(q, q)).backward()
    np.testing.assert_array_equal(q.grad, [2, 4])


def test_backward_fanout_exact():
    x = T([1.5], grad=True)
    tsum(add(x, x)).backward()
    assert x.grad[0] == 2.0


def test_backward_leaves_constants_untouched():
    x = T([1.0, 2.0])
    p = T([3.0, 4.0], grad=True)
    tsum(mul(x, p)).backward()
    assert x.grad is None
    np.testing.assert_array_equal(p.grad, [1, 2])


def test_backward_non_scalar():
    with pytest.raises(ShapeError):
        T([1.0, 2.0], grad=True).backward()


# -- grad_check --------------------------------------------------------------

def test_grad_check_constant_function():
    p = T([1.0, 2.0])
    assert grad_check(lambda: Tensor(3.0), [p]) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_linear_cross_entropy(seed):
    rng = np.random.default_rng(seed)
    x = T(rng.normal(size=4))
    w = T(rng.normal(size=(3, 4)) * 0.5)
    b = T(rng.normal(size=3) * 0.5)
    assert grad_check(lambda: cross_entropy(linear(x, w, b), 1), [w, b]) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_lstm(seed):
    rng = np.random.default_rng(seed)
    params = [T(rng.normal(size=(12, 2)) * 0.5), T(rng.normal(size=(12, 3)) * 0.5), T(rng.normal(size=12) * 0.5)]
    x, h, c = T(rng.normal(size=2)), T(rng.normal(size=3)), T(rng.normal(size=3))
    r = Tensor(rng.normal(size=3))

    def f():
        h2, c2 = lstm_step(x, h, c, params)
        return tsum(mul(add(h2, c2), r))

    assert grad_check(f, params + [x, h, c]) < 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_conv_relu_linear_ce(seed):
    rng = np.random.default_rng(seed)
    x = T(rng.normal(size=(2, 5, 5)))
    k = T(rng.normal(size=(3, 2, 3, 3)) * 0.4)
    kb = T(rng.normal(size=3) * 0.1)
    w = T(rng.normal(size=(4, 3 * 2 * 2)) * 0.3)
    b = T(rng.normal(size=4) * 0.1)

    def f():
        y = relu(conv2d(x, k, kb, stride=2, pad=1))  # 3x3x3
        y = max_pool2d(y).reshape(-1)                 # 3x1x1 -> pad to 12 below
        y2 = avg_pool2d(relu(conv2d(x, k, kb, pad=1))).reshape(-1)  # 3x2x2 = 12
        return cross_entropy(linear(y2, w, b) + tsum(y) * 0.1, 2)

    assert grad_check(f, [x, k, kb, w, b]) < 1e-4


# -- sgd / params ------------------------------------------------------------

def test_sgd_step_examples():
    ps = ParamSet({"p": Tensor([1.0])})
    ps["p"].grad = np.array([0.5])
    sgd_step(ps, 0.1)
    assert ps["p"].data[0] == pytest.approx(0.95)
    ps.zero_grad()
    sgd_step(ps, 0.1)
    assert ps["p"].data[0] == pytest.approx(0.95)
    before = ps.state()
    ps["p"].grad = np.array([3.0])
    sgd_step(ps, 0.0)
    sgd_step(ps, 0.0)
    np.testing.assert_array_equal(ps["p"].data, before["p"])


def test_sgd_missing_grad():
    ps = ParamSet({"a": Tensor([1.0])})
    with pytest.raises(MissingGradError):
        sgd_step(ps, 0.1)


def test_paramset_order_and_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    ps = ParamSet({"z.w": Tensor(rng.normal(size=(2, 3))), "a.b": Tensor(rng.normal(size=4)),
                   "m": Tensor(np.array(1.25))})
    assert list(ps) == ["a.b", "m", "z.w"]
    blob = ps.to_bytes()
    assert blob[:5] == b"RKPT\x01"
    manifest = blob[5:blob.index(b"\0")].decode()
    assert manifest.splitlines() == ["a.b f32 4", "m f32", "z.w f32 2 3"]
    back = ParamSet.from_bytes(blob)
    for k in ps:
        np.testing.assert_allclose(back[k].data, ps[k].data, rtol=1e-7)
    ps.save(tmp_path / "x.rkpt")
    assert (tmp_path / "x.rkpt").read_bytes() == blob


def test_paramset_errors():
    with pytest.raises(CheckpointError):
        ParamSet.from_bytes(b"NOPE\x01")
    ps = ParamSet({"a": Tensor(np.zeros(3))})
    with pytest.raises(CheckpointError):
        ParamSet.from_bytes(ps.to_bytes()[:-2])
    with pytest.raises(KeyError):
        ps["a"] = Tensor([1.0])


def test_determinism_bit_identical():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 6, 6))
    k = rng.normal(size=(2, 2, 3, 3))
    a = conv2d(T(x), T(k), T([0.1, 0.2]), pad=1).data
    b = conv2d(T(x), T(k), T([0.1, 0.2]), pad=1).data
    assert a.tobytes() == b.tobytes()
