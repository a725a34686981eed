"""Convolution, pooling and recurrent building blocks on top of :mod:`rocr.core.tensor`."""
from __future__ import annotations

import numpy as np

from .tensor import (ShapeError, Tensor, _make, add, concat, index, linear, matmul,
                     mul, sigmoid, stack, tanh, transpose)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int):
    # x: [C, Hp, Wp] already padded -> cols [C*kh*kw, H'*W'] (channel-major, contiguous)
    c, hp, wp = x.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = np.empty((c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = x[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
    return cols.reshape(c * kh * kw, ho * wo), ho, wo


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of a [C_in, H, W] input with [C_out, C_in, kh, kw] kernels, zero padding."""
    if x.ndim != 3 or kernels.ndim != 4:
        raise ShapeError(f"conv2d expects [C,H,W] input and 4-D kernels, got {x.shape}, {kernels.shape}")
    c_out, c_in, kh, kw = kernels.shape
    if x.shape[0] != c_in:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[0]}, kernels expect {c_in}")
    if stride < 1 or kh < 1 or kw < 1:
        raise ValueError("conv2d needs stride >= 1 and non-empty kernels")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({c_out},)")
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ShapeError(f"conv2d kernel {kh}x{kw} larger than padded input {xp.shape[1:]}")
    if kh == kw == 1 and stride == 1:
        ho, wo = xp.shape[1], xp.shape[2]
        cols = xp.reshape(c_in, ho * wo)
    else:
        cols, ho, wo = _im2col(xp, kh, kw, stride)
    kmat = kernels.data.reshape(c_out, -1)
    out = (kmat @ cols).reshape(c_out, ho, wo)
    if bias is not None:
        out += bias.data[:, None, None]

    def input_grad(g):
        if stride == 1 and c_out < c_in:
            # full correlation of the (thinner) output gradient with flipped kernels
            gp = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            gcols, _, _ = _im2col(gp, kh, kw, 1)
            kflip = kernels.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c_in, -1)
            gxp = (kflip @ gcols).reshape(xp.shape)
        else:
            gcols = (kmat.T @ g.reshape(c_out, ho * wo)).reshape(c_in, kh, kw, ho, wo)
            gxp = np.zeros(xp.shape)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += gcols[:, i, j]
        return gxp[:, pad:pad + x.shape[1], pad:pad + x.shape[2]] if pad else gxp

    def backward(g):
        gm = g.reshape(c_out, ho * wo)
        gk = (gm @ cols.T).reshape(kernels.shape) if kernels.requires_grad else None
        gx = input_grad(g) if x.requires_grad else None
        gb = g.sum(axis=(1, 2)) if bias is not None else None
        return (gx, gk, gb) if bias is not None else (gx, gk)

    parents = (x, kernels, bias) if bias is not None else (x, kernels)
    return _make(out, parents, backward)


def max_pool2d(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped. Ties go to the first element."""
    c, h, w = x.shape
    ho, wo = h // 2, w // 2
    blocks = x.data[:, :2 * ho, :2 * wo].reshape(c, ho, 2, wo, 2).transpose(0, 1, 3, 2, 4).reshape(c, ho, wo, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros((c, ho, wo, 4))
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = np.zeros(x.shape)
        gx[:, :2 * ho, :2 * wo] = gb.reshape(c, ho, wo, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, 2 * ho, 2 * wo)
        return (gx,)

    return _make(out, (x,), backward)


def avg_pool2d(x: Tensor) -> Tensor:
    c, h, w = x.shape
    ho, wo = h // 2, w // 2
    out = x.data[:, :2 * ho, :2 * wo].reshape(c, ho, 2, wo, 2).mean(axis=(2, 4))

    def backward(g):
        gx = np.zeros(x.shape)
        gx[:, :2 * ho, :2 * wo] = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        return (gx,)

    return _make(out, (x,), backward)


# -- LSTM -------------------------------------------------------------------------

def lstm_gates(gates: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """Apply the (i, f, g, o) cell update to precomputed pre-activations [..., 4u]."""
    u = c.shape[-1]
    i = sigmoid(index(gates, (..., slice(0, u))))
    f = sigmoid(index(gates, (..., slice(u, 2 * u))))
    g = tanh(index(gates, (..., slice(2 * u, 3 * u))))
    o = sigmoid(index(gates, (..., slice(3 * u, 4 * u))))
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params) -> tuple[Tensor, Tensor]:
    """One LSTM step.

    ``params`` is ``(w_ih [4u, d], w_hh [4u, u], b [4u])``; ``x`` may be a
    single vector [d] or a batch [B, d].
    """
    w_ih, w_hh, b = params
    u = w_hh.shape[1]
    if w_ih.shape[0] != 4 * u or h.shape[-1] != u or c.shape[-1] != u or x.shape[-1] != w_ih.shape[1]:
        raise ShapeError(f"lstm_step shape mismatch: x {x.shape}, h {h.shape}, c {c.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape}")
    gates = add(add(linear(x, w_ih), linear(h, w_hh)), b)
    return lstm_gates(gates, c)


def lstm_sequence(xs: Tensor, params, reverse: bool = False) -> Tensor:
    """Run an LSTM over ``xs`` of shape [T, B, d] from zero state; returns [T, B, u].

    The input projection is computed for all timesteps at once.
    """
    w_ih, w_hh, b = params
    t_len, batch, d = xs.shape
    u = w_hh.shape[1]
    proj = add(matmul(xs.reshape(t_len * batch, d), transpose(w_ih)), b).reshape(t_len, batch, 4 * u)
    h = Tensor(np.zeros((batch, u)))
    c = Tensor(np.zeros((batch, u)))
    w_hh_t = transpose(w_hh)
    outs: list[Tensor | None] = [None] * t_len
    steps = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in steps:
        gates = add(index(proj, t), matmul(h, w_hh_t))
        h, c = lstm_gates(gates, c)
        outs[t] = h
    return stack(outs, axis=0)


def bilstm(xs: Tensor, fwd_params, bwd_params) -> Tensor:
    """Bidirectional LSTM over [T, B, d]; forward and backward outputs concatenated -> [T, B, 2u]."""
    return concat([lstm_sequence(xs, fwd_params), lstm_sequence(xs, bwd_params, reverse=True)], axis=2)


def pad2d(x: Tensor, pad: int) -> Tensor:
    """Zero-pad the two trailing spatial axes of [C, H, W]."""
    out = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    return _make(out, (x,), lambda g: (g[:, pad:pad + x.shape[1], pad:pad + x.shape[2]],))


def unfold3x3(x: Tensor) -> Tensor:
    """Gather each position's 3x3 neighbourhood (zero padded): [C, H, W] -> [9C, H, W].

    Channel order is (dy, dx, c) with dy, dx in row-major order.
    """
    c, h, w = x.shape
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1)))
    out = np.concatenate([xp[:, i:i + h, j:j + w] for i in range(3) for j in range(3)], axis=0)

    def backward(g):
        gp = np.zeros((c, h + 2, w + 2))
        k = 0
        for i in range(3):
            for j in range(3):
                gp[:, i:i + h, j:j + w] += g[k * c:(k + 1) * c]
                k += 1
        return (gp[:, 1:1 + h, 1:1 + w],)

    return _make(out, (x,), backward)
