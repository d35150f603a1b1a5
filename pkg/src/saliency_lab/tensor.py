"""Dense float64 kernels for feature maps laid out as (batch, channels, height, width).

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. Every function here is pure: inputs are never modified.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ACTIVATIONS = ("relu", "sigmoid", "tanh")
_TINY = np.finfo(np.float64).tiny
_ONE_MINUS = 1.0 - 2.0**-53


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array of rank >= 1."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def _require_rank(x: np.ndarray, rank: int, what: str) -> None:
    if x.ndim != rank:
        raise ValueError(f"{what} must have rank {rank}, got shape {x.shape}")


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - k) // stride + 1
    if out <= 0:
        raise ValueError(
            f"non-positive output size for input {size}, kernel {k}, stride {stride}, pad {pad}"
        )
    return out


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    # (B, C, Ho, Wo, kh, kw) strided view over the padded input
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x, kernel, bias, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlation of ``x`` (B, C, H, W) with ``kernel`` (O, C, kh, kw) plus ``bias`` (O,)."""
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    _require_rank(x, 4, "conv2d input")
    _require_rank(kernel, 4, "conv2d kernel")
    _require_rank(bias, 1, "conv2d bias")
    out_ch, in_ch, kh, kw = kernel.shape
    if x.shape[1] != in_ch:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {in_ch}")
    if bias.shape[0] != out_ch:
        raise ValueError(f"bias length {bias.shape[0]} != output channels {out_ch}")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    ho = conv_output_size(x.shape[2], kh, stride, pad)
    wo = conv_output_size(x.shape[3], kw, stride, pad)
    win = _windows(x, kh, kw, stride, pad)[:, :, :ho, :wo]
    out = np.tensordot(win, kernel, axes=([1, 4, 5], [1, 2, 3]))  # (B, Ho, Wo, O)
    out += bias
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_grad_weight(x, grad_out, kernel_shape, stride: int = 1, pad: int = 0) -> np.ndarray:
    _, _, kh, kw = kernel_shape
    ho, wo = grad_out.shape[2:]
    win = _windows(x, kh, kw, stride, pad)[:, :, :ho, :wo]
    return np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))


def conv2d_grad_input(grad_out, kernel, input_shape, stride: int = 1, pad: int = 0) -> np.ndarray:
    b, c, h, w = input_shape
    _, _, kh, kw = kernel.shape
    ho, wo = grad_out.shape[2:]
    gx = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(grad_out, kernel[:, :, i, j], axes=([1], [0]))  # (B, Ho, Wo, C)
            gx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib.transpose(0, 3, 1, 2)
    if pad:
        gx = gx[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(gx)


def maxpool2(x) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2.

    Returns the pooled map and, per output cell, the flat index (0..3, row-major)
    of the winning element inside its window. Ties go to the first maximum.
    """
    x = as_tensor(x)
    _require_rank(x, 4, "maxpool2 input")
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    blocks = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2_backward(grad_out, argmax) -> np.ndarray:
    b, c, ho, wo = grad_out.shape
    blocks = np.zeros((b, c, ho, wo, 4))
    np.put_along_axis(blocks, argmax[..., None], grad_out[..., None], axis=-1)
    return np.ascontiguousarray(
        blocks.reshape(b, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * ho, 2 * wo)
    )


def upsample2(x) -> np.ndarray:
    """Nearest-neighbour x2 upsampling: every pixel becomes a 2x2 block."""
    x = as_tensor(x)
    _require_rank(x, 4, "upsample2 input")
    return np.ascontiguousarray(x.repeat(2, axis=2).repeat(2, axis=3))


def upsample2_backward(grad_out) -> np.ndarray:
    b, c, h, w = grad_out.shape
    return grad_out.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def avgpool(x, factor: int) -> np.ndarray:
    """Mean over non-overlapping ``factor`` x ``factor`` blocks of the last two axes."""
    x = as_tensor(x)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return x.copy()
    *lead, h, w = x.shape
    if h % factor or w % factor:
        raise ValueError(f"dims {h}x{w} not divisible by {factor}")
    return x.reshape(*lead, h // factor, factor, w // factor, factor).mean(axis=(-3, -1))


def avgpool_backward(grad_out, factor: int) -> np.ndarray:
    if factor == 1:
        return grad_out
    g = grad_out / (factor * factor)
    return np.ascontiguousarray(g.repeat(factor, axis=-2).repeat(factor, axis=-1))


def dense(x, weight, bias) -> np.ndarray:
    """Affine map ``x @ weight.T + bias`` with ``weight`` shaped (out, in)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    _require_rank(x, 2, "dense input")
    _require_rank(weight, 2, "dense weight")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"dense inner dimension mismatch: {x.shape[1]} vs {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"bias shape {bias.shape} != ({weight.shape[0]},)")
    return x @ weight.T + bias


def sigmoid(x) -> np.ndarray:
    x = as_tensor(x)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    # keep the open interval (0, 1) even when exp saturates
    return np.clip(out, _TINY, _ONE_MINUS)


def activate(x, kind: str) -> np.ndarray:
    x = as_tensor(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
