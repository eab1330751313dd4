"""Numpy implementations of the hot kernels.

These are the fallback backend when the compiled extension is not built.
Convolutions are evaluated by shifting the padded input once per kernel
offset and contracting over channels, which keeps peak memory at one
activation map instead of a full im2col buffer.

All functions preserve the input dtype (float32 in production, float64
for gradient checking) and are deterministic for a fixed input.
"""

from __future__ import annotations

import numpy as np


def conv2d_forward(x, w, b, stride: int, pad: int):
    """Cross-correlation of NCHW input with FCHW weights plus bias.

    Output spatial extent is floor((H + 2*pad - k) / stride) + 1.
    """
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        h, wd = h + 2 * pad, wd + 2 * pad
    ho = (h - kh) // stride + 1
    wo = (wd - kw) // stride + 1
    out = np.zeros((n, f, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = x[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride]
            out += np.einsum("nchw,fc->nfhw", xs, w[:, :, i, j], optimize=True)
    out += b.reshape(1, f, 1, 1)
    return out


def conv2d_backward(x, w, stride: int, pad: int, d_out):
    """Gradients of conv2d_forward w.r.t. input, weights and bias."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x
    hp, wp = h + 2 * pad, wd + 2 * pad
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    d_b = d_out.sum(axis=(0, 2, 3))
    d_w = np.zeros_like(w)
    d_xp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride]
            d_w[:, :, i, j] = np.einsum("nfhw,nchw->fc", d_out, xs, optimize=True)
            d_xp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += np.einsum(
                "nfhw,fc->nchw", d_out, w[:, :, i, j], optimize=True
            )
    d_x = d_xp[:, :, pad : pad + h, pad : pad + wd] if pad else d_xp
    return d_x, d_w, d_b


def avgpool_forward(x, window: int, stride: int):
    """Mean over window x window patches; channel count unchanged."""
    n, c, h, wd = x.shape
    ho = (h - window) // stride + 1
    wo = (wd - window) // stride + 1
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(window):
        for j in range(window):
            out += x[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride]
    out /= np.asarray(window * window, dtype=x.dtype)
    return out


def avgpool_backward(x_shape, window: int, stride: int, d_out):
    """Distribute each output gradient evenly across its input window."""
    n, c, h, wd = x_shape
    ho = (h - window) // stride + 1
    wo = (wd - window) // stride + 1
    d_x = np.zeros((n, c, h, wd), dtype=d_out.dtype)
    share = d_out / np.asarray(window * window, dtype=d_out.dtype)
    for i in range(window):
        for j in range(window):
            d_x[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += share
    return d_x
