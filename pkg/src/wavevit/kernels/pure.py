"""NumPy implementations of the hot kernels.

This is the fallback backend: every function here has a signature-identical
twin in the compiled extension (`wavevit.kernels._core`). All functions take
and return C-contiguous (batch, channel, height, width) float32/float64
arrays and never change dtype.
"""
from __future__ import annotations

import numpy as np

NAME = "pure"


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, b, stride, pad):
    """Cross-correlation of x (n,ci,h,w) with w (co,ci,kh,kw), zero padding."""
    n, ci, h, wd = x.shape
    co, ci_w, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = _pad_hw(x, pad)
    s = xp.strides
    # window view (n, ci, kh, kw, ho, wo); contraction over (ci, kh, kw)
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, ci, kh, kw, ho, wo),
        strides=(s[0], s[1], s[2], s[3], s[2] * stride, s[3] * stride),
        writeable=False,
    )
    out = np.einsum("nijkhw,oijk->nohw", win, w, optimize=True)
    if b is not None:
        out += b[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_grad_input(dy, w, stride, pad, h, wd):
    """Gradient of conv2d_forward w.r.t. x, given upstream dy (n,co,ho,wo)."""
    n, co, ho, wo = dy.shape
    co_w, ci, kh, kw = w.shape
    dxp = np.zeros((n, ci, h + 2 * pad, wd + 2 * pad), dtype=dy.dtype)
    for dh in range(kh):
        for dw in range(kw):
            # contribution of kernel tap (dh, dw) lands on a strided grid
            contrib = np.einsum("nohw,oi->nihw", dy, w[:, :, dh, dw], optimize=True)
            dxp[:, :, dh : dh + stride * ho : stride, dw : dw + stride * wo : stride] += contrib
    if pad == 0:
        return dxp
    return np.ascontiguousarray(dxp[:, :, pad : pad + h, pad : pad + wd])


def conv2d_grad_weight(x, dy, stride, pad, kh, kw):
    """Gradient of conv2d_forward w.r.t. w."""
    n, ci, h, wd = x.shape
    _, co, ho, wo = dy.shape
    xp = _pad_hw(x, pad)
    dw = np.empty((co, ci, kh, kw), dtype=dy.dtype)
    for dh in range(kh):
        for dwi in range(kw):
            window = xp[:, :, dh : dh + stride * ho : stride, dwi : dwi + stride * wo : stride]
            dw[:, :, dh, dwi] = np.einsum("nohw,nihw->oi", dy, window, optimize=True)
    return dw


def dwt2d(x):
    """Single-level orthonormal Haar analysis of x (n,c,h,w), h and w even.

    Returns (ll, lh, hl, hh), each (n,c,h/2,w/2). The fused 2x2 butterfly
    below is algebraically identical to filtering with (1/sqrt2, +-1/sqrt2)
    along width then height with stride 2: the two 1/sqrt2 gains combine to
    the exact factor 0.5.
    """
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    c = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    half = x.dtype.type(0.5)
    ll = (a + b + c + d) * half
    lh = (a + b - c - d) * half
    hl = (a - b + c - d) * half
    hh = (a - b - c + d) * half
    return ll, lh, hl, hh


def idwt2d(ll, lh, hl, hh):
    """Exact inverse of dwt2d; output is (n,c,2h,2w)."""
    n, c, h2, w2 = ll.shape
    out = np.empty((n, c, 2 * h2, 2 * w2), dtype=ll.dtype)
    half = ll.dtype.type(0.5)
    out[:, :, 0::2, 0::2] = (ll + lh + hl + hh) * half
    out[:, :, 0::2, 1::2] = (ll + lh - hl - hh) * half
    out[:, :, 1::2, 0::2] = (ll - lh + hl - hh) * half
    out[:, :, 1::2, 1::2] = (ll - lh - hl + hh) * half
    return out
