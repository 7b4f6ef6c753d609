"""Multi-head attention with optional key/value down-sampling.

Five block variants share one query path (full-resolution tokens) and
differ in where keys/values come from:

  none          K/V from the input itself (quadratic-cost baseline)
  avgpool       K/V from a 2x2 average-pooled map (irreversible)
  conv          K/V from a learned stride-2 2x2 convolution (irreversible)
  wavelet       K/V from the Haar-packed, 3x3-convolved subband map
  wavelet_idwt  as `wavelet`, plus the inverse-transform branch: the
                contextualized subband map is reconstructed to full
                resolution and concatenated to the attention heads before
                the output projection

All spatial down-sampling here is by the fixed factor 2 per axis (one
wavelet level), so keys/values carry n/4 tokens.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (
    Tensor4,
    avg_pool2d,
    concat,
    conv2d,
    linear,
    matmul,
    merge_heads,
    scale,
    softmax_lastdim,
    spatial_to_tokens,
    split_heads,
    tokens_to_spatial,
    transpose_last2,
)
from .wavelet import dwt2d_haar, idwt2d_haar, subbands_pack, subbands_unpack

REDUCTION = 2  # all down-sampling modes halve each spatial axis
MODES = ("none", "avgpool", "conv", "wavelet", "wavelet_idwt")
DOWNSAMPLED_MODES = ("avgpool", "conv", "wavelet", "wavelet_idwt")


@dataclass
class AttentionParams:
    """Projection weights for one attention block (see init_attention_params)."""

    dim: int
    n_heads: int
    w_q: Tensor4
    w_k: Tensor4
    w_v: Tensor4
    w_o: Tensor4
    b_o: Tensor4
    w_d: Tensor4 | None = None
    conv_w: Tensor4 | None = None
    conv_b: Tensor4 | None = None
    ds_conv_w: Tensor4 | None = None
    ds_conv_b: Tensor4 | None = None

    @property
    def head_dim(self) -> int:
        return self.dim // self.n_heads

    def named(self) -> list[tuple[str, Tensor4]]:
        out = [("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v)]
        if self.w_d is not None:
            out.append(("w_d", self.w_d))
        if self.conv_w is not None:
            out.extend([("conv_w", self.conv_w), ("conv_b", self.conv_b)])
        if self.ds_conv_w is not None:
            out.extend([("ds_conv_w", self.ds_conv_w), ("ds_conv_b", self.ds_conv_b)])
        out.extend([("w_o", self.w_o), ("b_o", self.b_o)])
        return out


def validate_params(params: AttentionParams, mode: str) -> None:
    d, nh = params.dim, params.n_heads
    if mode not in MODES:
        raise ConfigError(f"unknown attention mode {mode!r}; expected one of {MODES}")
    if d % nh:
        raise ConfigError(f"dim {d} not divisible by {nh} heads")
    if mode in ("wavelet", "wavelet_idwt"):
        if d % 4:
            raise ConfigError(f"dim {d} not divisible by 4 (channel reduction)")
        if params.w_d is None or params.conv_w is None:
            raise ConfigError(f"mode {mode!r} needs w_d and the subband convolution")
    if mode == "conv" and params.ds_conv_w is None:
        raise ConfigError("mode 'conv' needs the stride-2 reduction convolution")
    o_in = d + d // 4 if mode == "wavelet_idwt" else d
    if params.w_o.dims != (1, 1, o_in, d):
        raise ConfigError(
            f"w_o dims {params.w_o.dims} disagree with mode {mode!r} (expected (1,1,{o_in},{d}))"
        )


def _trunc_normal(rng: np.random.Generator, shape, std: float, dtype) -> np.ndarray:
    """Normal(0, std) resampled into [-2 std, 2 std]."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(dtype)


def init_attention_params(
    rng: np.random.Generator, dim: int, n_heads: int, mode: str, dtype=np.float32
) -> AttentionParams:
    """Truncated-normal (std 0.02) weights, zero biases, sized for `mode`."""

    def w(*shape):
        return Tensor4(_trunc_normal(rng, shape, 0.02, dtype), requires_grad=True)

    def zeros(*shape):
        return Tensor4(np.zeros(shape, dtype=dtype), requires_grad=True)

    o_in = dim + dim // 4 if mode == "wavelet_idwt" else dim
    params = AttentionParams(
        dim=dim,
        n_heads=n_heads,
        w_q=w(1, 1, dim, dim),
        w_k=w(1, 1, dim, dim),
        w_v=w(1, 1, dim, dim),
        w_o=w(1, 1, o_in, dim),
        b_o=zeros(1, 1, 1, dim),
    )
    if mode in ("wavelet", "wavelet_idwt"):
        params.w_d = w(1, 1, dim, dim // 4)
        params.conv_w = w(dim, dim, 3, 3)
        params.conv_b = zeros(1, 1, 1, dim)
    if mode == "conv":
        params.ds_conv_w = w(dim, dim, REDUCTION, REDUCTION)
        params.ds_conv_b = zeros(1, 1, 1, dim)
    validate_params(params, mode)
    return params


def multi_head_attention(q: Tensor4, k: Tensor4, v: Tensor4, n_heads: int) -> Tensor4:
    """Scaled dot-product attention per head, heads concatenated.

    q is (n_b, 1, n, D); k and v are (n_b, 1, m, D) with m >= 1. The output
    projection is left to the caller so the reconstruction branch can be
    concatenated first.
    """
    if q.dims[3] != k.dims[3] or k.dims != v.dims:
        raise ShapeError(f"attention operands disagree: Q {q.dims}, K {k.dims}, V {v.dims}")
    if q.dims[3] % n_heads:
        raise ConfigError(f"dim {q.dims[3]} not divisible by {n_heads} heads")
    head_dim = q.dims[3] // n_heads
    qh = split_heads(q, n_heads)
    kh = split_heads(k, n_heads)
    vh = split_heads(v, n_heads)
    scores = scale(matmul(qh, transpose_last2(kh)), 1.0 / math.sqrt(head_dim))
    weights = softmax_lastdim(scores)
    return merge_heads(matmul(weights, vh))


def downsample_kv_source(x: Tensor4, params: AttentionParams, mode: str) -> Tensor4:
    """Spatial key/value source map for the irreversible modes (and none)."""
    if mode == "none":
        return x
    if mode == "avgpool":
        return avg_pool2d(x, REDUCTION, REDUCTION)
    if mode == "conv":
        return conv2d(x, params.ds_conv_w, params.ds_conv_b, stride=REDUCTION, padding=0)
    raise ConfigError(f"downsample_kv_source: unsupported mode {mode!r}")


def wavelet_kv(x: Tensor4, params: AttentionParams) -> tuple[Tensor4, Tensor4]:
    """Wavelet key/value source and the reconstructed full-resolution branch.

    Channel-reduce the input, decompose it into the four Haar subbands,
    stack them (giving back D channels at half resolution) and apply the
    3x3 locality convolution. Returns that contextualized map (the K/V
    source) together with its inverse-transform reconstruction at full
    resolution, which carries D/4 channels.
    """
    n, d, h, w = x.dims
    tokens = spatial_to_tokens(x)
    reduced = tokens_to_spatial(matmul(tokens, params.w_d), h, w)
    packed = subbands_pack(dwt2d_haar(reduced))
    contextualized = conv2d(packed, params.conv_w, params.conv_b, stride=1, padding=1)
    reconstructed = idwt2d_haar(subbands_unpack(contextualized))
    return contextualized, reconstructed


def downsampled_attention(x: Tensor4, params: AttentionParams, mode: str) -> Tensor4:
    """Baseline blocks: attention over avgpool- or conv-reduced keys/values."""
    if mode not in ("none", "avgpool", "conv"):
        raise ConfigError(f"downsampled_attention handles none/avgpool/conv, got {mode!r}")
    return wavelets_block_attention(x, params, mode)


def wavelets_block_attention(x: Tensor4, params: AttentionParams, mode: str) -> Tensor4:
    """Full attention block on a spatial map: (n_b, D, H, W) -> same dims."""
    validate_params(params, mode)
    n, d, h, w = x.dims
    if d != params.dim:
        raise ShapeError(f"input channels {d} disagree with params dim {params.dim}")
    if mode in DOWNSAMPLED_MODES and (h % REDUCTION or w % REDUCTION):
        raise ShapeError(f"mode {mode!r} needs even spatial dims, got {h}x{w}")

    tokens = spatial_to_tokens(x)
    q = matmul(tokens, params.w_q)

    recon = None
    if mode in ("wavelet", "wavelet_idwt"):
        kv_src, recon = wavelet_kv(x, params)
    else:
        kv_src = downsample_kv_source(x, params, mode)
    kv_tokens = spatial_to_tokens(kv_src)
    k = matmul(kv_tokens, params.w_k)
    v = matmul(kv_tokens, params.w_v)

    heads = multi_head_attention(q, k, v, params.n_heads)
    if mode == "wavelet_idwt":
        heads = concat([heads, spatial_to_tokens(recon)], axis=3)
    out = linear(heads, params.w_o, params.b_o)
    return tokens_to_spatial(out, h, w)
