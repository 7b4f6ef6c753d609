"""Four-stage pyramid backbone built from wavelet-attention blocks.

Each stage is an overlapping patch embedding (stride 4 then 2/2/2) followed
by pre-norm residual blocks: x + attn(norm(x)), then y + ffn(norm(y)).
The two high-resolution stages use wavelet-downsampled attention; the last
two grids (14x14 and 7x7 at 224 input) are small enough for full attention,
and the final 7x7 grid is odd, which the exact single-level transform does
not admit.

Positional information comes only from the overlapping embeddings and the
in-block 3x3 convolution; there is no explicit positional encoding. The
classifier is norm -> global average pool over tokens -> linear.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attention import MODES, _trunc_normal, init_attention_params, wavelets_block_attention
from .errors import ConfigError, ShapeError
from .tensor import (
    Tensor4,
    add,
    conv2d,
    gelu,
    layer_norm,
    linear,
    mean_tokens,
    spatial_to_tokens,
    tokens_to_spatial,
)

PATCH_STRIDES = (4, 2, 2, 2)
LN_EPS = 1e-5


@dataclass(frozen=True)
class StageSpec:
    depth: int
    channels: int
    heads: int
    ffn_expansion: int
    mode: str

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"stage depth must be >= 1, got {self.depth}")
        if self.channels % self.heads:
            raise ConfigError(f"channels {self.channels} not divisible by heads {self.heads}")
        if self.channels % 4:
            raise ConfigError(f"channels {self.channels} not divisible by 4")
        if self.mode not in MODES:
            raise ConfigError(f"unknown stage mode {self.mode!r}")
        if self.ffn_expansion < 1:
            raise ConfigError(f"ffn expansion must be >= 1, got {self.ffn_expansion}")


@dataclass(frozen=True)
class ModelSpec:
    stages: tuple[StageSpec, StageSpec, StageSpec, StageSpec]
    num_classes: int
    input_size: int
    in_channels: int = 3

    def validate(self) -> None:
        if len(self.stages) != 4:
            raise ConfigError(f"expected 4 stages, got {len(self.stages)}")
        for stage in self.stages:
            stage.validate()
        if self.input_size % 32:
            raise ConfigError(f"input size {self.input_size} not divisible by 32")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")

    def grid_sizes(self) -> tuple[int, int, int, int]:
        sizes = []
        size = self.input_size
        for stride in PATCH_STRIDES:
            size //= stride
            sizes.append(size)
        return tuple(sizes)  # type: ignore[return-value]


def _spec(depths, channels, heads, expansions, modes, num_classes, input_size) -> ModelSpec:
    stages = tuple(
        StageSpec(depth=d, channels=c, heads=h, ffn_expansion=e, mode=m)
        for d, c, h, e, m in zip(depths, channels, heads, expansions, modes)
    )
    return ModelSpec(stages=stages, num_classes=num_classes, input_size=input_size)  # type: ignore[arg-type]


_MAIN_MODES = ("wavelet_idwt", "wavelet_idwt", "none", "none")

PRESETS = {
    "wave-vit-s": _spec((3, 4, 6, 3), (64, 128, 320, 448), (2, 4, 10, 14), (8, 8, 4, 4), _MAIN_MODES, 1000, 224),
    "wave-vit-b": _spec((3, 4, 12, 3), (64, 128, 320, 512), (2, 4, 10, 16), (8, 8, 4, 4), _MAIN_MODES, 1000, 224),
    "wave-vit-l": _spec((3, 6, 18, 3), (96, 192, 384, 512), (3, 6, 12, 16), (8, 8, 4, 4), _MAIN_MODES, 1000, 224),
    "micro": _spec((1, 1, 2, 1), (16, 32, 48, 64), (2, 4, 6, 8), (8, 8, 4, 4), _MAIN_MODES, 10, 32),
}

# reference parameter counts (millions) the presets are compared against
REFERENCE_PARAMS_M = {"wave-vit-s": 19.8, "wave-vit-b": 33.5, "wave-vit-l": 57.5}
REFERENCE_GFLOPS = {"wave-vit-s": 4.3}


def preset_spec(
    name: str,
    mode: str | None = None,
    num_classes: int | None = None,
    input_size: int | None = None,
) -> ModelSpec:
    """Look up a preset; `mode` swaps the down-sampling stages' block variant.

    The swap applies to the stages that down-sample their keys/values in the
    preset (the first two); `mode="none"` turns down-sampling off entirely.
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown model preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    spec = PRESETS[name]
    if mode is not None:
        if mode not in MODES:
            raise ConfigError(f"unknown attention mode {mode!r}; expected one of {MODES}")
        stages = tuple(
            replace(s, mode=mode) if s.mode != "none" else s for s in spec.stages
        )
        spec = replace(spec, stages=stages)
    if num_classes is not None:
        spec = replace(spec, num_classes=num_classes)
    if input_size is not None:
        spec = replace(spec, input_size=input_size)
    spec.validate()
    return spec


class PatchEmbed:
    """Overlapping strided convolution plus channel layer norm."""

    def __init__(self, rng, c_in: int, c_out: int, stride: int, dtype):
        if stride == 4:
            kernel, pad = 7, 3
        elif stride == 2:
            kernel, pad = 3, 1
        else:
            raise ConfigError(f"patch embed stride must be 4 or 2, got {stride}")
        self.stride, self.pad = stride, pad
        self.conv_w = Tensor4(_trunc_normal(rng, (c_out, c_in, kernel, kernel), 0.02, dtype), requires_grad=True)
        self.conv_b = Tensor4(np.zeros((1, 1, 1, c_out), dtype=dtype), requires_grad=True)
        self.ln_g = Tensor4(np.ones((1, 1, 1, c_out), dtype=dtype), requires_grad=True)
        self.ln_b = Tensor4(np.zeros((1, 1, 1, c_out), dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor4) -> Tensor4:
        n, c, h, w = x.dims
        if h % self.stride or w % self.stride:
            raise ShapeError(f"patch embed: input {h}x{w} not divisible by stride {self.stride}")
        out = conv2d(x, self.conv_w, self.conv_b, stride=self.stride, padding=self.pad)
        ho, wo = h // self.stride, w // self.stride
        tokens = layer_norm(spatial_to_tokens(out), self.ln_g, self.ln_b, eps=LN_EPS)
        return tokens_to_spatial(tokens, ho, wo)

    def named(self):
        return [("conv_w", self.conv_w), ("conv_b", self.conv_b), ("ln_g", self.ln_g), ("ln_b", self.ln_b)]


class FeedForward:
    def __init__(self, rng, dim: int, expansion: int, dtype):
        hidden = dim * expansion
        self.w1 = Tensor4(_trunc_normal(rng, (1, 1, dim, hidden), 0.02, dtype), requires_grad=True)
        self.b1 = Tensor4(np.zeros((1, 1, 1, hidden), dtype=dtype), requires_grad=True)
        self.w2 = Tensor4(_trunc_normal(rng, (1, 1, hidden, dim), 0.02, dtype), requires_grad=True)
        self.b2 = Tensor4(np.zeros((1, 1, 1, dim), dtype=dtype), requires_grad=True)

    def __call__(self, tokens: Tensor4) -> Tensor4:
        return linear(gelu(linear(tokens, self.w1, self.b1)), self.w2, self.b2)

    def named(self):
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]


class WaveBlock:
    """Pre-norm residual block: attention sub-layer then feed-forward."""

    def __init__(self, rng, dim: int, heads: int, expansion: int, mode: str, dtype):
        self.mode = mode
        self.dim = dim
        self.ln1_g = Tensor4(np.ones((1, 1, 1, dim), dtype=dtype), requires_grad=True)
        self.ln1_b = Tensor4(np.zeros((1, 1, 1, dim), dtype=dtype), requires_grad=True)
        self.attn = init_attention_params(rng, dim, heads, mode, dtype)
        self.ln2_g = Tensor4(np.ones((1, 1, 1, dim), dtype=dtype), requires_grad=True)
        self.ln2_b = Tensor4(np.zeros((1, 1, 1, dim), dtype=dtype), requires_grad=True)
        self.ffn = FeedForward(rng, dim, expansion, dtype)

    def __call__(self, x: Tensor4) -> Tensor4:
        n, c, h, w = x.dims
        tokens = spatial_to_tokens(x)
        normed = layer_norm(tokens, self.ln1_g, self.ln1_b, eps=LN_EPS)
        attn_out = wavelets_block_attention(tokens_to_spatial(normed, h, w), self.attn, self.mode)
        y = add(tokens, spatial_to_tokens(attn_out))
        ffn_out = self.ffn(layer_norm(y, self.ln2_g, self.ln2_b, eps=LN_EPS))
        return tokens_to_spatial(add(y, ffn_out), h, w)

    def named(self):
        out = [("ln1_g", self.ln1_g), ("ln1_b", self.ln1_b)]
        out.extend((f"attn.{k}", v) for k, v in self.attn.named())
        out.extend([("ln2_g", self.ln2_g), ("ln2_b", self.ln2_b)])
        out.extend((f"ffn.{k}", v) for k, v in self.ffn.named())
        return out


class WaveViT:
    def __init__(self, spec: ModelSpec, seed: int, dtype=np.float32):
        spec.validate()
        self.spec = spec
        self.seed = seed
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(seed)
        self.embeds: list[PatchEmbed] = []
        self.stages: list[list[WaveBlock]] = []
        c_in = spec.in_channels
        for stage, stride in zip(spec.stages, PATCH_STRIDES):
            self.embeds.append(PatchEmbed(rng, c_in, stage.channels, stride, dtype))
            self.stages.append(
                [
                    WaveBlock(rng, stage.channels, stage.heads, stage.ffn_expansion, stage.mode, dtype)
                    for _ in range(stage.depth)
                ]
            )
            c_in = stage.channels
        last = spec.stages[-1].channels
        self.final_ln_g = Tensor4(np.ones((1, 1, 1, last), dtype=dtype), requires_grad=True)
        self.final_ln_b = Tensor4(np.zeros((1, 1, 1, last), dtype=dtype), requires_grad=True)
        self.head_w = Tensor4(_trunc_normal(rng, (1, 1, last, spec.num_classes), 0.02, dtype), requires_grad=True)
        self.head_b = Tensor4(np.zeros((1, 1, 1, spec.num_classes), dtype=dtype), requires_grad=True)

    def forward(self, images) -> Tensor4:
        x = images if isinstance(images, Tensor4) else Tensor4(np.asarray(images, dtype=self.dtype))
        n, c, h, w = x.dims
        if c != self.spec.in_channels:
            raise ShapeError(f"expected {self.spec.in_channels} input channels, got dims {x.dims}")
        if h % 32 or w % 32:
            raise ShapeError(f"input resolution {h}x{w} not divisible by 32")
        for embed, blocks in zip(self.embeds, self.stages):
            x = embed(x)
            for block in blocks:
                x = block(x)
        tokens = layer_norm(spatial_to_tokens(x), self.final_ln_g, self.final_ln_b, eps=LN_EPS)
        return linear(mean_tokens(tokens), self.head_w, self.head_b)

    __call__ = forward

    def named_params(self) -> list[tuple[str, Tensor4]]:
        out: list[tuple[str, Tensor4]] = []
        for i, (embed, blocks) in enumerate(zip(self.embeds, self.stages), start=1):
            out.extend((f"stage{i}.embed.{k}", v) for k, v in embed.named())
            for j, block in enumerate(blocks):
                out.extend((f"stage{i}.block{j}.{k}", v) for k, v in block.named())
        out.extend(
            [
                ("final_ln_g", self.final_ln_g),
                ("final_ln_b", self.final_ln_b),
                ("head_w", self.head_w),
                ("head_b", self.head_b),
            ]
        )
        return out

    def zero_grad(self) -> None:
        for _, p in self.named_params():
            p.grad = None

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_params())
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise ConfigError(f"checkpoint/model mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for name, p in params.items():
            arr = state[name]
            if tuple(arr.shape) != p.dims:
                raise ShapeError(f"parameter {name}: checkpoint dims {arr.shape} vs model dims {p.dims}")
            p.data = np.ascontiguousarray(arr.astype(p.data.dtype, copy=False))


def build_model(spec: ModelSpec, seed: int, dtype=np.float32) -> WaveViT:
    return WaveViT(spec, seed, dtype)


def forward(model: WaveViT, images) -> Tensor4:
    """Logits for a batch of images; dims (n_b, 1, 1, num_classes)."""
    return model.forward(images)


def count_params(model: WaveViT) -> int:
    return sum(p.size for _, p in model.named_params())
