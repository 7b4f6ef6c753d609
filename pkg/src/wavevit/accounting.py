"""Analytic multiply-accumulate (MAC) accounting for the backbone.

Counted per layer: matmuls (n * d_in * d_out), convolutions
(positions * k^2 * c_in * c_out), and the attention score and weighted-sum
products, each n * m * d in total across heads. Normalizations, activations,
biases and the wavelet butterflies are excluded; together they are below
0.1% of the total and no common convention counts them.

GFLOPs are reported under both prevailing conventions: MACs/1e9 and
2*MACs/1e9.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .backbone import PATCH_STRIDES, ModelSpec


def attention_score_macs(n_tokens: int, dim: int, mode: str) -> int:
    """MACs of one score product Q K^T (all heads); the weighted sum costs the same."""
    m = n_tokens if mode == "none" else n_tokens // 4
    return n_tokens * m * dim


@dataclass
class StageMacs:
    embed: int = 0
    qkv: int = 0
    channel_reduce: int = 0
    subband_conv: int = 0
    reduce_conv: int = 0
    scores: int = 0
    weighted_sum: int = 0
    out_proj: int = 0
    ffn: int = 0

    @property
    def total(self) -> int:
        return (
            self.embed
            + self.qkv
            + self.channel_reduce
            + self.subband_conv
            + self.reduce_conv
            + self.scores
            + self.weighted_sum
            + self.out_proj
            + self.ffn
        )


@dataclass
class MacReport:
    input_size: int
    stages: list[StageMacs] = field(default_factory=list)
    head: int = 0

    @property
    def total(self) -> int:
        return sum(s.total for s in self.stages) + self.head

    @property
    def score_macs(self) -> int:
        return sum(s.scores for s in self.stages)

    @property
    def gflops_macs(self) -> float:
        return self.total / 1e9

    @property
    def gflops_2macs(self) -> float:
        return 2 * self.total / 1e9


def count_macs(spec: ModelSpec, input_size: int | None = None) -> MacReport:
    """Analytic MAC count of one forward pass at batch size 1."""
    size = spec.input_size if input_size is None else input_size
    report = MacReport(input_size=size)
    grid = size
    c_in = spec.in_channels
    for stage, stride in zip(spec.stages, PATCH_STRIDES):
        grid //= stride
        d = stage.channels
        n = grid * grid
        kernel = 7 if stride == 4 else 3
        s = StageMacs(embed=n * kernel * kernel * c_in * d)
        m = n if stage.mode == "none" else n // 4
        per_block_qkv = n * d * d + 2 * m * d * d
        o_in = d + d // 4 if stage.mode == "wavelet_idwt" else d
        for _ in range(stage.depth):
            s.qkv += per_block_qkv
            if stage.mode in ("wavelet", "wavelet_idwt"):
                s.channel_reduce += n * d * (d // 4)
                s.subband_conv += m * 9 * d * d
            if stage.mode == "conv":
                s.reduce_conv += m * 4 * d * d
            s.scores += attention_score_macs(n, d, stage.mode)
            s.weighted_sum += attention_score_macs(n, d, stage.mode)
            s.out_proj += n * o_in * d
            s.ffn += 2 * n * d * (stage.ffn_expansion * d)
        report.stages.append(s)
        c_in = d
    report.head = spec.stages[-1].channels * spec.num_classes  # one pooled token
    return report
