"""Wall-time benchmarks: attention modes, and compiled-vs-pure kernels.

Timing reports the median over `reps` repetitions after `warmup` discarded
runs, plus min/max as the dispersion; raw samples are available for
consumers that want their own statistics. Analytic MACs accompany the
attention table so measured time can be read against counted work.
"""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .accounting import attention_score_macs
from .attention import MODES, init_attention_params, wavelets_block_attention
from .errors import ConfigError
from .tensor import Tensor4, no_grad


@dataclass
class BenchRow:
    label: str
    median_ms: float
    min_ms: float
    max_ms: float
    samples_ms: list[float] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def _time(fn, warmup: int, reps: int) -> tuple[float, float, float, list[float]]:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        started = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - started) * 1e3)
    return statistics.median(samples), min(samples), max(samples), samples


def bench_attention(
    h: int = 56,
    w: int = 56,
    d: int = 64,
    heads: int = 2,
    warmup: int = 2,
    reps: int = 5,
    seed: int = 0,
    batch: int = 1,
) -> list[BenchRow]:
    """Forward wall-time of each attention mode at one (H, W, D)."""
    if warmup < 1 or reps < 1:
        raise ConfigError(f"bench needs warmup >= 1 and reps >= 1, got {warmup}/{reps}")
    rng = np.random.default_rng(seed)
    x = Tensor4(rng.standard_normal((batch, d, h, w)).astype(np.float32))
    n_tokens = h * w
    rows = []
    for mode in MODES:
        params = init_attention_params(np.random.default_rng(seed + 1), d, heads, mode, dtype=np.float32)

        def run(mode=mode, params=params):
            with no_grad():
                wavelets_block_attention(x, params, mode)

        med, lo, hi, samples = _time(run, warmup, reps)
        rows.append(
            BenchRow(
                label=mode,
                median_ms=med,
                min_ms=lo,
                max_ms=hi,
                samples_ms=samples,
                extra={
                    "score_macs": attention_score_macs(n_tokens, d, mode),
                    "backend": kernels.active_backend(),
                },
            )
        )
    return rows


def bench_kernels(
    h: int = 56,
    w: int = 56,
    d: int = 64,
    warmup: int = 2,
    reps: int = 5,
    seed: int = 0,
    batch: int = 1,
) -> list[BenchRow]:
    """Butterfly kernels timed under every backend, plus the shared convolution."""
    if warmup < 1 or reps < 1:
        raise ConfigError(f"bench needs warmup >= 1 and reps >= 1, got {warmup}/{reps}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((batch, d, h, w)).astype(np.float32)
    conv_w = rng.standard_normal((d, d, 3, 3)).astype(np.float32)
    dy = rng.standard_normal((batch, d, h, w)).astype(np.float32)
    rows = []
    for backend in sorted(kernels.available_backends()):
        with kernels.use_backend(backend):
            bands = kernels.dwt2d(x)
            cases = {
                "dwt2d": lambda: kernels.dwt2d(x),
                "idwt2d": lambda: kernels.idwt2d(*bands),
            }
            for name, fn in cases.items():
                med, lo, hi, samples = _time(fn, warmup, reps)
                rows.append(
                    BenchRow(
                        label=f"{name}[{backend}]",
                        median_ms=med,
                        min_ms=lo,
                        max_ms=hi,
                        samples_ms=samples,
                        extra={"kernel": name, "backend": backend},
                    )
                )
    shared = {
        "conv2d_forward": lambda: kernels.conv2d_forward(x, conv_w, None, 1, 1),
        "conv2d_grad_input": lambda: kernels.conv2d_grad_input(dy, conv_w, 1, 1, h, w),
        "conv2d_grad_weight": lambda: kernels.conv2d_grad_weight(x, dy, 1, 1, 3, 3),
    }
    for name, fn in shared.items():
        med, lo, hi, samples = _time(fn, warmup, reps)
        rows.append(
            BenchRow(
                label=f"{name}[blas]",
                median_ms=med,
                min_ms=lo,
                max_ms=hi,
                samples_ms=samples,
                extra={"kernel": name, "backend": "shared im2col+BLAS"},
            )
        )
    return rows


def format_rows(rows: list[BenchRow], raw: bool = False) -> list[str]:
    label_width = max(len(r.label) for r in rows)
    lines = [f"{'case'.ljust(label_width)}  median_ms      min_ms      max_ms  notes"]
    for r in rows:
        notes = " ".join(f"{k}={v}" for k, v in r.extra.items())
        lines.append(
            f"{r.label.ljust(label_width)}  {r.median_ms:9.3f}  {r.min_ms:10.3f}  {r.max_ms:10.3f}  {notes}"
        )
        if raw:
            lines.append(f"{''.ljust(label_width)}  raw_ms: {', '.join(f'{s:.3f}' for s in r.samples_ms)}")
    return lines
