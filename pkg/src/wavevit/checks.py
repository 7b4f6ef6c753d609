"""Named verification suites behind the `check` and `gradcheck` commands.

Each check returns (ok, detail); suites are plain lists so the CLI can print
one line per check and exit nonzero if any fails. Tests reuse these to keep
the command surface and the pytest suite asserting the same facts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .accounting import attention_score_macs
from .attention import init_attention_params, multi_head_attention, wavelet_kv, wavelets_block_attention
from .backbone import PRESETS, REFERENCE_PARAMS_M, build_model, count_params, preset_spec
from .gradcheck import grad_check
from .tensor import (
    Tensor4,
    avg_pool2d,
    backward,
    conv2d,
    cross_entropy_logits,
    linear,
    matmul,
    softmax_lastdim,
    spatial_to_tokens,
    sum_all,
    tokens_to_spatial,
)
from .wavelet import dwt2d_haar, idwt2d_haar, subbands_pack, subbands_unpack


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def _rand(seed, dims, dtype=np.float64):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=dims).astype(dtype)


def _max_rel(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-30)
    return float((np.abs(a - b) / denom).max()) if a.size else 0.0


# ---------------------------------------------------------------------------
# wavelet suite


def check_reconstruction(seeds: int = 50) -> CheckResult:
    shapes = [(1, 1, 2, 2), (2, 3, 4, 6), (1, 4, 8, 8), (3, 2, 6, 10), (1, 1, 16, 12), (2, 2, 32, 32)]
    worst = 0.0
    for seed in range(seeds):
        x = _rand(seed, shapes[seed % len(shapes)])
        back = idwt2d_haar(dwt2d_haar(Tensor4(x)))
        worst = max(worst, _max_rel(back.data, x))
    ok = worst < 1e-12
    return CheckResult("perfect-reconstruction", ok, f"max rel err {worst:.3e} over {seeds} seeds (tol 1e-12)")


def check_energy(seeds: int = 50) -> CheckResult:
    worst = 0.0
    for seed in range(seeds):
        x = _rand(seed + 1000, (2, 3, 8, 6))
        bands = dwt2d_haar(Tensor4(x))
        total = sum(float((b.data**2).sum()) for b in bands)
        ref = float((x**2).sum())
        worst = max(worst, abs(total - ref) / ref)
    ok = worst < 1e-10
    return CheckResult("energy-preservation", ok, f"max rel err {worst:.3e} over {seeds} seeds (tol 1e-10)")


def check_linearity(seeds: int = 20) -> CheckResult:
    worst = 0.0
    for seed in range(seeds):
        x, y = _rand(seed + 2000, (1, 2, 4, 4)), _rand(seed + 3000, (1, 2, 4, 4))
        combo = dwt2d_haar(Tensor4(1.3 * x - 0.7 * y))
        bx, by = dwt2d_haar(Tensor4(x)), dwt2d_haar(Tensor4(y))
        for cb, a, b in zip(combo, bx, by):
            worst = max(worst, float(np.abs(cb.data - (1.3 * a.data - 0.7 * b.data)).max()))
    ok = worst < 1e-12
    return CheckResult("linearity", ok, f"max abs err {worst:.3e} (tol 1e-12)")


def check_avgpool_subsumption(seeds: int = 10) -> CheckResult:
    worst = 0.0
    for seed in range(seeds):
        coarse = _rand(seed + 4000, (1, 3, 4, 4))
        x = np.repeat(np.repeat(coarse, 2, axis=2), 2, axis=3)
        bands = dwt2d_haar(Tensor4(x))
        pooled = avg_pool2d(Tensor4(x), 2, 2)
        worst = max(worst, float(np.abs(bands.ll.data - 2 * pooled.data).max()))
        for band in (bands.lh, bands.hl, bands.hh):
            worst = max(worst, float(np.abs(band.data).max()))
    ok = worst < 1e-12
    return CheckResult("avgpool-subsumption", ok, f"max abs err {worst:.3e} on block-constant inputs (tol 1e-12)")


def check_pack_roundtrip(seeds: int = 10) -> CheckResult:
    for seed in range(seeds):
        bands = dwt2d_haar(Tensor4(_rand(seed + 5000, (2, 3, 4, 4))))
        back = subbands_unpack(subbands_pack(bands))
        for a, b in zip(bands, back):
            if not np.array_equal(a.data, b.data):
                return CheckResult("pack-unpack-roundtrip", False, f"seed {seed}: bytes differ")
    return CheckResult("pack-unpack-roundtrip", True, f"bit-exact over {seeds} seeds")


def check_dwt_transpose(seeds: int = 5) -> CheckResult:
    worst = 0.0
    for seed in range(seeds):
        x = Tensor4(_rand(seed + 6000, (1, 2, 4, 4)), requires_grad=True)
        bands = dwt2d_haar(x)
        weights = [Tensor4(_rand(seed + 6100 + i, (1, 2, 2, 1))) for i in range(4)]
        loss = sum_all(matmul(bands.ll, weights[0]))
        from .tensor import add

        for band, w in zip((bands.lh, bands.hl, bands.hh), weights[1:]):
            loss = add(loss, sum_all(matmul(band, w)))
        backward(loss)
        ones = np.ones((1, 2, 2, 1))
        upstream = [ones @ w.data.swapaxes(-1, -2) for w in weights]
        worst = max(worst, float(np.abs(x.grad - kernels.idwt2d(*upstream)).max()))
    ok = worst < 1e-12
    return CheckResult("dwt-backward-is-idwt", ok, f"max abs err {worst:.3e} (tol 1e-12)")


# ---------------------------------------------------------------------------
# tensor suite


def check_oracle_agreement() -> CheckResult:
    a, b = _rand(1, (1, 1, 7, 5)), _rand(2, (1, 1, 5, 3))
    got = matmul(Tensor4(a), Tensor4(b)).data[0, 0]
    want = np.array([[sum(a[0, 0, i, t] * b[0, 0, t, j] for t in range(5)) for j in range(3)] for i in range(7)])
    err = _max_rel(got, want)
    ok = err < 1e-12
    return CheckResult("matmul-loop-oracle", ok, f"max rel err {err:.3e} (tol 1e-12)")


def check_softmax_rows() -> CheckResult:
    x = _rand(3, (2, 3, 4, 7), dtype=np.float64) * 5
    y = softmax_lastdim(Tensor4(x))
    err = float(np.abs(y.data.sum(axis=-1) - 1.0).max())
    shift = softmax_lastdim(Tensor4(x + 2.5))
    err = max(err, float(np.abs(y.data - shift.data).max()))
    ok = err < 1e-12
    return CheckResult("softmax-rows-and-shift", ok, f"max err {err:.3e} (tol 1e-12)")


def check_movement_inverses() -> CheckResult:
    x = _rand(4, (2, 8, 4, 6))
    t = Tensor4(x)
    round1 = tokens_to_spatial(spatial_to_tokens(t), 4, 6).data
    from .tensor import concat, split

    round2 = concat(split(t, [3, 5], axis=1), axis=1).data
    ok = np.array_equal(round1, x) and np.array_equal(round2, x)
    return CheckResult("movement-inverses", ok, "bit-exact" if ok else "roundtrip bytes differ")


def check_determinism() -> CheckResult:
    def run():
        x = Tensor4(_rand(5, (2, 3, 8, 8)), requires_grad=True)
        w = Tensor4(_rand(6, (4, 3, 3, 3)))
        loss = sum_all(conv2d(x, w, stride=1, padding=1))
        backward(loss)
        return loss.item(), x.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    ok = l1 == l2 and np.array_equal(g1, g2)
    return CheckResult("determinism", ok, "repeat runs bit-identical" if ok else "runs differ")


# ---------------------------------------------------------------------------
# attention suite


def check_attention_rows(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for mode in ("none", "avgpool", "conv", "wavelet", "wavelet_idwt"):
        params = init_attention_params(rng, 8, 2, mode, dtype=np.float64)
        x = Tensor4(_rand(seed + 7000, (1, 8, 4, 4)))
        if mode in ("wavelet", "wavelet_idwt"):
            kv_src, _ = wavelet_kv(x, params)
        else:
            from .attention import downsample_kv_source

            kv_src = downsample_kv_source(x, params, mode)
        tokens = spatial_to_tokens(x)
        kv_tokens = spatial_to_tokens(kv_src)
        q = matmul(tokens, params.w_q)
        k = matmul(kv_tokens, params.w_k)
        from .tensor import scale, split_heads, transpose_last2

        scores = scale(
            matmul(split_heads(q, 2), transpose_last2(split_heads(k, 2))), 1.0 / math.sqrt(4)
        )
        weights = softmax_lastdim(scores)
        worst = max(worst, float(np.abs(weights.data.sum(axis=-1) - 1.0).max()))
    ok = worst < 1e-12
    return CheckResult("attention-row-sums", ok, f"max |rowsum-1| {worst:.3e} across modes (tol 1e-12)")


def check_key_order_invariance(seed: int = 0) -> CheckResult:
    q = Tensor4(_rand(seed + 7100, (1, 1, 5, 8)))
    k = _rand(seed + 7200, (1, 1, 6, 8))
    v = _rand(seed + 7300, (1, 1, 6, 8))
    out = multi_head_attention(q, Tensor4(k), Tensor4(v), 2)
    perm = np.random.default_rng(seed).permutation(6)
    out_p = multi_head_attention(q, Tensor4(k[:, :, perm]), Tensor4(v[:, :, perm]), 2)
    err = float(np.abs(out.data - out_p.data).max())
    ok = err < 1e-12
    return CheckResult("key-order-invariance", ok, f"max abs err {err:.3e} (tol 1e-12)")


def check_query_equivariance(seed: int = 0) -> CheckResult:
    q = _rand(seed + 7400, (1, 1, 5, 8))
    k = Tensor4(_rand(seed + 7500, (1, 1, 6, 8)))
    v = Tensor4(_rand(seed + 7600, (1, 1, 6, 8)))
    perm = np.random.default_rng(seed + 1).permutation(5)
    out = multi_head_attention(Tensor4(q), k, v, 2)
    out_p = multi_head_attention(Tensor4(q[:, :, perm]), k, v, 2)
    err = float(np.abs(out.data[:, :, perm] - out_p.data).max())
    ok = err < 1e-12
    return CheckResult("query-permutation-equivariance", ok, f"max abs err {err:.3e} (tol 1e-12)")


def check_score_mac_factor() -> CheckResult:
    n, d = 56 * 56, 64
    full = attention_score_macs(n, d, "none")
    ratios = {mode: full / attention_score_macs(n, d, mode) for mode in ("avgpool", "conv", "wavelet", "wavelet_idwt")}
    ok = all(r == 4.0 for r in ratios.values())
    return CheckResult("score-mac-factor", ok, f"none:mode ratios {sorted(set(ratios.values()))} (expected exactly 4.0)")


# ---------------------------------------------------------------------------
# backbone suite


def check_stage_resolutions() -> CheckResult:
    ok = True
    details = []
    for name in ("wave-vit-s", "wave-vit-b", "wave-vit-l"):
        grids = PRESETS[name].grid_sizes()
        ok &= grids == (56, 28, 14, 7)
        details.append(f"{name}:{grids}")
    micro = PRESETS["micro"].grid_sizes()
    ok &= micro == (8, 4, 2, 1)
    details.append(f"micro:{micro}")
    return CheckResult("stage-resolutions", bool(ok), "; ".join(details))


def check_param_bands() -> CheckResult:
    lines = []
    ok = True
    counts = {}
    for name, ref_m in REFERENCE_PARAMS_M.items():
        n = count_params(build_model(PRESETS[name], seed=0))
        counts[name] = n
        ratio = n / (ref_m * 1e6)
        ok &= 0.85 <= ratio <= 1.15
        lines.append(f"{name}={n:,} ({ratio - 1:+.1%} vs {ref_m}M)")
    ok &= counts["wave-vit-s"] < counts["wave-vit-b"] < counts["wave-vit-l"]
    return CheckResult("parameter-bands", bool(ok), "; ".join(lines))


def check_checkpoint_roundtrip() -> CheckResult:
    import os
    import tempfile

    from .io import load_checkpoint, save_checkpoint

    model = build_model(preset_spec("micro"), seed=11)
    x = _rand(7, (2, 3, 32, 32), dtype=np.float32)
    before = model.forward(x).data.copy()
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.wvck")
        save_checkpoint(path, model.named_params())
        fresh = build_model(preset_spec("micro"), seed=99)
        fresh.load_state(load_checkpoint(path))
    after = fresh.forward(x).data
    ok = np.array_equal(before, after)
    return CheckResult("checkpoint-roundtrip", ok, "logits bit-identical" if ok else "logits differ")


def check_grad_coverage() -> CheckResult:
    # 64px input keeps the last grid at 2x2; at 1x1 a single-key attention
    # output is independent of Q/K, so stage-4 w_q/w_k could never receive
    # gradient and the check would flag a mathematical fact, not a bug
    from dataclasses import replace

    model = build_model(replace(preset_spec("micro"), input_size=64), seed=5, dtype=np.float64)
    rng = np.random.default_rng(2)
    touched: dict[str, bool] = {name: False for name, _ in model.named_params()}
    for batch in range(3):
        model.zero_grad()
        images = rng.uniform(-1.0, 1.0, size=(4, 3, 64, 64))
        labels = rng.integers(0, model.spec.num_classes, size=4)
        loss = cross_entropy_logits(model.forward(images), labels)
        backward(loss)
        for name, p in model.named_params():
            if p.grad is not None and np.any(p.grad != 0):
                touched[name] = True
    dead = sorted(name for name, hit in touched.items() if not hit)
    ok = not dead
    return CheckResult("gradient-coverage", ok, "all parameters receive gradient" if ok else f"dead: {dead[:5]}")


# ---------------------------------------------------------------------------
# gradcheck suites


def gradcheck_ops(seed: int = 0) -> list[CheckResult]:
    from .tensor import gelu, layer_norm

    results = []

    def run(name, fn, inputs, tol):
        report = grad_check(fn, inputs, tolerance=tol, max_coords_per_input=60, subset_seed=seed)
        results.append(CheckResult(f"gradcheck-{name}", report.passed, str(report)))

    right = Tensor4(_rand(seed + 1, (1, 1, 4, 1)))

    def run_step(name, fn, inputs, tol, step):
        report = grad_check(fn, inputs, step=step, tolerance=tol, max_coords_per_input=60, subset_seed=seed)
        results.append(CheckResult(f"gradcheck-{name}", report.passed, str(report)))

    # affine map: central differences have zero truncation error, so a large
    # step drives the roundoff term far below the 1e-9 bound
    run_step("linear", lambda x, w, b: sum_all(linear(x, w, b)),
             [Tensor4(_rand(seed + 2, (1, 1, 5, 3))), Tensor4(_rand(seed + 3, (1, 1, 3, 4))), Tensor4(_rand(seed + 4, (1, 1, 1, 4)))],
             1e-9, 1e-2)
    run("softmax-matmul", lambda a, b: sum_all(matmul(softmax_lastdim(matmul(a, b)), right)),
        [Tensor4(_rand(seed + 5, (1, 1, 4, 5))), Tensor4(_rand(seed + 6, (1, 1, 5, 4)))],
        1e-6)
    run("conv2d", lambda x, w, b: sum_all(matmul(conv2d(x, w, b, stride=1, padding=1), Tensor4(_rand(seed + 7, (1, 3, 4, 1))))),
        [Tensor4(_rand(seed + 8, (1, 2, 4, 4))), Tensor4(_rand(seed + 9, (3, 2, 3, 3))), Tensor4(_rand(seed + 10, (1, 1, 1, 3)))],
        1e-6)
    run("layer-norm", lambda x, g, b: sum_all(matmul(layer_norm(x, g, b, eps=1e-5), Tensor4(_rand(seed + 11, (1, 1, 6, 1))))),
        [Tensor4(_rand(seed + 12, (1, 1, 4, 6))), Tensor4(_rand(seed + 13, (1, 1, 1, 6))), Tensor4(_rand(seed + 14, (1, 1, 1, 6)))],
        1e-6)
    run("gelu", lambda x: sum_all(gelu(x)), [Tensor4(_rand(seed + 15, (1, 2, 3, 4)))], 1e-7)

    def dwt_chain(x, w):
        packed = subbands_pack(dwt2d_haar(x))
        mixed = conv2d(packed, w, stride=1, padding=1)
        recon = idwt2d_haar(subbands_unpack(mixed))
        left = Tensor4(_rand(seed + 16, (1, 4, 1, 8)))
        right2 = Tensor4(_rand(seed + 17, (1, 4, 8, 1)))
        return sum_all(matmul(left, matmul(recon, right2)))

    # linear in x and in w separately: truncation-free, so a larger step
    # keeps roundoff noise orders below the bound
    run_step("dwt-conv-idwt", dwt_chain,
             [Tensor4(_rand(seed + 18, (1, 4, 8, 8))), Tensor4(_rand(seed + 19, (16, 16, 3, 3)) * 0.3)],
             1e-6, 1e-3)
    return results


def random_block_params(seed: int, dim: int, heads: int, mode: str) -> "AttentionParams":
    """O(1)-scale random parameters for finite-difference checks.

    Production init (std 0.02) would make some gradient magnitudes ~1e-5 of
    the loss scale; central differences at step 1e-6 cannot resolve those to
    1e-5 relative, so checks draw every leaf from [-0.5, 0.5].
    """
    from .attention import AttentionParams

    o_in = dim + dim // 4 if mode == "wavelet_idwt" else dim
    p = AttentionParams(
        dim=dim,
        n_heads=heads,
        w_q=Tensor4(_rand(seed + 1, (1, 1, dim, dim)) * 0.5),
        w_k=Tensor4(_rand(seed + 2, (1, 1, dim, dim)) * 0.5),
        w_v=Tensor4(_rand(seed + 3, (1, 1, dim, dim)) * 0.5),
        w_o=Tensor4(_rand(seed + 4, (1, 1, o_in, dim)) * 0.5),
        b_o=Tensor4(_rand(seed + 5, (1, 1, 1, dim)) * 0.5),
    )
    if mode in ("wavelet", "wavelet_idwt"):
        p.w_d = Tensor4(_rand(seed + 6, (1, 1, dim, dim // 4)) * 0.5)
        p.conv_w = Tensor4(_rand(seed + 7, (dim, dim, 3, 3)) * 0.5)
        p.conv_b = Tensor4(_rand(seed + 8, (1, 1, 1, dim)) * 0.5)
    if mode == "conv":
        p.ds_conv_w = Tensor4(_rand(seed + 7, (dim, dim, 2, 2)) * 0.5)
        p.ds_conv_b = Tensor4(_rand(seed + 8, (1, 1, 1, dim)) * 0.5)
    return p


def gradcheck_block(seed: int = 0, n_seeds: int = 10) -> list[CheckResult]:
    """End-to-end wavelet-attention block gradient check at micro dims."""
    from .attention import AttentionParams

    results = []
    worst = 0.0
    for s in range(seed, seed + n_seeds):
        params = random_block_params(s * 100, 8, 2, "wavelet_idwt")
        x = Tensor4(_rand(s + 8000, (1, 8, 8, 8)))
        left = Tensor4(_rand(s + 8100, (1, 8, 1, 8)))
        right = Tensor4(_rand(s + 8200, (1, 8, 8, 1)))

        def block_loss(x_, wq, wk, wv, wd, cw, cb, wo, bo):
            p = AttentionParams(
                dim=8, n_heads=2, w_q=wq, w_k=wk, w_v=wv, w_o=wo, b_o=bo,
                w_d=wd, conv_w=cw, conv_b=cb,
            )
            out = wavelets_block_attention(x_, p, "wavelet_idwt")
            return sum_all(matmul(left, matmul(out, right)))

        inputs = [x, params.w_q, params.w_k, params.w_v, params.w_d, params.conv_w, params.conv_b, params.w_o, params.b_o]
        report = grad_check(block_loss, inputs, tolerance=1e-5, max_coords_per_input=24, subset_seed=s)
        worst = max(worst, report.max_rel_error)
        if not report.passed:
            results.append(CheckResult(f"gradcheck-block-seed{s}", False, str(report)))
    if not results:
        results.append(
            CheckResult("gradcheck-wavelet-block", True, f"max rel err {worst:.3e} over {n_seeds} seeds (tol 1e-5)")
        )
    return results


# ---------------------------------------------------------------------------
# suite registry


SUITES: dict[str, Callable[[], list[CheckResult]]] = {
    "wavelet": lambda: [
        check_reconstruction(),
        check_energy(),
        check_linearity(),
        check_avgpool_subsumption(),
        check_pack_roundtrip(),
        check_dwt_transpose(),
    ],
    "tensor": lambda: [
        check_oracle_agreement(),
        check_softmax_rows(),
        check_movement_inverses(),
        check_determinism(),
    ],
    "attention": lambda: [
        check_attention_rows(),
        check_key_order_invariance(),
        check_query_equivariance(),
        check_score_mac_factor(),
    ],
    "backbone": lambda: [
        check_stage_resolutions(),
        check_param_bands(),
        check_checkpoint_roundtrip(),
        check_grad_coverage(),
    ],
}


def run_suite(name: str) -> list[CheckResult]:
    if name == "all":
        out = []
        for suite in SUITES.values():
            out.extend(suite())
        return out
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
