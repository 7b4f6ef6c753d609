"""Command-line entry point.

Exit codes: 0 when the command (and every check it ran) succeeded, 1 when a
check failed or an input file/config was unusable, 2 for usage errors.
Every command is deterministic given --seed; omitting it uses the printed
default 0. No environment variables are consulted.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import kernels
from .accounting import attention_score_macs, count_macs
from .backbone import (
    PRESETS,
    REFERENCE_GFLOPS,
    REFERENCE_PARAMS_M,
    build_model,
    count_params,
    preset_spec,
)
from .bench import bench_attention, bench_kernels, format_rows
from .checks import gradcheck_block, gradcheck_ops, run_suite
from .errors import ConfigError, ContractError, FormatError, ShapeError
from .harness import TrainConfig, evaluate, gen_dataset, train
from .io import (
    load_checkpoint,
    parse_kv_text,
    parse_model_config,
    read_wt4d,
    save_checkpoint,
    serialize_model_config,
    write_wt4d,
)
from .tensor import Tensor4
from .wavelet import dwt2d_haar, idwt2d_haar, subbands_pack, subbands_unpack

DATASET_SAMPLES = 2000


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavevit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--model", choices=sorted(PRESETS), help="named preset")
        p.add_argument("--config", help="model config file (key = value lines)")
        p.add_argument(
            "--mode",
            choices=["none", "avgpool", "conv", "wavelet", "wavelet_idwt"],
            help="override the down-sampling stages' attention mode",
        )

    p = sub.add_parser("check", help="run a verification suite")
    p.add_argument("--suite", default="all", choices=["wavelet", "tensor", "attention", "backbone", "all"])

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--suite", default="all", choices=["ops", "block", "all"])
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("dwt", help="wavelet-decompose a WT4D tensor (packed subbands out)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = sub.add_parser("idwt", help="reconstruct a WT4D tensor from packed subbands")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = sub.add_parser("params", help="parameter count of a model")
    add_model_flags(p)

    p = sub.add_parser("flops", help="analytic MAC / GFLOP accounting")
    add_model_flags(p)

    p = sub.add_parser("bench", help="attention-mode and kernel-backend timings")
    p.add_argument("--config", help="bench config file (h, w, d, heads, warmup, reps, batch)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw", action="store_true", help="also print raw samples")

    p = sub.add_parser("train", help="train on the synthetic frequency-texture dataset")
    add_model_flags(p)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--wd", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="output", default="wavevit-run", help="output directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the synthetic dataset")
    add_model_flags(p)
    p.add_argument("--in", dest="input", required=True, help="WVCK checkpoint")
    p.add_argument("--seed", type=int, default=0, help="same meaning as in train")

    return parser


def _resolve_spec(args, default_model="micro"):
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                text = f.read()
        except FileNotFoundError:
            raise FormatError(f"{args.config}: file not found") from None
        spec = parse_model_config(text, where=args.config)
        if args.mode:
            from dataclasses import replace

            spec = replace(
                spec, stages=tuple(replace(s, mode=args.mode) if s.mode != "none" else s for s in spec.stages)
            )
            spec.validate()
        return spec, args.config
    name = args.model or default_model
    return preset_spec(name, mode=args.mode), name


def _print_results(results) -> int:
    ok = True
    for r in results:
        print(r.line())
        ok &= r.ok
    print(f"{sum(r.ok for r in results)}/{len(results)} checks passed")
    return 0 if ok else 1


def _cmd_check(args) -> int:
    return _print_results(run_suite(args.suite))


def _cmd_gradcheck(args) -> int:
    print(f"seed = {args.seed}" + (" (default)" if args.seed == 0 else ""))
    results = []
    if args.suite in ("ops", "all"):
        results.extend(gradcheck_ops(args.seed))
    if args.suite in ("block", "all"):
        results.extend(gradcheck_block(args.seed))
    return _print_results(results)


def _cmd_dwt(args) -> int:
    arr = read_wt4d(args.input)
    n, c, h, w = arr.shape
    bands = dwt2d_haar(Tensor4(arr))
    write_wt4d(args.output, subbands_pack(bands))
    print(f"dwt: {args.input} {arr.shape} -> {args.output} ({n}, {4 * c}, {h // 2}, {w // 2})")
    return 0


def _cmd_idwt(args) -> int:
    arr = read_wt4d(args.input)
    n, c, h, w = arr.shape
    if c % 4:
        raise FormatError(f"{args.input}: packed subbands need channels divisible by 4, got {c}")
    out = idwt2d_haar(subbands_unpack(Tensor4(arr)))
    write_wt4d(args.output, out)
    print(f"idwt: {args.input} {arr.shape} -> {args.output} ({n}, {c // 4}, {2 * h}, {2 * w})")
    return 0


def _cmd_params(args) -> int:
    spec, name = _resolve_spec(args, default_model="wave-vit-s")
    model = build_model(spec, seed=0)
    n = count_params(model)
    print(f"model = {name}")
    for line in serialize_model_config(spec).splitlines():
        print(f"  {line}")
    print(f"parameters = {n:,}")
    if args.model in REFERENCE_PARAMS_M and args.mode in (None, "wavelet_idwt"):
        ref = REFERENCE_PARAMS_M[args.model] * 1e6
        print(f"reference = {ref / 1e6:.1f}M, ratio = {n / ref:.4f} ({n / ref - 1:+.2%})")
    return 0


def _cmd_flops(args) -> int:
    spec, name = _resolve_spec(args, default_model="wave-vit-s")
    report = count_macs(spec)
    print(f"model = {name} at {report.input_size}x{report.input_size}")
    print(f"macs = {report.total:,}")
    print(f"gflops (1 mac = 1 flop) = {report.gflops_macs:.4f}")
    print(f"gflops (1 mac = 2 flops) = {report.gflops_2macs:.4f}")
    if args.model in REFERENCE_GFLOPS and args.mode in (None, "wavelet_idwt"):
        ref = REFERENCE_GFLOPS[args.model]
        print(f"reference = {ref} GF, ratio (mac convention) = {report.gflops_macs / ref:.4f}")
    n_full = (spec.input_size // 4) ** 2
    d1 = spec.stages[0].channels
    ratio = attention_score_macs(n_full, d1, "none") / attention_score_macs(n_full, d1, "wavelet")
    print(f"stage-1 score-mac ratio none:wavelet = {ratio} (reduction factor r^2 with r=2)")
    for i, s in enumerate(report.stages, start=1):
        print(
            f"stage{i}: total={s.total:,} embed={s.embed:,} qkv={s.qkv:,} scores={s.scores:,} "
            f"weighted={s.weighted_sum:,} ffn={s.ffn:,}"
        )
    print(f"head: {report.head:,}")
    return 0


_BENCH_KEYS = {"h", "w", "d", "heads", "warmup", "reps", "batch"}


def _cmd_bench(args, parser) -> int:
    cfg = {"h": 56, "w": 56, "d": 64, "heads": 2, "warmup": 2, "reps": 5, "batch": 1}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                text = f.read()
        except FileNotFoundError:
            raise FormatError(f"{args.config}: file not found") from None
        for key, value in parse_kv_text(text, _BENCH_KEYS, where=args.config).items():
            try:
                cfg[key] = int(value)
            except ValueError:
                raise FormatError(f"{args.config}: {key} must be an integer, got {value!r}") from None
    if cfg["reps"] < 1 or cfg["warmup"] < 1:
        parser.error(f"bench needs reps >= 1 and warmup >= 1, got reps={cfg['reps']} warmup={cfg['warmup']}")
    print(f"seed = {args.seed}" + (" (default)" if args.seed == 0 else ""))
    print(f"grid = {cfg['h']}x{cfg['w']}, dim = {cfg['d']}, heads = {cfg['heads']}, batch = {cfg['batch']}")
    print(f"active kernel backend = {kernels.active_backend()}")
    n_tokens = cfg["h"] * cfg["w"]
    full = attention_score_macs(n_tokens, cfg["d"], "none")
    reduced = attention_score_macs(n_tokens, cfg["d"], "wavelet")
    print(f"analytic score-mac ratio none:wavelet = {full / reduced}")
    print()
    print("attention modes (forward):")
    rows = bench_attention(
        cfg["h"], cfg["w"], cfg["d"], cfg["heads"], cfg["warmup"], cfg["reps"], args.seed, cfg["batch"]
    )
    for line in format_rows(rows, raw=args.raw):
        print(f"  {line}")
    print()
    print("hot kernels per backend:")
    rows = bench_kernels(cfg["h"], cfg["w"], cfg["d"], cfg["warmup"], cfg["reps"], args.seed, cfg["batch"])
    for line in format_rows(rows, raw=args.raw):
        print(f"  {line}")
    return 0


def _cmd_train(args) -> int:
    spec, name = _resolve_spec(args)
    if spec.input_size != 32:
        raise ConfigError(
            f"train uses the 32x32 synthetic dataset; model input_size is {spec.input_size} (use micro or a config with input_size = 32)"
        )
    if spec.num_classes != 10:
        raise ConfigError(f"the synthetic dataset has 10 classes; model num_classes is {spec.num_classes}")
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch, lr=args.lr, weight_decay=args.wd, seed=args.seed
    )
    cfg.validate()
    print(f"seed = {args.seed}" + (" (default)" if args.seed == 0 else ""))
    print(f"model = {name} (seed {args.seed}), dataset seed = {args.seed + 1}, backend = {kernels.active_backend()}")
    model = build_model(spec, seed=args.seed)
    dataset = gen_dataset(seed=args.seed + 1, n_samples=DATASET_SAMPLES)
    history = train(model, dataset, cfg)
    os.makedirs(args.output, exist_ok=True)
    report_path = os.path.join(args.output, "train_report.txt")
    lines = [f"model = {name}", f"model seed = {args.seed}", f"dataset seed = {args.seed + 1}"]
    lines += history.report_lines(kernels.active_backend())
    with open(report_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    ckpt_path = os.path.join(args.output, "checkpoint.wvck")
    save_checkpoint(ckpt_path, model.named_params())
    for line in lines:
        if line.startswith(("epoch", "summary")):
            print(line)
    print(f"report -> {report_path}")
    print(f"checkpoint -> {ckpt_path}")
    return 0


def _cmd_eval(args) -> int:
    spec, name = _resolve_spec(args)
    if spec.input_size != 32 or spec.num_classes != 10:
        raise ConfigError("eval uses the 32x32 / 10-class synthetic dataset (use micro or a matching config)")
    print(f"seed = {args.seed}" + (" (default)" if args.seed == 0 else ""))
    model = build_model(spec, seed=args.seed)
    model.load_state(load_checkpoint(args.input))
    dataset = gen_dataset(seed=args.seed + 1, n_samples=DATASET_SAMPLES)
    acc = evaluate(model, dataset)
    print(f"model = {name}, checkpoint = {args.input}")
    print(f"accuracy = {acc!r} on {len(dataset)} samples (dataset seed {args.seed + 1})")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        if args.command == "dwt":
            return _cmd_dwt(args)
        if args.command == "idwt":
            return _cmd_idwt(args)
        if args.command == "params":
            return _cmd_params(args)
        if args.command == "flops":
            return _cmd_flops(args)
        if args.command == "bench":
            return _cmd_bench(args, parser)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
    except (FormatError, ConfigError, ShapeError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
