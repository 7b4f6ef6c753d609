"""Synthetic frequency-texture dataset, optimizers, training loop, evaluation.

The dataset is a desk-scale classification task whose classes are separated
in the frequency domain on purpose: class k is a 2D sinusoid drawn from a
fixed (frequency, orientation) bucket, with random phase, mild amplitude
jitter and additive Gaussian noise. Wavelet subbands are therefore
informative features for it.

Run reports are line-oriented UTF-8. Everything outside the `timing`
section is deterministic for fixed seeds and is compared byte-for-byte by
the determinism checks; wall-clock lines are informational only.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .backbone import WaveViT
from .errors import ConfigError
from .tensor import backward, cross_entropy_logits, no_grad

DATASET_RECIPE = "sine-textures-v1"
IMAGE_SIZE = 32
CHANNELS = 3

OPTIMIZERS = ("adamw", "sgd-momentum")


@dataclass
class SyntheticDataset:
    images: np.ndarray  # (N, 3, 32, 32) float32
    labels: np.ndarray  # (N,) int64
    seed: int
    recipe: str = DATASET_RECIPE

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.05
    optimizer: str = "adamw"
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs/batch_size must be >= 1, got {self.epochs}/{self.batch_size}")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError(f"lr/weight_decay must be >= 0, got {self.lr}/{self.weight_decay}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; available: {OPTIMIZERS}")

    def lines(self) -> list[str]:
        return [
            f"config epochs = {self.epochs}",
            f"config batch_size = {self.batch_size}",
            f"config lr = {self.lr!r}",
            f"config weight_decay = {self.weight_decay!r}",
            f"config optimizer = {self.optimizer}",
            f"config seed = {self.seed}",
        ]


def gen_dataset(seed: int, n_samples: int, num_classes: int = 10) -> SyntheticDataset:
    """Class-balanced sinusoidal textures; bit-exact for a given (seed, N, K)."""
    if n_samples < num_classes:
        raise ConfigError(f"need at least one sample per class: N={n_samples} < K={num_classes}")
    rng = np.random.default_rng(seed)
    # class k -> (cycles across the image, orientation); frequencies split the
    # classes across wavelet scales, orientations within a scale
    n_orient = max(1, (num_classes + 1) // 2)
    freqs = (3.0, 9.0)
    yy, xx = np.meshgrid(np.arange(IMAGE_SIZE), np.arange(IMAGE_SIZE), indexing="ij")
    images = np.empty((n_samples, CHANNELS, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    labels = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        k = i % num_classes
        freq = freqs[(k // n_orient) % len(freqs)]
        theta = math.pi * (k % n_orient) / n_orient
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amplitude = rng.uniform(0.8, 1.2)
        carrier = 2.0 * math.pi * freq / IMAGE_SIZE * (xx * math.cos(theta) + yy * math.sin(theta))
        pattern = amplitude * np.sin(carrier + phase)
        for c in range(CHANNELS):
            jitter = rng.uniform(0.9, 1.1)
            noise = rng.normal(0.0, 0.15, size=pattern.shape)
            images[i, c] = (jitter * pattern + noise).astype(np.float32)
        labels[i] = k
    order = rng.permutation(n_samples)
    return SyntheticDataset(images=images[order], labels=labels[order], seed=seed)


class AdamW:
    """Decoupled weight decay Adam (beta 0.9/0.999, eps 1e-8)."""

    def __init__(self, params, lr: float, weight_decay: float):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64, copy=False)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            update = (self.m[i] / b1c) / (np.sqrt(self.v[i] / b2c) + self.eps)
            new = p.data.astype(np.float64) - self.lr * (update + self.weight_decay * p.data)
            p.data = new.astype(p.data.dtype)


class SgdMomentum:
    """Plain momentum SGD (momentum 0.9) with coupled weight decay."""

    def __init__(self, params, lr: float, weight_decay: float):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.momentum = 0.9
        self.buf = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data
            self.buf[i] = self.momentum * self.buf[i] + g
            p.data = (p.data - self.lr * self.buf[i]).astype(p.data.dtype)


def make_optimizer(model: WaveViT, cfg: TrainConfig):
    params = [p for _, p in model.named_params()]
    if cfg.optimizer == "adamw":
        return AdamW(params, cfg.lr, cfg.weight_decay)
    return SgdMomentum(params, cfg.lr, cfg.weight_decay)


@dataclass
class TrainHistory:
    losses: list[float]
    accuracies: list[float]
    epoch_seconds: list[float]
    config: TrainConfig

    def report_lines(self, backend: str) -> list[str]:
        lines = ["# wavevit train report v1", f"backend = {backend}"]
        lines.extend(self.config.lines())
        for i, (loss, acc) in enumerate(zip(self.losses, self.accuracies), start=1):
            lines.append(f"epoch {i} loss {loss!r} acc {acc!r}")
        lines.append(f"summary epochs {len(self.losses)}")
        lines.append(f"summary final_loss {self.losses[-1]!r}")
        lines.append(f"summary final_acc {self.accuracies[-1]!r}")
        lines.append("# timing section below is informational and excluded from determinism checks")
        for i, sec in enumerate(self.epoch_seconds, start=1):
            lines.append(f"timing epoch {i} wall_s {sec:.3f}")
        lines.append(f"timing total wall_s {sum(self.epoch_seconds):.3f}")
        return lines


def train(model: WaveViT, dataset: SyntheticDataset, cfg: TrainConfig) -> TrainHistory:
    """Cross-entropy training with deterministic seeded batching."""
    cfg.validate()
    num_classes = model.spec.num_classes
    if int(dataset.labels.max()) >= num_classes:
        raise ConfigError(
            f"dataset has labels up to {int(dataset.labels.max())} but model expects {num_classes} classes"
        )
    order_rng = np.random.default_rng(cfg.seed)
    optimizer = make_optimizer(model, cfg)
    losses, accuracies, epoch_seconds = [], [], []
    n = len(dataset)
    for _ in range(cfg.epochs):
        started = time.perf_counter()
        order = order_rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            images = dataset.images[idx]
            labels = dataset.labels[idx]
            model.zero_grad()
            logits = model.forward(images)
            loss = cross_entropy_logits(logits, labels)
            backward(loss)
            optimizer.step()
            epoch_loss += loss.item() * len(idx)
            predictions = logits.data.reshape(len(idx), num_classes).argmax(axis=1)
            correct += int((predictions == labels).sum())
        losses.append(epoch_loss / n)
        accuracies.append(correct / n)
        epoch_seconds.append(time.perf_counter() - started)
    return TrainHistory(losses=losses, accuracies=accuracies, epoch_seconds=epoch_seconds, config=cfg)


def overfit_single_batch(model: WaveViT, dataset: SyntheticDataset, steps: int, cfg: TrainConfig) -> list[float]:
    """Repeat steps on one fixed batch; returns per-step accuracy trace."""
    cfg.validate()
    images = dataset.images[: cfg.batch_size]
    labels = dataset.labels[: cfg.batch_size]
    optimizer = make_optimizer(model, cfg)
    trace = []
    for _ in range(steps):
        model.zero_grad()
        logits = model.forward(images)
        loss = cross_entropy_logits(logits, labels)
        backward(loss)
        optimizer.step()
        predictions = logits.data.reshape(len(labels), model.spec.num_classes).argmax(axis=1)
        trace.append(float((predictions == labels).mean()))
        if trace[-1] == 1.0:
            break
    return trace


def evaluate(model: WaveViT, dataset: SyntheticDataset, batch_size: int = 64) -> float:
    """Argmax accuracy; ties resolve to the lowest class index (argmax rule)."""
    correct = 0
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            images = dataset.images[start : start + batch_size]
            labels = dataset.labels[start : start + batch_size]
            logits = model.forward(images)
            predictions = logits.data.reshape(len(labels), model.spec.num_classes).argmax(axis=1)
            correct += int((predictions == labels).sum())
    return correct / len(dataset)
