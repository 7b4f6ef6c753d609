"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import Tensor4, backward, no_grad, zero_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_input: int
    worst_coord: tuple[int, int, int, int]
    coords_checked: int
    subset_seed: int
    step: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{status}: max_rel_error={self.max_rel_error:.3e} (tol {self.tolerance:.1e}) "
            f"worst input {self.worst_input} coord {self.worst_coord}, "
            f"{self.coords_checked} coords checked (subset seed {self.subset_seed}, step {self.step:g})"
        )


def grad_check(
    fn,
    inputs: list[Tensor4],
    step: float = 1e-6,
    tolerance: float = 1e-5,
    max_coords_per_input: int = 200,
    subset_seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued fn(*inputs) to central differences.

    Inputs must be float64. When an input has more elements than
    `max_coords_per_input`, a seeded random subset of coordinates is checked
    and the subset size/seed are reported. Relative error uses denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    if step <= 0:
        raise ConfigError(f"grad_check: step must be > 0, got {step}")
    for i, t in enumerate(inputs):
        if t.data.dtype != np.float64:
            raise ConfigError(f"grad_check: input {i} must be float64, got {t.data.dtype}")
        t.requires_grad = True
    zero_grad(inputs)

    out = fn(*inputs)
    if out.dims != (1, 1, 1, 1):
        raise ConfigError(f"grad_check: fn must return a scalar tensor, got dims {out.dims}")
    backward(out)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    rng = np.random.default_rng(subset_seed)
    worst = 0.0
    worst_input, worst_coord = 0, (0, 0, 0, 0)
    checked = 0
    with no_grad():
        for i, t in enumerate(inputs):
            flat = t.data.reshape(-1)
            n = flat.size
            if n > max_coords_per_input:
                coords = rng.choice(n, size=max_coords_per_input, replace=False)
            else:
                coords = np.arange(n)
            for c in coords:
                original = flat[c]
                flat[c] = original + step
                f_plus = fn(*inputs).item()
                flat[c] = original - step
                f_minus = fn(*inputs).item()
                flat[c] = original
                numeric = (f_plus - f_minus) / (2.0 * step)
                a = analytic[i].reshape(-1)[c]
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                checked += 1
                if rel > worst:
                    worst = rel
                    worst_input = i
                    worst_coord = tuple(int(v) for v in np.unravel_index(int(c), t.dims))
    return GradCheckReport(
        max_rel_error=float(worst),
        worst_input=worst_input,
        worst_coord=worst_coord,  # type: ignore[arg-type]
        coords_checked=checked,
        subset_seed=subset_seed,
        step=step,
        tolerance=tolerance,
    )
