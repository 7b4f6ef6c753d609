"""Hot-kernel dispatch: compiled Haar butterflies when available, NumPy otherwise.

The compiled backend (`_core`, built from Cython) accelerates `dwt2d` and
`idwt2d`; convolution always runs the im2col + BLAS route in `pure` because
a naive compiled loop loses to BLAS by more than an order of magnitude
(`wavevit bench` shows both facts). Selection happens once at import; tests
and the benchmark switch explicitly via `use_backend`/`set_backend`.

Both backends are deterministic, but not bit-identical to each other (the
summation orders differ), so bit-exact pins are defined against `pure`.
"""
from __future__ import annotations

import contextlib

from ..errors import ConfigError
from . import pure

_BACKENDS = {"pure": pure}
try:  # pragma: no cover - exercised only when the extension is built
    from . import _core

    _BACKENDS["compiled"] = _core
except ImportError:  # pragma: no cover
    _core = None

_active = "compiled" if "compiled" in _BACKENDS else "pure"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ConfigError(
            f"unknown kernel backend {name!r}; available: {', '.join(available_backends())}"
        )
    _active = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


# convolution: one shared BLAS-backed implementation
conv2d_forward = pure.conv2d_forward
conv2d_grad_input = pure.conv2d_grad_input
conv2d_grad_weight = pure.conv2d_grad_weight


def dwt2d(x):
    return _BACKENDS[_active].dwt2d(x)


def idwt2d(ll, lh, hl, hh):
    return _BACKENDS[_active].idwt2d(ll, lh, hl, hh)
