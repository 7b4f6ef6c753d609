"""Single-level orthonormal 2D Haar transform over (n,c,h,w) feature maps.

Filter bank: low = (1/sqrt2, 1/sqrt2), high = (1/sqrt2, -1/sqrt2), applied
along the width first and the height second, stride 2. Subband naming keeps
that order: the first letter is the width-direction filter, the second the
height-direction one, so LH is low along each row and high across rows.

The transform is linear and orthonormal, hence exactly invertible and
energy preserving; its autograd backward is the inverse transform applied
to the output gradient (transpose of an orthonormal map).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError
from .tensor import Tensor4, _finish, concat, split

HAAR_LOW = (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))
HAAR_HIGH = (1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0))

# packing order of subbands along the channel axis (fixed convention)
SUBBAND_ORDER = ("ll", "lh", "hl", "hh")


@dataclass
class Subbands:
    ll: Tensor4
    lh: Tensor4
    hl: Tensor4
    hh: Tensor4

    def __iter__(self):
        yield self.ll
        yield self.lh
        yield self.hl
        yield self.hh

    @property
    def dims(self):
        return self.ll.dims


def dwt2d_haar(x: Tensor4) -> Subbands:
    """Decompose x (n,c,h,w) with even h,w into four (n,c,h/2,w/2) subbands."""
    n, c, h, w = x.dims
    if h % 2 or w % 2:
        raise ShapeError(
            f"dwt2d_haar: spatial dims must be even, got {h}x{w}; pad or crop the input first"
        )
    ll, lh, hl, hh = kernels.dwt2d(x.data)

    def backward_for(index: int):
        def backward(dy: np.ndarray):
            zeros = [np.zeros_like(dy)] * 4
            zeros[index] = dy
            return (kernels.idwt2d(*zeros),)

        return backward

    return Subbands(
        ll=_finish("dwt2d_haar.ll", ll, (x,), backward_for(0)),
        lh=_finish("dwt2d_haar.lh", lh, (x,), backward_for(1)),
        hl=_finish("dwt2d_haar.hl", hl, (x,), backward_for(2)),
        hh=_finish("dwt2d_haar.hh", hh, (x,), backward_for(3)),
    )


def idwt2d_haar(s: Subbands) -> Tensor4:
    """Reconstruct the (n,c,2h,2w) map; exact inverse of dwt2d_haar."""
    dims = s.ll.dims
    for name, t in zip(SUBBAND_ORDER, s):
        if t.dims != dims:
            raise ShapeError(f"idwt2d_haar: subband {name} dims {t.dims} disagree with ll dims {dims}")
    out = kernels.idwt2d(s.ll.data, s.lh.data, s.hl.data, s.hh.data)

    def backward(dy: np.ndarray):
        return kernels.dwt2d(dy)

    return _finish("idwt2d_haar", out, (s.ll, s.lh, s.hl, s.hh), backward)


def subbands_pack(s: Subbands) -> Tensor4:
    """Concatenate subbands along channels in the fixed [LL, LH, HL, HH] order."""
    return concat(list(s), axis=1)


def subbands_unpack(x: Tensor4) -> Subbands:
    """Inverse of subbands_pack; channel count must be divisible by 4."""
    n, c, h, w = x.dims
    if c % 4:
        raise ShapeError(f"subbands_unpack: channels {c} not divisible by 4 (dims {x.dims})")
    quarter = c // 4
    ll, lh, hl, hh = split(x, [quarter] * 4, axis=1)
    return Subbands(ll=ll, lh=lh, hl=hl, hh=hh)
