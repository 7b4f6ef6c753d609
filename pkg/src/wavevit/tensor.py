"""Dense rank-4 tensor with reverse-mode differentiation.

Every value is a `Tensor4`: a C-contiguous float32/float64 array with dims
(batch, channel, height, width). Two layout conventions are used on top of
that fixed rank:

  spatial:  (n_b, C, H, W)        feature maps
  tokens:   (n_b, 1, n_tokens, C) sequences; matrices embed as (1, 1, r, c)

Operations record a graph of `OpNode`s while gradients are enabled;
`backward` on a scalar distributes gradients to every `requires_grad`
tensor, accumulating across repeated calls (use `zero_grad` to reset).
General broadcasting is deliberately not supported; the only broadcast
cases are matmul leading axes and bias rows, each with explicit reduction
in the backward rule so results stay deterministic.
"""
from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, NumericsError, ShapeError

SUPPORTED_DTYPES = (np.float64, np.float32)

# tanh-approximation GELU constants, fixed for the whole build
GELU_SCALE = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715

_grad_enabled = True
_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle post-op finiteness assertions (off by default; costs a pass)."""
    global _debug_checks
    _debug_checks = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / perturbations)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class OpNode:
    """One recorded operation: parents plus the rule mapping d(out) -> d(parents)."""

    __slots__ = ("op", "parents", "backward_fn")

    def __init__(self, op: str, parents: tuple["Tensor4", ...], backward_fn: Callable):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn


class Tensor4:
    __slots__ = ("data", "requires_grad", "grad", "_node")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        arr = np.ascontiguousarray(data)
        if arr.ndim != 4:
            raise ShapeError(f"Tensor4 requires rank 4, got dims {arr.shape}")
        if arr.dtype.type not in SUPPORTED_DTYPES:
            raise ConfigError(f"unsupported dtype {arr.dtype}; use float64 or float32")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: OpNode | None = None

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, got dims {self.dims}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor4":
        return Tensor4(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor4(dims={self.dims}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def __matmul__(self, other: "Tensor4") -> "Tensor4":
        return matmul(self, other)

    def __add__(self, other: "Tensor4") -> "Tensor4":
        return add(self, other)


def tensor(data, dtype=np.float64, requires_grad: bool = False) -> Tensor4:
    """Build a Tensor4 from any nested sequence / array, casting to dtype."""
    return Tensor4(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def from_matrix(data, dtype=np.float64, requires_grad: bool = False) -> Tensor4:
    """Embed a (rows, cols) matrix as dims (1, 1, rows, cols)."""
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim != 2:
        raise ShapeError(f"from_matrix expects 2-d data, got shape {arr.shape}")
    return Tensor4(arr[None, None], requires_grad=requires_grad)


def zero_grad(tensors: Iterable[Tensor4]) -> None:
    for t in tensors:
        t.grad = None


def _same_dtype(op: str, *ts: Tensor4) -> None:
    dt = ts[0].data.dtype
    for t in ts[1:]:
        if t.data.dtype != dt:
            raise ConfigError(f"{op}: mixed dtypes {dt} and {t.data.dtype}")


def _finish(op: str, out: np.ndarray, parents: tuple[Tensor4, ...], backward_fn) -> Tensor4:
    result = Tensor4(out)
    if _debug_checks and not np.all(np.isfinite(result.data)):
        raise NumericsError(f"{op}: non-finite values in output")
    if _grad_enabled and any(p.requires_grad or p._node is not None for p in parents):
        result._node = OpNode(op, parents, backward_fn)
    return result


def _reduce_leading(grad: np.ndarray, target_dims) -> np.ndarray:
    for axis in (0, 1):
        if target_dims[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return np.ascontiguousarray(grad)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor4, b: Tensor4) -> Tensor4:
    """Matrix product over the last two axes; leading axes must match or be 1."""
    _same_dtype("matmul", a, b)
    if a.dims[3] != b.dims[2]:
        raise ShapeError(f"matmul: inner dimensions disagree: A dims {a.dims} vs B dims {b.dims}")
    for axis in (0, 1):
        if a.dims[axis] != b.dims[axis] and 1 not in (a.dims[axis], b.dims[axis]):
            raise ShapeError(f"matmul: leading dims incompatible: A dims {a.dims} vs B dims {b.dims}")
    out = np.matmul(a.data, b.data)

    def backward(dy: np.ndarray):
        da = _reduce_leading(np.matmul(dy, b.data.swapaxes(-1, -2)), a.dims)
        db = _reduce_leading(np.matmul(a.data.swapaxes(-1, -2), dy), b.dims)
        return da, db

    return _finish("matmul", out, (a, b), backward)


def transpose_last2(x: Tensor4) -> Tensor4:
    out = np.ascontiguousarray(x.data.swapaxes(-1, -2))

    def backward(dy: np.ndarray):
        return (np.ascontiguousarray(dy.swapaxes(-1, -2)),)

    return _finish("transpose_last2", out, (x,), backward)


def linear(x: Tensor4, w: Tensor4, b: Tensor4 | None = None) -> Tensor4:
    """Token-wise affine map: x (.., n, in) @ w (1,1,in,out) + bias row."""
    if w.dims[:2] != (1, 1):
        raise ShapeError(f"linear: weight must have dims (1,1,in,out), got {w.dims}")
    if x.dims[3] != w.dims[2]:
        raise ShapeError(f"linear: in_dim mismatch: X dims {x.dims} vs W dims {w.dims}")
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def add(x: Tensor4, y: Tensor4) -> Tensor4:
    """Elementwise sum; y may also be a bias row (1,1,1,C) or scalar (1,1,1,1)."""
    _same_dtype("add", x, y)
    bias_like = y.dims == (1, 1, 1, x.dims[3]) or y.dims == (1, 1, 1, 1)
    if x.dims != y.dims and not bias_like:
        raise ShapeError(f"add: dims disagree: {x.dims} vs {y.dims}")
    out = x.data + y.data

    def backward(dy: np.ndarray):
        dx = dy
        if x.dims != dy.shape:  # only possible if x itself was the broadcast side
            dx = _reduce_all_to(dy, x.dims)
        return dx, _reduce_all_to(dy, y.dims)

    return _finish("add", out, (x, y), backward)


def _reduce_all_to(grad: np.ndarray, dims) -> np.ndarray:
    axes = tuple(i for i in range(4) if dims[i] == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return np.ascontiguousarray(grad)


def scale(x: Tensor4, s: float) -> Tensor4:
    factor = x.data.dtype.type(s)
    out = x.data * factor

    def backward(dy: np.ndarray):
        return (dy * factor,)

    return _finish("scale", out, (x,), backward)


# ---------------------------------------------------------------------------
# nonlinearities and normalization


def softmax_lastdim(x: Tensor4) -> Tensor4:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(dy: np.ndarray):
        inner = (dy * out).sum(axis=-1, keepdims=True)
        return (out * (dy - inner),)

    return _finish("softmax_lastdim", out, (x,), backward)


def layer_norm(x: Tensor4, gamma: Tensor4, beta: Tensor4, eps: float = 1e-5) -> Tensor4:
    """Normalize each token over its channel (last) axis, then affine."""
    if eps <= 0:
        raise ConfigError(f"layer_norm: eps must be > 0, got {eps}")
    c = x.dims[3]
    if gamma.dims != (1, 1, 1, c) or beta.dims != (1, 1, 1, c):
        raise ShapeError(f"layer_norm: affine params need dims (1,1,1,{c}), got {gamma.dims} / {beta.dims}")
    _same_dtype("layer_norm", x, gamma, beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward(dy: np.ndarray):
        dxhat = dy * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        dgamma = (dy * xhat).sum(axis=(0, 1, 2), keepdims=True)
        dbeta = dy.sum(axis=(0, 1, 2), keepdims=True)
        return dx.astype(x.data.dtype, copy=False), dgamma, dbeta

    return _finish("layer_norm", out, (x, gamma, beta), backward)


def gelu(x: Tensor4) -> Tensor4:
    dt = x.data.dtype.type
    c, a = dt(GELU_SCALE), dt(GELU_CUBIC)
    u = c * (x.data + a * x.data**3)
    t = np.tanh(u)
    out = dt(0.5) * x.data * (1.0 + t)

    def backward(dy: np.ndarray):
        du = c * (1.0 + 3.0 * a * x.data**2)
        local = dt(0.5) * (1.0 + t) + dt(0.5) * x.data * (1.0 - t * t) * du
        return ((dy * local).astype(x.data.dtype, copy=False),)

    return _finish("gelu", out, (x,), backward)


def relu(x: Tensor4) -> Tensor4:
    mask = x.data > 0
    out = np.where(mask, x.data, x.data.dtype.type(0.0))

    def backward(dy: np.ndarray):
        return (np.where(mask, dy, dy.dtype.type(0.0)),)

    return _finish("relu", out, (x,), backward)


# ---------------------------------------------------------------------------
# spatial ops


def conv2d(x: Tensor4, w: Tensor4, b: Tensor4 | None = None, stride: int = 1, padding: int = 0) -> Tensor4:
    """Cross-correlation (no kernel flip) with zero padding."""
    if stride < 1 or padding < 0:
        raise ConfigError(f"conv2d: invalid stride/padding ({stride}, {padding})")
    n, ci, h, wd = x.dims
    co, ci_w, kh, kw = w.dims
    if ci != ci_w:
        raise ShapeError(f"conv2d: input channels disagree: X dims {x.dims} vs W dims {w.dims}")
    if kh != kw:
        raise ShapeError(f"conv2d: only square kernels supported, got W dims {w.dims}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"conv2d: output would be {ho}x{wo} for input {h}x{wd}, kernel {kh}, stride {stride}, padding {padding}"
        )
    parents: tuple[Tensor4, ...]
    if b is not None:
        if b.dims != (1, 1, 1, co):
            raise ShapeError(f"conv2d: bias needs dims (1,1,1,{co}), got {b.dims}")
        _same_dtype("conv2d", x, w, b)
        bias_flat = b.data.reshape(co)
        parents = (x, w, b)
    else:
        _same_dtype("conv2d", x, w)
        bias_flat = None
        parents = (x, w)
    out = kernels.conv2d_forward(x.data, w.data, bias_flat, stride, padding)

    def backward(dy: np.ndarray):
        dx = kernels.conv2d_grad_input(dy, w.data, stride, padding, h, wd)
        dw = kernels.conv2d_grad_weight(x.data, dy, stride, padding, kh, kw)
        if b is None:
            return dx, dw
        db = dy.sum(axis=(0, 2, 3)).reshape(1, 1, 1, co)
        return dx, dw, db

    return _finish("conv2d", out, parents, backward)


def avg_pool2d(x: Tensor4, k: int, stride: int) -> Tensor4:
    """Mean over k x k windows; only the k == stride tiling is provided."""
    if k != stride:
        raise ConfigError(f"avg_pool2d: only k == stride supported, got k={k} stride={stride}")
    n, c, h, w = x.dims
    if h % stride or w % stride:
        raise ShapeError(f"avg_pool2d: dims {x.dims} not divisible by stride {stride}")
    ho, wo = h // k, w // k
    out = x.data.reshape(n, c, ho, k, wo, k).mean(axis=(3, 5))

    def backward(dy: np.ndarray):
        dx = np.broadcast_to(
            dy[:, :, :, None, :, None] * dy.dtype.type(1.0 / (k * k)),
            (n, c, ho, k, wo, k),
        ).reshape(n, c, h, w)
        return (np.ascontiguousarray(dx),)

    return _finish("avg_pool2d", out, (x,), backward)


# ---------------------------------------------------------------------------
# data movement (pure reshuffles; backward rules are the inverse movements)


def spatial_to_tokens(x: Tensor4) -> Tensor4:
    n, c, h, w = x.dims
    out = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1).reshape(n, 1, h * w, c))

    def backward(dy: np.ndarray):
        return (np.ascontiguousarray(dy.reshape(n, h, w, c).transpose(0, 3, 1, 2)),)

    return _finish("spatial_to_tokens", out, (x,), backward)


def tokens_to_spatial(x: Tensor4, h: int, w: int) -> Tensor4:
    n, one, t, c = x.dims
    if one != 1 or t != h * w:
        raise ShapeError(f"tokens_to_spatial: dims {x.dims} do not match grid {h}x{w}")
    out = np.ascontiguousarray(x.data.reshape(n, h, w, c).transpose(0, 3, 1, 2))

    def backward(dy: np.ndarray):
        return (np.ascontiguousarray(dy.transpose(0, 2, 3, 1).reshape(n, 1, t, c)),)

    return _finish("tokens_to_spatial", out, (x,), backward)


def split_heads(x: Tensor4, n_heads: int) -> Tensor4:
    n, one, t, d = x.dims
    if one != 1:
        raise ShapeError(f"split_heads: expected token layout (n,1,t,C), got {x.dims}")
    if d % n_heads:
        raise ConfigError(f"split_heads: channels {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    out = np.ascontiguousarray(x.data.reshape(n, t, n_heads, dh).transpose(0, 2, 1, 3))

    def backward(dy: np.ndarray):
        return (np.ascontiguousarray(dy.transpose(0, 2, 1, 3).reshape(n, 1, t, d)),)

    return _finish("split_heads", out, (x,), backward)


def merge_heads(x: Tensor4) -> Tensor4:
    n, nh, t, dh = x.dims
    out = np.ascontiguousarray(x.data.transpose(0, 2, 1, 3).reshape(n, 1, t, nh * dh))

    def backward(dy: np.ndarray):
        return (np.ascontiguousarray(dy.reshape(n, t, nh, dh).transpose(0, 2, 1, 3)),)

    return _finish("merge_heads", out, (x,), backward)


def concat(parts: Sequence[Tensor4], axis: int) -> Tensor4:
    if axis not in (1, 3):
        raise ConfigError(f"concat: axis must be 1 (channel) or 3 (feature), got {axis}")
    if not parts:
        raise ContractError("concat: need at least one tensor")
    _same_dtype("concat", *parts)
    ref = list(parts[0].dims)
    for p in parts[1:]:
        other = list(p.dims)
        if [d for i, d in enumerate(other) if i != axis] != [d for i, d in enumerate(ref) if i != axis]:
            raise ShapeError(f"concat: dims disagree off axis {axis}: {parts[0].dims} vs {p.dims}")
    sizes = [p.dims[axis] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)

    def backward(dy: np.ndarray):
        pieces = np.split(dy, np.cumsum(sizes)[:-1], axis=axis)
        return tuple(np.ascontiguousarray(piece) for piece in pieces)

    return _finish("concat", out, tuple(parts), backward)


def split(x: Tensor4, sizes: Sequence[int], axis: int) -> list[Tensor4]:
    if axis not in (1, 3):
        raise ConfigError(f"split: axis must be 1 or 3, got {axis}")
    if sum(sizes) != x.dims[axis]:
        raise ShapeError(f"split: sizes {tuple(sizes)} do not sum to axis {axis} of dims {x.dims}")
    offsets = np.cumsum([0, *sizes])
    outs = []
    for i, size in enumerate(sizes):
        sl = [slice(None)] * 4
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        piece = np.ascontiguousarray(x.data[tuple(sl)])

        def backward(dy: np.ndarray, _sl=tuple(sl)):
            dx = np.zeros_like(x.data)
            dx[_sl] = dy
            return (dx,)

        outs.append(_finish("split", piece, (x,), backward))
    return outs


def reshape(x: Tensor4, dims: tuple[int, int, int, int]) -> Tensor4:
    if int(np.prod(dims)) != x.size:
        raise ShapeError(f"reshape: cannot view dims {x.dims} as {dims} (element counts differ)")
    out = x.data.reshape(dims)

    def backward(dy: np.ndarray):
        return (np.ascontiguousarray(dy.reshape(x.dims)),)

    return _finish("reshape", out, (x,), backward)


# ---------------------------------------------------------------------------
# reductions and losses


def sum_all(x: Tensor4) -> Tensor4:
    out = x.data.sum(dtype=x.data.dtype).reshape(1, 1, 1, 1)

    def backward(dy: np.ndarray):
        return (np.full_like(x.data, dy.reshape(())),)

    return _finish("sum_all", out, (x,), backward)


def mean_tokens(x: Tensor4) -> Tensor4:
    """Global average over the token axis: (n,1,t,C) -> (n,1,1,C)."""
    n, one, t, c = x.dims
    if one != 1:
        raise ShapeError(f"mean_tokens: expected token layout (n,1,t,C), got {x.dims}")
    out = x.data.mean(axis=2, keepdims=True)

    def backward(dy: np.ndarray):
        dx = np.broadcast_to(dy * dy.dtype.type(1.0 / t), x.dims)
        return (np.ascontiguousarray(dx),)

    return _finish("mean_tokens", out, (x,), backward)


def cross_entropy_logits(logits: Tensor4, labels: np.ndarray) -> Tensor4:
    """Mean softmax cross-entropy; logits (n,1,1,K), labels (n,) integers."""
    n, one, one2, k = logits.dims
    if one != 1 or one2 != 1:
        raise ShapeError(f"cross_entropy_logits: expected logits dims (n,1,1,K), got {logits.dims}")
    labels = np.asarray(labels)
    if labels.shape != (n,) or not np.issubdtype(labels.dtype, np.integer):
        raise ShapeError(f"cross_entropy_logits: labels must be {n} integers, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ConfigError(f"cross_entropy_logits: labels out of range [0, {k})")
    flat = logits.data.reshape(n, k)
    shifted = flat - flat.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    loss = -logp[np.arange(n), labels].mean(dtype=flat.dtype)
    out = np.asarray(loss, dtype=flat.dtype).reshape(1, 1, 1, 1)

    def backward(dy: np.ndarray):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        dx = p * (dy.reshape(()) / flat.dtype.type(n))
        return (dx.reshape(logits.dims).astype(flat.dtype, copy=False),)

    return _finish("cross_entropy_logits", out, (logits,), backward)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor4) -> None:
    """Propagate d(loss)=1 through the recorded graph.

    Gradients accumulate into `.grad` of every requires_grad tensor reached;
    call `zero_grad` between steps. Raises on non-scalar loss.
    """
    if loss.dims != (1, 1, 1, 1):
        raise ContractError(f"backward: loss must be scalar (1,1,1,1), got dims {loss.dims}")

    order: list[Tensor4] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor4, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._node is not None:
            for parent in node._node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    by_id: dict[int, Tensor4] = {id(t): t for t in order}
    for t in reversed(order):
        g = grads.get(id(t))
        if g is None or t._node is None:
            continue
        parent_grads = t._node.backward_fn(g)
        for parent, pg in zip(t._node.parents, parent_grads):
            if pg is None:
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg

    for tid, g in grads.items():
        t = by_id[tid]
        if t.requires_grad:
            t.grad = g if t.grad is None else t.grad + g
