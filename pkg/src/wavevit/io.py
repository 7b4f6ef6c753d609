"""Binary tensor/checkpoint formats and the text config schema.

WT4D (single tensor):
    magic 'WT4D' | u32 version=1 | u8 dtype (0=float64, 1=float32) |
    u8 rank=4 | 4 x u64 dims | raw little-endian payload, row-major

WVCK (named tensor container):
    magic 'WVCK' | u32 version=1 | u64 tensor count | per tensor:
    u32 name length | UTF-8 name | u8 dtype | u8 rank | rank x u64 dims |
    little-endian payload

All integers are little-endian. Both formats round-trip bit-exactly.

Model config text: UTF-8, one `key = value` per line, '#' comments. Either
`preset = <name>` or the four explicit per-stage lists (channels, depths,
heads, ffn_expansion); `modes`, `num_classes` and `input_size` are optional
overrides on either form.
"""
from __future__ import annotations

import struct
from dataclasses import replace
from typing import Iterable

import numpy as np

from .backbone import ModelSpec, PRESETS, StageSpec
from .errors import FormatError
from .tensor import Tensor4

_WT4D_MAGIC = b"WT4D"
_WVCK_MAGIC = b"WVCK"
_VERSION = 1
_DTYPE_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def _encode_tensor_payload(arr: np.ndarray) -> bytes:
    if arr.ndim != 4:
        raise FormatError(f"only rank-4 tensors are serializable, got shape {arr.shape}")
    if arr.dtype not in _DTYPE_CODES:
        raise FormatError(f"unsupported dtype {arr.dtype}; use float64 or float32")
    code = _DTYPE_CODES[arr.dtype]
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    header = struct.pack("<BB", code, 4) + struct.pack("<4Q", *arr.shape)
    return header + np.ascontiguousarray(le).tobytes()


def _decode_tensor_payload(buf: bytes, offset: int, where: str) -> tuple[np.ndarray, int]:
    if len(buf) < offset + 2 + 32:
        raise FormatError(f"{where}: truncated tensor header")
    code, rank = struct.unpack_from("<BB", buf, offset)
    offset += 2
    if code not in _CODE_DTYPES:
        raise FormatError(f"{where}: unknown dtype code {code} (expected 0=float64 or 1=float32)")
    if rank != 4:
        raise FormatError(f"{where}: rank {rank} unsupported (this format stores rank-4 tensors)")
    dims = struct.unpack_from("<4Q", buf, offset)
    offset += 32
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(dims))
    nbytes = count * dtype.itemsize
    if len(buf) < offset + nbytes:
        raise FormatError(f"{where}: payload truncated (need {nbytes} bytes for dims {dims})")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(dims)
    return arr.astype(dtype.newbyteorder("=")), offset + nbytes


def write_wt4d(path, tensor) -> None:
    arr = tensor.data if isinstance(tensor, Tensor4) else np.asarray(tensor)
    blob = _WT4D_MAGIC + struct.pack("<I", _VERSION) + _encode_tensor_payload(arr)
    with open(path, "wb") as f:
        f.write(blob)


def read_wt4d(path) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except FileNotFoundError:
        raise FormatError(f"{path}: file not found") from None
    if buf[:4] != _WT4D_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}, expected {_WT4D_MAGIC!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported WT4D version {version}")
    arr, end = _decode_tensor_payload(buf, 8, str(path))
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes after payload")
    return arr


def save_checkpoint(path, named_tensors: Iterable[tuple[str, object]]) -> None:
    entries = list(named_tensors)
    parts = [_WVCK_MAGIC, struct.pack("<I", _VERSION), struct.pack("<Q", len(entries))]
    for name, tensor in entries:
        arr = tensor.data if isinstance(tensor, Tensor4) else np.asarray(tensor)
        encoded_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded_name)))
        parts.append(encoded_name)
        parts.append(_encode_tensor_payload(arr))
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except FileNotFoundError:
        raise FormatError(f"{path}: file not found") from None
    if buf[:4] != _WVCK_MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}, expected {_WVCK_MAGIC!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported WVCK version {version}")
    (count,) = struct.unpack_from("<Q", buf, 8)
    offset = 16
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        if len(buf) < offset + 4:
            raise FormatError(f"{path}: truncated at tensor {i} name length")
        (name_len,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        if len(buf) < offset + name_len:
            raise FormatError(f"{path}: truncated at tensor {i} name")
        name = buf[offset : offset + name_len].decode("utf-8")
        offset += name_len
        arr, offset = _decode_tensor_payload(buf, offset, f"{path}[{name}]")
        out[name] = arr
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes after last tensor")
    return out


# ---------------------------------------------------------------------------
# text configs


def parse_kv_text(text: str, allowed: set[str], where: str = "config") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{where}: line {lineno} is not 'key = value': {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise FormatError(f"{where}: unknown key {key!r} (line {lineno}); allowed: {', '.join(sorted(allowed))}")
        if key in out:
            raise FormatError(f"{where}: duplicate key {key!r} (line {lineno})")
        out[key] = value
    return out


def _int_list(value: str, key: str, where: str) -> tuple[int, ...]:
    try:
        return tuple(int(v.strip()) for v in value.split(","))
    except ValueError:
        raise FormatError(f"{where}: {key} must be a comma-separated integer list, got {value!r}") from None


_MODEL_KEYS = {"preset", "channels", "depths", "heads", "ffn_expansion", "modes", "num_classes", "input_size"}
_STAGE_LIST_KEYS = ("channels", "depths", "heads", "ffn_expansion")


def parse_model_config(text: str, where: str = "config") -> ModelSpec:
    kv = parse_kv_text(text, _MODEL_KEYS, where)
    if "preset" in kv:
        for key in _STAGE_LIST_KEYS:
            if key in kv:
                raise FormatError(f"{where}: give either preset or explicit {key}, not both")
        name = kv["preset"]
        if name not in PRESETS:
            raise FormatError(f"{where}: unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
        spec = PRESETS[name]
    else:
        missing = [key for key in _STAGE_LIST_KEYS if key not in kv]
        if missing:
            raise FormatError(f"{where}: missing keys {missing} (or use 'preset = <name>')")
        lists = {key: _int_list(kv[key], key, where) for key in _STAGE_LIST_KEYS}
        lengths = {len(v) for v in lists.values()}
        if lengths != {4}:
            raise FormatError(f"{where}: per-stage lists must have exactly 4 entries, got {lengths}")
        modes = ("wavelet_idwt", "wavelet_idwt", "none", "none")
        stages = tuple(
            StageSpec(depth=d, channels=c, heads=h, ffn_expansion=e, mode=m)
            for d, c, h, e, m in zip(lists["depths"], lists["channels"], lists["heads"], lists["ffn_expansion"], modes)
        )
        spec = ModelSpec(stages=stages, num_classes=1000, input_size=224)  # type: ignore[arg-type]
    if "modes" in kv:
        modes = tuple(m.strip() for m in kv["modes"].split(","))
        if len(modes) != 4:
            raise FormatError(f"{where}: modes needs 4 entries, got {len(modes)}")
        spec = replace(spec, stages=tuple(replace(s, mode=m) for s, m in zip(spec.stages, modes)))
    if "num_classes" in kv or "input_size" in kv:
        spec = replace(
            spec,
            num_classes=int(kv.get("num_classes", spec.num_classes)),
            input_size=int(kv.get("input_size", spec.input_size)),
        )
    try:
        spec.validate()
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from None
    return spec


def serialize_model_config(spec: ModelSpec) -> str:
    lines = [
        f"channels = {','.join(str(s.channels) for s in spec.stages)}",
        f"depths = {','.join(str(s.depth) for s in spec.stages)}",
        f"heads = {','.join(str(s.heads) for s in spec.stages)}",
        f"ffn_expansion = {','.join(str(s.ffn_expansion) for s in spec.stages)}",
        f"modes = {','.join(s.mode for s in spec.stages)}",
        f"num_classes = {spec.num_classes}",
        f"input_size = {spec.input_size}",
    ]
    return "\n".join(lines) + "\n"
