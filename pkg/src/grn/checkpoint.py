"""Binary checkpoint format (magic "GRNv1").

Layout, all integers little-endian u64, values little-endian f64:

    magic "GRNv1"
    count
    repeat count times:
        name_len, name (UTF-8), rank, dims[rank], values (row-major)

Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ContractError, DataError
from .tensor import Tensor

MAGIC = b"GRNv1"
_U64 = struct.Struct("<Q")


def save_checkpoint(path, params: Iterable[tuple[str, Tensor]]) -> None:
    params = list(params)
    chunks = [MAGIC, _U64.pack(len(params))]
    for name, p in params:
        raw = name.encode("utf-8")
        # note: ascontiguousarray would promote rank-0 to rank-1
        arr = np.asarray(p.data, dtype="<f8", order="C")
        chunks.append(_U64.pack(len(raw)))
        chunks.append(raw)
        chunks.append(_U64.pack(arr.ndim))
        for dim in arr.shape:
            chunks.append(_U64.pack(dim))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.at = 0

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.blob):
            raise DataError("checkpoint truncated")
        out = self.blob[self.at:self.at + n]
        self.at += n
        return out

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]


def load_checkpoint(path) -> dict[str, np.ndarray]:
    rd = _Reader(Path(path).read_bytes())
    if rd.take(len(MAGIC)) != MAGIC:
        raise DataError(f"{path}: bad checkpoint magic")
    out: dict[str, np.ndarray] = {}
    for _ in range(rd.u64()):
        name = rd.take(rd.u64()).decode("utf-8")
        rank = rd.u64()
        dims = tuple(rd.u64() for _ in range(rank))
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        values = np.frombuffer(rd.take(8 * n), dtype="<f8").astype(np.float64)
        out[name] = values.reshape(dims)
    if rd.at != len(rd.blob):
        raise DataError("checkpoint has trailing bytes")
    return out


def load_into(params: Iterable[tuple[str, Tensor]], path) -> None:
    """Load a checkpoint into an existing parameter collection."""
    stored = load_checkpoint(path)
    params = list(params)
    names = [name for name, _ in params]
    if sorted(names) != sorted(stored):
        missing = sorted(set(names) - set(stored))
        extra = sorted(set(stored) - set(names))
        raise ContractError(
            f"checkpoint parameter names disagree (missing={missing}, extra={extra})")
    for name, p in params:
        arr = stored[name]
        if arr.shape != p.data.shape:
            raise ContractError(
                f"checkpoint shape {list(arr.shape)} does not match parameter "
                f"'{name}' of shape {list(p.shape)}")
        p.data = arr.copy()
