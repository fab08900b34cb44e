"""Bit-exact estimator weight serialization.

File layout (all integers little-endian):

    magic   4 bytes  b"RDWT"
    version u32
    count   u32      number of tensors
    per tensor:
        name_len u32, name bytes (utf-8)
        rank     u32, dims u32 * rank
        data     float32 * prod(dims), C order

Values are stored exactly, so save -> load -> save reproduces the file
byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError

MAGIC = b"RDWT"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Weights:
    """Ordered named float32 tensors plus the format version."""

    tensors: tuple  # ((name, np.ndarray), ...)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        for name, arr in self.tensors:
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"weight tensor {name!r} contains non-finite values")

    def names(self):
        return [name for name, _ in self.tensors]

    def as_dict(self):
        return dict(self.tensors)


def save_weights(path, w: Weights) -> None:
    parts = [MAGIC, struct.pack("<II", w.version, len(w.tensors))]
    for name, arr in w.tensors:
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path) -> Weights:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read weights {path}: {exc}") from exc
    if data[:4] != MAGIC:
        raise DataError(f"bad magic in weights file {path}")
    pos = 4

    def need(nbytes, what):
        if pos + nbytes > len(data):
            raise DataError(f"truncated weights file {path} while reading {what}")

    need(8, "header")
    version, count = struct.unpack_from("<II", data, pos)
    pos += 8
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported weights version {version} in {path}")
    tensors = []
    for _ in range(count):
        need(4, "tensor name length")
        (name_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        need(name_len, "tensor name")
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        need(4, "tensor rank")
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        need(4 * rank, "tensor dims")
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        need(4 * n, f"tensor {name!r} data")
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
        pos += 4 * n
        tensors.append((name, arr))
    return Weights(tensors=tuple(tensors), version=version)
