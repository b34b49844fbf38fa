"""Single-file binary container for named float64 arrays.

Layout (all integers little-endian):

    magic   4 bytes  b"LFCK"
    version u32      currently 1
    count   u32      number of entries
    entry   repeated count times:
        name_len u32, name (UTF-8, name_len bytes)
        rank     u32, dims (rank u32 values)
        dtype    u8   (0 = float64)
        data     raw little-endian values, C order

Entries are written in sorted name order, so saving the same mapping twice
produces byte-identical files. Strings ride along as uint8 byte arrays cast
to float64 via :func:`encode_text` / :func:`decode_text`.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"LFCK"
VERSION = 1
_DTYPE_F64 = 0


def encode_text(text: str) -> np.ndarray:
    """UTF-8 bytes as a float64 vector (checkpoint-friendly string)."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float64)


def decode_text(arr: np.ndarray) -> str:
    vals = np.asarray(arr, dtype=np.float64).reshape(-1)
    b = np.round(vals).astype(np.uint8)
    if not np.allclose(vals, b):
        raise CheckpointError("text entry holds values outside byte range")
    return bytes(b).decode("utf-8")


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    """Write a name->array mapping; overwrites atomically via a temp file."""
    path = Path(path)
    names = sorted(arrays)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(names))]
    for name in names:
        # asarray keeps 0-d shapes; tobytes() below emits C order regardless
        arr = np.asarray(arrays[name], dtype=np.float64)
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(struct.pack("<B", _DTYPE_F64))
        chunks.append(arr.astype("<f8").tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


class _Reader:
    def __init__(self, blob: bytes, where: str):
        self.blob = blob
        self.pos = 0
        self.where = where

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"{self.where}: truncated at byte {self.pos} (wanted {n} more)")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def load_arrays(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    r = _Reader(blob, str(path))
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    count = r.u32()
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = r.u32()
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"{path}: undecodable entry name") from e
        rank = r.u32()
        if rank > 8:
            raise CheckpointError(f"{path}: implausible rank {rank} for '{name}'")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        dtype = r.u8()
        if dtype != _DTYPE_F64:
            raise CheckpointError(f"{path}: unsupported dtype tag {dtype}")
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(dims)
        if name in out:
            raise CheckpointError(f"{path}: duplicate entry '{name}'")
        out[name] = data.astype(np.float64)
    if r.pos != len(blob):
        raise CheckpointError(
            f"{path}: {len(blob) - r.pos} trailing bytes after last entry")
    return out
