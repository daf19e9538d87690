"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic    8 bytes  b"DRCKPT\\x00\\x01"
    version  uint32   currently 1
    count    uint32   number of parameters
    repeated count times:
        name_len uint32
        name     name_len bytes, UTF-8
        rank     uint32
        dims     rank x uint64
        data     prod(dims) x float64, little-endian, row-major
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DRCKPT\x00\x01"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(params)))
    for name, value in params.items():
        arr = np.asarray(value, dtype="<f8")  # tobytes() below is row-major; keeps 0-d shape
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    view = memoryview(blob)
    if bytes(view[:8]) != MAGIC:
        raise CheckpointError("bad magic; not a duetreact checkpoint")
    version, count = struct.unpack_from("<II", view, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 16
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", view, pos)
            pos += 4
            name = bytes(view[pos:pos + n]).decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", view, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", view, pos)
            pos += 8 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 8 * size > len(blob):
                raise CheckpointError(f"truncated checkpoint: {name!r} needs {size} values")
            arr = np.frombuffer(view, dtype="<f8", count=size, offset=pos).astype(np.float64)
            pos += 8 * size
            out[name] = arr.reshape(dims)
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last parameter")
    return out


def save(path, params: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(params))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
