"""Standalone writer for the .acnx named-tensor archive format.

This deliberately re-implements the format from its byte-level contract
instead of borrowing the consumer's code — the archive is the interface
between the two packages, and an independent writer keeps it honest.

Layout, all integers little-endian:

    magic    b"ACNX"
    version  u32 (1)
    count    u32
    entries, sorted by UTF-8 name bytes ascending:
        name_len u32, name bytes,
        dtype    u8 (0 = float32, the only defined code),
        rank     u8, dims u32 * rank,
        offset   u64 into the payload (entries packed contiguously)
    payload_len u64
    payload     raw little-endian float32 data
    crc32    u32 over every preceding byte (zlib polynomial)
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"ACNX"
VERSION = 1
DTYPE_F32 = 0


def acnx_bytes(tensors: dict[str, np.ndarray]) -> bytes:
    """Serialize named arrays (cast to float32) to the archive image."""
    if not tensors:
        raise ExportError("refusing to write an archive with no tensors")
    order = sorted(tensors, key=lambda n: n.encode("utf-8"))
    blob = bytearray(MAGIC)
    blob += struct.pack("<II", VERSION, len(order))
    payload = bytearray()
    for name in order:
        if not name:
            raise ExportError("empty tensor name")
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        blob += struct.pack("<I", len(raw)) + raw
        blob += struct.pack("<BB", DTYPE_F32, arr.ndim)
        blob += b"".join(struct.pack("<I", d) for d in arr.shape)
        blob += struct.pack("<Q", len(payload))
        payload += arr.tobytes()
    blob += struct.pack("<Q", len(payload))
    blob += payload
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    return bytes(blob)


def write_acnx(path: str | Path, tensors: dict[str, np.ndarray]) -> int:
    """Write the archive; returns the number of bytes written."""
    data = acnx_bytes(tensors)
    Path(path).write_bytes(data)
    return len(data)
