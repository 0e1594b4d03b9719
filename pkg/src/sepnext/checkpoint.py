"""Binary checkpoint format (.acnx) and model state application.

Layout, all integers little-endian:

    magic   4 bytes  b"ACNX"
    version u32      currently 1
    count   u32      number of entries
    entries, sorted by name (bytewise ascending), each:
        name_len u32, name UTF-8 bytes,
        dtype    u8  (0 = float32, the only defined code),
        rank     u8, dims u32 * rank,
        offset   u64 (byte offset into the payload)
    payload_len u64
    payload     raw little-endian float32 data, entries contiguous in
                table order
    crc32   u32 of every byte before it (zlib.crc32)

The writer is fully deterministic, so save -> load -> save reproduces the
file byte for byte.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"ACNX"
VERSION = 1
DTYPE_F32 = 0


def save(path: str | Path, state: dict[str, np.ndarray]) -> None:
    """Write named arrays; values are cast to float32."""
    if not state:
        raise CheckpointError("refusing to write a checkpoint with no entries")
    names = sorted(state)
    for name in names:
        if not name:
            raise CheckpointError("empty tensor name")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(names))
    arrays = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        nb = name.encode("utf-8")
        out += struct.pack("<I", len(nb))
        out += nb
        out += struct.pack("<BB", DTYPE_F32, arr.ndim)
        for d in arr.shape:
            out += struct.pack("<I", d)
        out += struct.pack("<Q", offset)
        arrays.append(arr)
        offset += arr.nbytes
    out += struct.pack("<Q", offset)
    for arr in arrays:
        out += arr.tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes, path) -> None:
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def load(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as {name: float32 array}, verifying CRC."""
    data = Path(path).read_bytes()
    if len(data) < 4 + 4 + 4 + 8 + 4:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4])
    if stored_crc != actual_crc:
        raise CheckpointError(
            f"{path}: CRC mismatch (stored {stored_crc:#010x}, "
            f"computed {actual_crc:#010x})"
        )
    r = _Reader(data[:-4], path)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    count = r.u32("entry count")

    entries: list[tuple[str, tuple[int, ...], int]] = []
    prev_name = b""
    expect_offset = 0
    for i in range(count):
        name_len = r.u32(f"entry {i} name length")
        nb = r.take(name_len, f"entry {i} name")
        try:
            name = nb.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"{path}: entry {i} name is not UTF-8") from e
        if nb <= prev_name:
            raise CheckpointError(
                f"{path}: entry names out of order at {name!r}"
            )
        prev_name = nb
        dtype = r.u8(f"entry {name} dtype")
        if dtype != DTYPE_F32:
            raise CheckpointError(f"{path}: entry {name} has unknown dtype {dtype}")
        rank = r.u8(f"entry {name} rank")
        dims = tuple(r.u32(f"entry {name} dim {k}") for k in range(rank))
        offset = r.u64(f"entry {name} offset")
        if offset != expect_offset:
            raise CheckpointError(
                f"{path}: entry {name} offset {offset} != expected {expect_offset}"
            )
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        expect_offset += size * 4
        entries.append((name, dims, size))

    payload_len = r.u64("payload length")
    if payload_len != expect_offset:
        raise CheckpointError(
            f"{path}: payload length {payload_len} != table total {expect_offset}"
        )
    payload = r.take(payload_len, "payload")
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: {len(r.data) - r.pos} trailing bytes")

    state: dict[str, np.ndarray] = {}
    pos = 0
    for name, dims, size in entries:
        flat = np.frombuffer(payload, dtype="<f4", count=size, offset=pos)
        state[name] = flat.reshape(dims).astype(np.float32)
        pos += size * 4
    return state


@dataclass
class ApplyReport:
    """What matched and what did not when loading a state into a model."""

    applied: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    unexpected: list[str] = field(default_factory=list)
    mismatched: list[tuple[str, tuple[int, ...], tuple[int, ...]]] = field(
        default_factory=list
    )

    @property
    def clean(self) -> bool:
        return not (self.missing or self.unexpected or self.mismatched)

    def summary(self) -> str:
        parts = [f"applied={len(self.applied)}"]
        for label, items in (
            ("missing", self.missing),
            ("unexpected", self.unexpected),
            ("mismatched", [m[0] for m in self.mismatched]),
        ):
            if items:
                shown = ", ".join(items[:5]) + (", ..." if len(items) > 5 else "")
                parts.append(f"{label}={len(items)} [{shown}]")
        return "; ".join(parts)


def apply(model, state: dict[str, np.ndarray], strict: bool = True) -> ApplyReport:
    """Copy checkpoint arrays into a model's parameters and buffers in place.

    Strict mode raises unless every model tensor is matched exactly and the
    file holds nothing else.
    """
    report = ApplyReport()
    model_state = dict(model.named_state())
    for name, arr in model_state.items():
        if name not in state:
            report.missing.append(name)
            continue
        loaded = state[name]
        if loaded.shape != arr.shape:
            report.mismatched.append((name, tuple(loaded.shape), tuple(arr.shape)))
            continue
        arr[...] = loaded.astype(arr.dtype)
        report.applied.append(name)
    report.unexpected = sorted(set(state) - set(model_state))
    if strict and not report.clean:
        raise CheckpointError(f"state does not match model: {report.summary()}")
    return report


def save_model(path: str | Path, model) -> None:
    save(path, dict(model.named_state()))
