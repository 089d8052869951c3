"""Bit-exact binary container for named float32 tensors.

Layout (all integers little-endian):

    magic "DAGF" | version u32 | entry count u32 |
    per entry: name length u32, UTF-8 name, dtype tag u8 (0 = f32),
               rank u32, dims u32 * rank, payload f32 LE |
    trailing CRC32 (u32) of all preceding bytes

Entries are written in sorted-name order, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"DAGF"
VERSION = 1
DTYPE_F32 = 0


def save_bundle(path, tensors: dict[str, np.ndarray]) -> None:
    names = sorted(tensors)
    if len(set(names)) != len(names):
        raise DataError("duplicate tensor names in bundle")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(names))]
    for name in names:
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", DTYPE_F32))
        parts.append(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            parts.append(struct.pack("<I", dim))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    Path(path).write_bytes(body + struct.pack("<I", crc))


def load_bundle(path) -> dict[str, np.ndarray]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16:
        raise DataError(f"{path}: too short to be a checkpoint ({len(data)} bytes)")
    body, stored_crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"{path}: CRC mismatch; checkpoint is corrupt")
    if body[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {body[:4]!r} (byte offset 0)")
    version, count = struct.unpack("<II", body[4:12])
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", body[pos : pos + 4])
        pos += 4
        name = body[pos : pos + name_len].decode("utf-8")
        pos += name_len
        tag = body[pos]
        pos += 1
        if tag != DTYPE_F32:
            raise DataError(f"{path}: unknown dtype tag {tag} for {name!r}")
        (rank,) = struct.unpack("<I", body[pos : pos + 4])
        pos += 4
        dims = struct.unpack(f"<{rank}I", body[pos : pos + 4 * rank]) if rank else ()
        pos += 4 * rank
        n_elems = int(np.prod(dims)) if rank else 1
        payload = body[pos : pos + 4 * n_elems]
        if len(payload) != 4 * n_elems:
            raise DataError(f"{path}: truncated payload for {name!r} (byte offset {pos})")
        pos += 4 * n_elems
        if name in out:
            raise DataError(f"{path}: duplicate tensor name {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if pos != len(body):
        raise DataError(f"{path}: {len(body) - pos} trailing bytes after last entry")
    return out
