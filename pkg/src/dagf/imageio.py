"""Minimal 8-bit RGB image codec: PNG (truecolor, non-interlaced) and
binary PPM (P6).

Decoding validates structure as it goes and raises `DataError` with the
byte offset of the problem.  Encoding is canonical and deterministic
(filter 0 rows, fixed zlib level), so identical pixels produce identical
bytes.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import DataError
from .tensor import Tensor

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _fail(path, offset, msg):
    raise DataError(f"{path}: {msg} (byte offset {offset})")


# -- PNG ------------------------------------------------------------------------


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw, height, width, path):
    """Undo per-row PNG filters; returns (height, width, 3) uint8."""
    stride = width * 3
    if len(raw) != (stride + 1) * height:
        _fail(path, len(raw), f"decompressed stream is {len(raw)} bytes, "
                              f"expected {(stride + 1) * height}")
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int32)
    for y in range(height):
        ftype = raw[y * (stride + 1)]
        row = np.frombuffer(
            raw, dtype=np.uint8, count=stride, offset=y * (stride + 1) + 1
        ).astype(np.int32)
        if ftype == 0:
            cur = row
        elif ftype == 1:  # Sub: cumulative within each byte lane
            cur = row.copy()
            for lane in range(3):
                cur[lane::3] = np.cumsum(cur[lane::3]) % 256
        elif ftype == 2:  # Up
            cur = (row + prev) % 256
        elif ftype == 3:  # Average
            cur = np.zeros(stride, dtype=np.int32)
            for i in range(stride):
                left = cur[i - 3] if i >= 3 else 0
                cur[i] = (row[i] + (left + prev[i]) // 2) % 256
        elif ftype == 4:  # Paeth
            cur = np.zeros(stride, dtype=np.int32)
            for i in range(stride):
                left = cur[i - 3] if i >= 3 else 0
                upleft = prev[i - 3] if i >= 3 else 0
                cur[i] = (row[i] + _paeth(left, int(prev[i]), upleft)) % 256
        else:
            _fail(path, y * (stride + 1), f"unknown row filter {ftype}")
        out[y] = cur.astype(np.uint8)
        prev = cur
    return out.reshape(height, width, 3)


def _decode_png(data: bytes, path) -> np.ndarray:
    if len(data) < 8 or data[:8] != PNG_SIGNATURE:
        _fail(path, 0, "not a PNG file (bad signature)")
    pos = 8
    header = None
    idat = bytearray()
    seen_end = False
    while pos < len(data):
        if pos + 8 > len(data):
            _fail(path, pos, "truncated chunk header")
        length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
        body_at = pos + 8
        if body_at + length + 4 > len(data):
            _fail(path, pos, f"truncated {ctype.decode('latin1')} chunk")
        body = data[body_at : body_at + length]
        crc = struct.unpack(">I", data[body_at + length : body_at + length + 4])[0]
        if crc != zlib.crc32(ctype + body) & 0xFFFFFFFF:
            _fail(path, body_at + length, f"CRC mismatch in {ctype.decode('latin1')}")
        if ctype == b"IHDR":
            if length != 13:
                _fail(path, pos, "malformed IHDR")
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat.extend(body)
        elif ctype == b"IEND":
            seen_end = True
            break
        pos = body_at + length + 4
    if header is None:
        _fail(path, 8, "missing IHDR")
    if not seen_end:
        _fail(path, len(data), "missing IEND (truncated file)")
    width, height, depth, color, comp, filt, interlace = header
    if depth != 8 or color != 2:
        _fail(path, 16, f"unsupported PNG (bit depth {depth}, color type {color}); "
                        "only 8-bit RGB is handled")
    if comp != 0 or filt != 0:
        _fail(path, 16, "unsupported compression/filter method")
    if interlace != 0:
        _fail(path, 16, "interlaced PNG not supported")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        _fail(path, 8, f"corrupt IDAT stream ({exc})")
    return _unfilter(raw, height, width, path)


def _write_chunk(out, ctype: bytes, body: bytes):
    out.append(struct.pack(">I", len(body)))
    out.append(ctype)
    out.append(body)
    out.append(struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF))


def _encode_png(pixels: np.ndarray) -> bytes:
    height, width = pixels.shape[:2]
    stride = width * 3
    raw = bytearray()
    flat = pixels.reshape(height, stride)
    for y in range(height):
        raw.append(0)
        raw.extend(flat[y].tobytes())
    parts = [PNG_SIGNATURE]
    _write_chunk(parts, b"IHDR", struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0))
    _write_chunk(parts, b"IDAT", zlib.compress(bytes(raw), 6))
    _write_chunk(parts, b"IEND", b"")
    return b"".join(parts)


# -- PPM (P6) --------------------------------------------------------------------


def _decode_ppm(data: bytes, path) -> np.ndarray:
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            _fail(path, start, "truncated PPM header")
        return data[start:pos]

    if token() != b"P6":
        _fail(path, 0, "not a binary PPM (P6) file")
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError:
        _fail(path, pos, "malformed PPM header")
    if maxval != 255:
        _fail(path, pos, f"unsupported PPM maxval {maxval}; only 255 is handled")
    pos += 1  # single whitespace after maxval
    need = width * height * 3
    if len(data) - pos < need:
        _fail(path, len(data), f"truncated pixel data ({len(data) - pos} of {need} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return arr.reshape(height, width, 3)


def _encode_ppm(pixels: np.ndarray) -> bytes:
    height, width = pixels.shape[:2]
    return b"P6\n%d %d\n255\n" % (width, height) + pixels.tobytes()


# -- public API --------------------------------------------------------------------


def load_image(path) -> Tensor:
    """Read an 8-bit RGB PNG or P6 PPM into a (3, H, W) tensor in [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:8] == PNG_SIGNATURE:
        pixels = _decode_png(data, path)
    elif data[:2] == b"P6":
        pixels = _decode_ppm(data, path)
    else:
        _fail(path, 0, "unrecognized image format (expected PNG or P6 PPM)")
    chw = pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)
    return Tensor(chw)


def save_image(path, image) -> None:
    """Write a (3, H, W) tensor/array in [0, 1] as PNG or PPM by extension.

    Quantization is round-half-up with clamping to [0, 255].
    """
    path = Path(path)
    arr = np.asarray(image.data if isinstance(image, Tensor) else image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"{path}: expected a (3, H, W) image, got {arr.shape}")
    quant = np.clip(np.floor(arr * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8)
    pixels = np.ascontiguousarray(quant.transpose(1, 2, 0))
    suffix = path.suffix.lower()
    if suffix == ".png":
        payload = _encode_png(pixels)
    elif suffix in (".ppm", ".pnm"):
        payload = _encode_ppm(pixels)
    else:
        raise DataError(f"{path}: unsupported output format {suffix!r} (use .png or .ppm)")
    path.write_bytes(payload)
