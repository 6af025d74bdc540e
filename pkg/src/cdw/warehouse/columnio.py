"""Per-column binary files: int64 fixed width, strings length-prefixed.

Layout: 4-byte magic, 1-byte dtype tag (i/s), u64 row count, payload.
Integrity is enforced by SHA-256 checksums recorded in the warehouse manifest.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

from ..errors import CorruptTable

MAGIC = b"CDW1"
_HEADER = struct.Struct("<4sBQ")
_INT = struct.Struct("<q")
_LEN = struct.Struct("<I")


def encode_column(dtype: str, values: list) -> bytes:
    parts = [_HEADER.pack(MAGIC, ord(dtype), len(values))]
    if dtype == "i":
        parts.extend(_INT.pack(v) for v in values)
    elif dtype == "s":
        for v in values:
            raw = v.encode("utf-8")
            parts.append(_LEN.pack(len(raw)))
            parts.append(raw)
    else:
        raise ValueError(f"unknown column dtype {dtype!r}")
    return b"".join(parts)


def decode_column(data: bytes, path: str = "<memory>") -> tuple[str, list]:
    if len(data) < _HEADER.size:
        raise CorruptTable(f"{path}: truncated header")
    magic, tag, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptTable(f"{path}: bad magic")
    dtype = chr(tag)
    offset = _HEADER.size
    values: list = []
    try:
        if dtype == "i":
            for _ in range(count):
                values.append(_INT.unpack_from(data, offset)[0])
                offset += _INT.size
        elif dtype == "s":
            for _ in range(count):
                (length,) = _LEN.unpack_from(data, offset)
                offset += _LEN.size
                values.append(data[offset:offset + length].decode("utf-8"))
                offset += length
        else:
            raise CorruptTable(f"{path}: unknown dtype tag {tag}")
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptTable(f"{path}: undecodable payload ({exc})")
    if offset != len(data):
        raise CorruptTable(f"{path}: trailing bytes after {count} values")
    return dtype, values


def write_column(path: Path, dtype: str, values: list) -> str:
    """Write a column file; returns its SHA-256 hex digest."""
    data = encode_column(dtype, values)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_column(path: Path, expected_sha256: str | None = None) -> tuple[str, list]:
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CorruptTable(f"{path}: referenced column file missing")
    if expected_sha256 is not None:
        actual = hashlib.sha256(data).hexdigest()
        if actual != expected_sha256:
            raise CorruptTable(f"{path}: checksum mismatch")
    return decode_column(data, str(path))
