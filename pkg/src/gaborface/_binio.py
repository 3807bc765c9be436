"""Small helpers for the versioned little-endian binary containers.

Every persisted artifact starts with a 4-byte magic, a uint32 format
version and a 32-byte SHA-256 provenance digest, followed by
format-specific fields.  Nothing here writes timestamps or other
non-deterministic bytes: identical inputs must produce bit-identical
files.
"""

from __future__ import annotations

import hashlib
import struct
from typing import BinaryIO

import numpy as np

from .errors import FormatError

ZERO_DIGEST = b"\x00" * 32


def sha256_parts(*parts) -> bytes:
    """Digest a sequence of parts (bytes, str, int, float, ndarray).

    Each part is framed with its type tag and length so that
    concatenation ambiguities cannot collide.
    """
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, bytes):
            tag, payload = b"B", p
        elif isinstance(p, str):
            tag, payload = b"S", p.encode("utf-8")
        elif isinstance(p, bool):
            tag, payload = b"I", str(int(p)).encode()
        elif isinstance(p, int):
            tag, payload = b"I", str(p).encode()
        elif isinstance(p, float):
            tag, payload = b"F", struct.pack("<d", p)
        elif isinstance(p, np.ndarray):
            tag = b"A"
            payload = (
                str(p.dtype).encode()
                + b"|" + str(p.shape).encode()
                + b"|" + np.ascontiguousarray(p).tobytes()
            )
        else:
            raise TypeError(f"unhashable part type: {type(p)!r}")
        h.update(tag)
        h.update(struct.pack("<Q", len(payload)))
        h.update(payload)
    return h.digest()


def write_header(fh: BinaryIO, magic: bytes, version: int, provenance: bytes) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    if len(provenance) != 32:
        raise ValueError("provenance digest must be 32 bytes")
    fh.write(magic)
    fh.write(struct.pack("<I", version))
    fh.write(provenance)


def read_header(fh: BinaryIO, magic: bytes, version: int) -> bytes:
    """Validate magic/version, return the provenance digest."""
    got = fh.read(4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    (ver,) = struct.unpack("<I", read_exact(fh, 4))
    if ver != version:
        raise FormatError(f"unsupported version {ver}, expected {version}")
    return read_exact(fh, 32)


def read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def write_str(fh: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def read_str(fh: BinaryIO) -> str:
    (n,) = struct.unpack("<I", read_exact(fh, 4))
    return read_exact(fh, n).decode("utf-8")


def write_array(fh: BinaryIO, a: np.ndarray, dtype) -> None:
    fh.write(np.ascontiguousarray(a, dtype=dtype).tobytes())


def read_array(fh: BinaryIO, shape, dtype) -> np.ndarray:
    n = int(np.prod(shape)) if shape else 1
    raw = read_exact(fh, n * np.dtype(dtype).itemsize)
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
