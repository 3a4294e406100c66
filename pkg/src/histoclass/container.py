"""Versioned little-endian binary container shared by the model files.

Layout::

    magic      4 bytes   (b"ACNN" or b"ASVM")
    version    u32
    length     u64       payload byte count
    payload    length bytes
    crc32      u32       over magic..payload

Every failure raises a ModelFormatError subclass whose ``code`` names it.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIQ")
_CRC = struct.Struct("<I")


class ModelFormatError(ValueError):
    code = "format"


class BadMagicError(ModelFormatError):
    code = "bad-magic"


class UnsupportedVersionError(ModelFormatError):
    code = "version-mismatch"


class TruncatedFileError(ModelFormatError):
    code = "truncated"


class ChecksumError(ModelFormatError):
    code = "checksum"


def pack(magic: bytes, version: int, payload: bytes) -> bytes:
    head = _HEADER.pack(magic, version, len(payload)) + payload
    return head + _CRC.pack(zlib.crc32(head) & 0xFFFFFFFF)


def unpack(data: bytes, magic: bytes, version: int) -> bytes:
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"file holds {len(data)} bytes, header needs {_HEADER.size}")
    got_magic, got_version, length = _HEADER.unpack_from(data)
    if got_magic != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {got_magic!r}")
    if got_version != version:
        raise UnsupportedVersionError(f"format version {got_version}, reader supports {version}")
    end = _HEADER.size + length
    if len(data) < end + _CRC.size:
        raise TruncatedFileError(f"payload declares {length} bytes but file ends early")
    (crc,) = _CRC.unpack_from(data, end)
    if zlib.crc32(data[:end]) & 0xFFFFFFFF != crc:
        raise ChecksumError("CRC-32 mismatch")
    return data[_HEADER.size:end]


def write_file(path: Path, magic: bytes, version: int, payload: bytes) -> None:
    Path(path).write_bytes(pack(magic, version, payload))


def read_file(path: Path, magic: bytes, version: int) -> bytes:
    return unpack(Path(path).read_bytes(), magic, version)


class Reader:
    """Sequential little-endian field reader over a payload."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError("payload shorter than its declared contents")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def f64_array(self, n: int) -> np.ndarray:
        return np.frombuffer(self._take(8 * n), dtype="<f8").astype(np.float64)

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise ModelFormatError(f"{len(self.buf) - self.pos} trailing payload bytes")


def u32(v: int) -> bytes:
    return struct.pack("<I", v)


def f64(v: float) -> bytes:
    return struct.pack("<d", v)


def f64_array(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()
