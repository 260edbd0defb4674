"""Shared helpers for the toolkit's binary asset formats.

All formats are little-endian with a 4-byte ASCII magic, a u32 version and a
trailing CRC32 (IEEE, as in zlib) computed over every byte that precedes it.
Readers fail deterministically with the byte offset of the problem; writers
are atomic (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib


class HairIOError(ValueError):
    """Malformed or truncated asset file; `offset` is the failing byte."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class Reader:
    """Cursor over an in-memory blob with offset-aware errors."""

    def __init__(self, blob: bytes, name: str = "<blob>"):
        self.blob = blob
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise HairIOError(
                f"{self.name}: truncated, wanted {n} bytes", offset=self.pos)
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes):
        got = self.take(4)
        if got != expected:
            raise HairIOError(
                f"{self.name}: bad magic {got!r}, expected {expected!r}",
                offset=0)

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]

    def check_crc(self):
        """Verify the trailing CRC32 over all bytes before it."""
        if len(self.blob) < self.pos + 4:
            raise HairIOError(f"{self.name}: missing CRC32 trailer",
                              offset=len(self.blob))
        body, stored = self.blob[:-4], self.blob[-4:]
        if self.pos != len(body):
            raise HairIOError(
                f"{self.name}: {len(body) - self.pos} unparsed bytes before CRC",
                offset=self.pos)
        expect = struct.unpack("<I", stored)[0]
        actual = zlib.crc32(body) & 0xFFFFFFFF
        if actual != expect:
            raise HairIOError(
                f"{self.name}: CRC mismatch (stored {expect:#010x}, "
                f"computed {actual:#010x})", offset=len(body))


def finish(parts) -> bytes:
    """Concatenate byte parts and append the CRC32 trailer."""
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def atomic_write(path, blob: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_file(path) -> Reader:
    with open(path, "rb") as fh:
        return Reader(fh.read(), name=os.path.basename(os.fspath(path)))
