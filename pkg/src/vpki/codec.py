"""Canonical byte encoding: the substrate every signature is computed over.

Rules: fields in declaration order, unsigned integers fixed-width big-endian,
byte strings 32-bit length-prefixed, sequences 32-bit count-prefixed, no
padding. The encoding is deterministic, injective and self-delimiting, so
structurally equal values always produce byte-identical encodings.
"""

from __future__ import annotations

import struct

from .errors import DecodeError

# Upper bound on any single length/count field; matches the wire payload cap.
MAX_ITEM = 16 * 1024 * 1024


class Writer:
    def __init__(self):
        self._buf = bytearray()

    def u8(self, v: int) -> "Writer":
        self._buf += struct.pack(">B", v)
        return self

    def u16(self, v: int) -> "Writer":
        self._buf += struct.pack(">H", v)
        return self

    def u32(self, v: int) -> "Writer":
        self._buf += struct.pack(">I", v)
        return self

    def u64(self, v: int) -> "Writer":
        self._buf += struct.pack(">Q", v)
        return self

    def raw(self, b: bytes) -> "Writer":
        self._buf += b
        return self

    def bytes_(self, b: bytes) -> "Writer":
        if len(b) > MAX_ITEM:
            raise ValueError(f"byte string too long: {len(b)}")
        self.u32(len(b))
        self._buf += b
        return self

    def str_(self, s: str) -> "Writer":
        return self.bytes_(s.encode("utf-8"))

    def bool_(self, v: bool) -> "Writer":
        return self.u8(1 if v else 0)

    def take(self) -> bytes:
        return bytes(self._buf)


class Reader:
    def __init__(self, data: bytes):
        self._data = memoryview(data)
        self._pos = 0

    def _read(self, n: int) -> memoryview:
        if n < 0 or self._pos + n > len(self._data):
            raise DecodeError(f"truncated: need {n} bytes at offset {self._pos}")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._read(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._read(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._read(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._read(8))[0]

    def raw(self, n: int) -> bytes:
        return bytes(self._read(n))

    def bytes_(self) -> bytes:
        n = self.u32()
        if n > MAX_ITEM:
            raise DecodeError(f"declared length {n} exceeds cap")
        return bytes(self._read(n))

    def str_(self) -> str:
        try:
            return self.bytes_().decode("utf-8")
        except UnicodeDecodeError as e:
            raise DecodeError(f"invalid UTF-8: {e}") from e

    def bool_(self) -> bool:
        v = self.u8()
        if v not in (0, 1):
            raise DecodeError(f"invalid boolean byte {v}")
        return v == 1

    def count(self) -> int:
        n = self.u32()
        if n > MAX_ITEM:
            raise DecodeError(f"declared count {n} exceeds cap")
        return n

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_eof(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError(f"{len(self._data) - self._pos} trailing bytes")


def expect_tag(r: Reader, tag: bytes) -> None:
    got = r.raw(len(tag))
    if got != tag:
        raise DecodeError(f"bad type tag {got!r}, expected {tag!r}")
