"""Canonical byte encoding for everything that gets hashed or signed.

Rules, applied uniformly:
  - fixed field order per record type, one-byte type tag up front
  - integers big-endian fixed width (u32/u64/i64), no varints
  - strings are UTF-8 with a 4-byte big-endian length prefix
  - byte arrays are length-prefixed the same way, no padding
  - decoding is strict: trailing bytes are an error, so encoding is
    injective on valid records

App payloads are field maps: field name -> tagged value, encoded sorted by
name. The tag set is closed (int/str/bytes/digest) on purpose; anything
fancier belongs in its own record type.
"""

from __future__ import annotations

import struct
from typing import Any

from .crypto import DIGEST_SIZE

U32_MAX = 2**32 - 1
U64_MAX = 2**64 - 1

# field map value tags
TAG_INT = 1
TAG_STR = 2
TAG_BYTES = 3
TAG_DIGEST = 4


class EncodingError(ValueError):
    """Raised when bytes do not decode as the requested record type."""


class Writer:
    """Accumulates a canonical encoding."""

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, value: int) -> None:
        if not 0 <= value <= 255:
            raise EncodingError(f"u8 out of range: {value}")
        self._parts.append(struct.pack(">B", value))

    def u32(self, value: int) -> None:
        if not 0 <= value <= U32_MAX:
            raise EncodingError(f"u32 out of range: {value}")
        self._parts.append(struct.pack(">I", value))

    def u64(self, value: int) -> None:
        if not 0 <= value <= U64_MAX:
            raise EncodingError(f"u64 out of range: {value}")
        self._parts.append(struct.pack(">Q", value))

    def i64(self, value: int) -> None:
        if not -(2**63) <= value < 2**63:
            raise EncodingError(f"i64 out of range: {value}")
        self._parts.append(struct.pack(">q", value))

    def raw(self, data: bytes, size: int) -> None:
        if len(data) != size:
            raise EncodingError(f"fixed field wants {size} bytes, got {len(data)}")
        self._parts.append(bytes(data))

    def digest(self, data: bytes) -> None:
        self.raw(data, DIGEST_SIZE)

    def lp_bytes(self, data: bytes) -> None:
        self.u32(len(data))
        self._parts.append(bytes(data))

    def string(self, text: str) -> None:
        self.lp_bytes(text.encode("utf-8"))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Strict mirror of Writer."""

    def __init__(self, data: bytes) -> None:
        self._data = bytes(data)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise EncodingError("truncated encoding")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def i64(self) -> int:
        return struct.unpack(">q", self._take(8))[0]

    def raw(self, size: int) -> bytes:
        return self._take(size)

    def digest(self) -> bytes:
        return self._take(DIGEST_SIZE)

    def lp_bytes(self) -> bytes:
        return self._take(self.u32())

    def string(self) -> str:
        try:
            return self.lp_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"bad utf-8 in string field: {exc}") from exc

    def finish(self) -> None:
        if self._pos != len(self._data):
            raise EncodingError(f"{len(self._data) - self._pos} trailing bytes")


FieldValue = Any  # int | str | bytes; 32-byte values round-trip as digests


def encode_fields(fields: dict[str, FieldValue]) -> bytes:
    """Canonical encoding of an app payload (sorted field map, tag 'F')."""
    w = Writer()
    w.u8(ord("F"))
    w.u32(len(fields))
    for name in sorted(fields):
        value = fields[name]
        w.string(name)
        if isinstance(value, bool):
            raise EncodingError(f"field {name}: bool is not a payload type")
        if isinstance(value, int):
            w.u8(TAG_INT)
            w.i64(value)
        elif isinstance(value, str):
            w.u8(TAG_STR)
            w.string(value)
        elif isinstance(value, (bytes, bytearray)):
            value = bytes(value)
            if len(value) == DIGEST_SIZE:
                w.u8(TAG_DIGEST)
                w.digest(value)
            else:
                w.u8(TAG_BYTES)
                w.lp_bytes(value)
        else:
            raise EncodingError(f"field {name}: unsupported type {type(value).__name__}")
    return w.getvalue()


def decode_fields(data: bytes) -> dict[str, FieldValue]:
    """Inverse of encode_fields; rejects malformed or unsorted input."""
    r = Reader(data)
    if r.u8() != ord("F"):
        raise EncodingError("not a field map encoding")
    count = r.u32()
    fields: dict[str, FieldValue] = {}
    prev = None
    for _ in range(count):
        name = r.string()
        if prev is not None and name <= prev:
            raise EncodingError("field map not in canonical order")
        prev = name
        tag = r.u8()
        if tag == TAG_INT:
            fields[name] = r.i64()
        elif tag == TAG_STR:
            fields[name] = r.string()
        elif tag == TAG_BYTES:
            raw = r.lp_bytes()
            if len(raw) == DIGEST_SIZE:
                raise EncodingError("32-byte value must use the digest tag")
            fields[name] = raw
        elif tag == TAG_DIGEST:
            fields[name] = r.digest()
        else:
            raise EncodingError(f"unknown field tag {tag}")
    r.finish()
    return fields
