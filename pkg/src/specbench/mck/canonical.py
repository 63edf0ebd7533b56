"""Canonical, length-prefixed byte encoding of plain records.

A record is built from ``None``, ``bool``, ``int``, ``str``, lists/tuples and
dicts with string keys. Dict keys are sorted so the encoding does not depend
on insertion order.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Any


def encode(value: Any) -> bytes:
    out = bytearray()
    _encode(value, out)
    return bytes(out)


def _encode(value: Any, out: bytearray) -> None:
    if value is None:
        out += b"N"
    elif value is True:
        out += b"T"
    elif value is False:
        out += b"F"
    elif isinstance(value, int):
        raw = str(value).encode()
        out += b"i" + struct.pack(">I", len(raw)) + raw
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"s" + struct.pack(">I", len(raw)) + raw
    elif isinstance(value, (list, tuple)):
        out += b"l" + struct.pack(">I", len(value))
        for item in value:
            _encode(item, out)
    elif isinstance(value, dict):
        out += b"d" + struct.pack(">I", len(value))
        for key in sorted(value):
            if not isinstance(key, str):
                raise TypeError(f"record keys must be str, got {key!r}")
            _encode(key, out)
            _encode(value[key], out)
    else:
        raise TypeError(f"cannot canonically encode {type(value).__name__}")


def fingerprint(value: Any) -> int:
    """Stable unsigned 64-bit fingerprint of a record."""
    digest = hashlib.blake2b(encode(value), digest_size=8).digest()
    return int.from_bytes(digest, "big")
