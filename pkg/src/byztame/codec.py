"""Canonical value encoding, stable digests, and signed-value containers.

Every value that crosses a register, gets signed, or lands in an artifact
file is serialized with the same canonical encoding so that digests and
signature tags are reproducible across runs and platforms.

Encoding (length prefixes are 4-byte big-endian):

    None            -> b"N"
    False / True    -> b"F" / b"T"
    int             -> b"I" + sign byte (b"+"/b"-") + len + magnitude bytes
    bytes           -> b"B" + len + raw
    str             -> b"S" + len + utf-8
    tuple / list    -> b"L" + count + encoded items
    set / frozenset -> b"E" + count + encoded items, sorted bytewise
    dict            -> b"D" + count + (key + value) pairs, sorted by key bytes
    SignedValue     -> b"V" + enc(signer) + enc(payload) + enc(tag)

Lists decode as tuples and sets as frozensets: canonical form is immutable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from hashlib import blake2b
from typing import Any

_U32 = struct.Struct(">I")


class CodecError(ValueError):
    """Raised for values outside the canonical vocabulary or corrupt bytes."""


@dataclass(frozen=True)
class SignedValue:
    """A payload bound to a signer identity by an authority-issued tag.

    The payload is kept structured for convenience; the tag is always
    computed over the payload's canonical encoding.
    """

    signer: int
    payload: Any
    tag: bytes
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.signer, self.tag)))

    def __hash__(self):
        return self._hash


def _encode(value) -> bytes:
    if value is None:
        return b"N"
    if value is True:
        return b"T"
    if value is False:
        return b"F"
    kind = type(value)
    if kind is int:
        mag = value.to_bytes((abs(value).bit_length() + 7) // 8, "big", signed=False) \
            if value >= 0 else (-value).to_bytes(((-value).bit_length() + 7) // 8, "big")
        sign = b"+" if value >= 0 else b"-"
        return b"I" + sign + _U32.pack(len(mag)) + mag
    if kind is bytes:
        return b"B" + _U32.pack(len(value)) + value
    if kind is str:
        raw = value.encode("utf-8")
        return b"S" + _U32.pack(len(raw)) + raw
    if kind is tuple or kind is list:
        parts = [encode(item) for item in value]
        return b"L" + _U32.pack(len(parts)) + b"".join(parts)
    if kind is frozenset or kind is set:
        parts = sorted(encode(item) for item in value)
        return b"E" + _U32.pack(len(parts)) + b"".join(parts)
    if kind is dict:
        pairs = sorted((encode(k), encode(v)) for k, v in value.items())
        return b"D" + _U32.pack(len(pairs)) + b"".join(k + v for k, v in pairs)
    if kind is SignedValue:
        return b"V" + encode(value.signer) + encode(value.payload) + encode(value.tag)
    raise CodecError(f"cannot canonically encode {kind.__name__}")


@lru_cache(maxsize=16384)
def _encode_cached(value) -> bytes:
    return _encode(value)


def encode(value) -> bytes:
    """Canonical byte encoding of a value; raises CodecError if unsupported."""
    try:
        return _encode_cached(value)
    except TypeError:
        # unhashable containers (plain dict/list/set) take the uncached path
        return _encode(value)


def digest(value) -> str:
    """Stable 64-bit hex digest of a value's canonical encoding."""
    return blake2b(encode(value), digest_size=8).hexdigest()


def _decode(data: bytes, off: int):
    tag = data[off:off + 1]
    off += 1
    if tag == b"N":
        return None, off
    if tag == b"T":
        return True, off
    if tag == b"F":
        return False, off
    if tag == b"I":
        sign = data[off:off + 1]
        (n,) = _U32.unpack_from(data, off + 1)
        mag = int.from_bytes(data[off + 5:off + 5 + n], "big")
        return (mag if sign == b"+" else -mag), off + 5 + n
    if tag == b"B":
        (n,) = _U32.unpack_from(data, off)
        return data[off + 4:off + 4 + n], off + 4 + n
    if tag == b"S":
        (n,) = _U32.unpack_from(data, off)
        return data[off + 4:off + 4 + n].decode("utf-8"), off + 4 + n
    if tag == b"L":
        (n,) = _U32.unpack_from(data, off)
        off += 4
        items = []
        for _ in range(n):
            item, off = _decode(data, off)
            items.append(item)
        return tuple(items), off
    if tag == b"E":
        (n,) = _U32.unpack_from(data, off)
        off += 4
        items = []
        for _ in range(n):
            item, off = _decode(data, off)
            items.append(item)
        return frozenset(items), off
    if tag == b"D":
        (n,) = _U32.unpack_from(data, off)
        off += 4
        out = {}
        for _ in range(n):
            k, off = _decode(data, off)
            v, off = _decode(data, off)
            out[k] = v
        return out, off
    if tag == b"V":
        signer, off = _decode(data, off)
        payload, off = _decode(data, off)
        sig, off = _decode(data, off)
        return SignedValue(signer, payload, sig), off
    raise CodecError(f"bad type tag {tag!r} at offset {off - 1}")


def decode(data: bytes):
    """Inverse of encode; raises CodecError on trailing or corrupt bytes."""
    try:
        value, off = _decode(data, 0)
    except (IndexError, struct.error) as exc:
        raise CodecError(f"truncated canonical value: {exc}") from exc
    if off != len(data):
        raise CodecError(f"{len(data) - off} trailing bytes after canonical value")
    return value


def to_hex(value) -> str:
    """Canonical encoding rendered as lowercase hex (artifact-file form)."""
    return encode(value).hex()


def from_hex(text: str):
    return decode(bytes.fromhex(text))
