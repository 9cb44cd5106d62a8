"""Ordered universe, bounds, the aggregate monoid and canonical encodings.

Every backend works on the 40-byte canonical key encoding internally, so
bound comparisons reduce to ``bytes`` comparisons:

* ``MINUS_INF`` is ``b""`` (sorts before any key),
* ``PLUS_INF`` is 41 ``0xff`` bytes (sorts after any 40-byte key).
"""
from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

KEY_LEN = 40
ID_LEN = 32

MINUS_INF = b""
PLUS_INF = b"\xff" * (KEY_LEN + 1)


class RSOSError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(RSOSError):
    pass


class PreconditionError(RSOSError, ValueError):
    pass


class DecodeError(RSOSError, ValueError):
    pass


@dataclass(frozen=True, order=True)
class ItemKey:
    """A record key: ``(timestamp, id)`` ordered lexicographically."""

    timestamp: int
    id: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.timestamp < 1 << 64:
            raise ValueError(f"timestamp out of range: {self.timestamp}")
        if len(self.id) != ID_LEN:
            raise ValueError(f"id must be {ID_LEN} bytes, got {len(self.id)}")

    def encode(self) -> bytes:
        return encode_key(self)

    def __repr__(self) -> str:
        return f"ItemKey({self.timestamp}, {self.id.hex()[:8]}..)"


def encode_key(k: ItemKey) -> bytes:
    return struct.pack(">Q", k.timestamp) + bytes(k.id)


def decode_key(data: bytes) -> ItemKey:
    if len(data) != KEY_LEN:
        raise DecodeError(f"key encoding must be {KEY_LEN} bytes, got {len(data)}")
    return ItemKey(struct.unpack(">Q", data[:8])[0], bytes(data[8:]))


def compare_keys(a: ItemKey, b: ItemKey) -> int:
    """Return -1, 0 or 1."""
    ka, kb = (a.timestamp, a.id), (b.timestamp, b.id)
    return (ka > kb) - (ka < kb)


class BoundKind(enum.IntEnum):
    MINUS_INFINITY = 0
    KEY = 1
    PLUS_INFINITY = 2


@dataclass(frozen=True)
class Bound:
    kind: BoundKind
    key: ItemKey | None = None

    @classmethod
    def minus_inf(cls) -> "Bound":
        return cls(BoundKind.MINUS_INFINITY)

    @classmethod
    def plus_inf(cls) -> "Bound":
        return cls(BoundKind.PLUS_INFINITY)

    @classmethod
    def of(cls, key: ItemKey) -> "Bound":
        return cls(BoundKind.KEY, key)

    @property
    def raw(self) -> bytes:
        """Internal sortable form."""
        if self.kind is BoundKind.MINUS_INFINITY:
            return MINUS_INF
        if self.kind is BoundKind.PLUS_INFINITY:
            return PLUS_INF
        assert self.key is not None
        return encode_key(self.key)

    @classmethod
    def from_raw(cls, raw: bytes) -> "Bound":
        if raw == MINUS_INF:
            return cls.minus_inf()
        if raw == PLUS_INF:
            return cls.plus_inf()
        return cls.of(decode_key(raw))

    def __lt__(self, other: "Bound") -> bool:
        return self.raw < other.raw

    def __le__(self, other: "Bound") -> bool:
        return self.raw <= other.raw

    def __gt__(self, other: "Bound") -> bool:
        return self.raw > other.raw

    def __ge__(self, other: "Bound") -> bool:
        return self.raw >= other.raw

    def __repr__(self) -> str:
        if self.kind is BoundKind.KEY:
            return f"Bound({self.key!r})"
        return "Bound(-inf)" if self.kind is BoundKind.MINUS_INFINITY else "Bound(+inf)"


BoundLike = Union[Bound, ItemKey, bytes]


def raw_bound(b: BoundLike) -> bytes:
    """Accept a Bound, an ItemKey or an already-raw bound."""
    if isinstance(b, bytes):
        return b
    if isinstance(b, ItemKey):
        return encode_key(b)
    return b.raw


@dataclass(frozen=True)
class HalfOpenRange:
    lo: Bound
    hi: Bound

    def __post_init__(self) -> None:
        if self.hi < self.lo:
            raise PreconditionError(f"inverted range {self.lo!r} > {self.hi!r}")

    def __contains__(self, x: ItemKey) -> bool:
        return self.lo.raw <= encode_key(x) < self.hi.raw

    @classmethod
    def everything(cls) -> "HalfOpenRange":
        return cls(Bound.minus_inf(), Bound.plus_inf())


def encode_bound(b: Bound) -> bytes:
    if b.kind is BoundKind.KEY:
        assert b.key is not None
        return b"\x01" + encode_key(b.key)
    return bytes([b.kind])


def encode_raw_bound(raw: bytes) -> bytes:
    if raw == MINUS_INF:
        return b"\x00"
    if raw == PLUS_INF:
        return b"\x02"
    return b"\x01" + raw


def decode_raw_bound(data: bytes, pos: int = 0) -> tuple[bytes, int]:
    """Decode one bound at ``pos``; return (raw bound, next position)."""
    if pos >= len(data):
        raise DecodeError("truncated bound")
    tag = data[pos]
    if tag == 0:
        return MINUS_INF, pos + 1
    if tag == 2:
        return PLUS_INF, pos + 1
    if tag == 1:
        end = pos + 1 + KEY_LEN
        if end > len(data):
            raise DecodeError("truncated key bound")
        return bytes(data[pos + 1:end]), end
    raise DecodeError(f"unknown bound tag {tag:#x}")


def decode_bound(data: bytes) -> Bound:
    raw, end = decode_raw_bound(data)
    if end != len(data):
        raise DecodeError("trailing bytes after bound")
    return Bound.from_raw(raw)


@dataclass(frozen=True)
class SummaryConfig:
    """Which slice of the canonical key feeds the additive summary."""

    width_bits: int = 256
    slice_offset: int = 8
    slice_len: int = 32

    def __post_init__(self) -> None:
        if self.width_bits % 8 or not 8 <= self.width_bits <= 256:
            raise ConfigError(f"width_bits must be a multiple of 8 in [8, 256]: {self.width_bits}")
        if self.slice_len != self.width_bits // 8:
            raise ConfigError("slice_len must equal width_bits / 8")
        if self.slice_offset < 0 or self.slice_offset + self.slice_len > KEY_LEN:
            raise ConfigError("summary slice exceeds the key encoding")

    @property
    def mask(self) -> int:
        return (1 << self.width_bits) - 1

    def summary_raw(self, kb: bytes) -> int:
        """Summary value for an encoded key."""
        return int.from_bytes(kb[self.slice_offset:self.slice_offset + self.slice_len], "big")


DEFAULT_CONFIG = SummaryConfig()


@dataclass(frozen=True)
class Summary:
    width_bits: int
    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value < 1 << self.width_bits:
            raise ValueError("summary value out of range")

    def __add__(self, other: "Summary") -> "Summary":
        if other.width_bits != self.width_bits:
            raise ConfigError("summary width mismatch")
        return Summary(self.width_bits, (self.value + other.value) % (1 << self.width_bits))


@dataclass(frozen=True)
class Aggregate:
    """The pair (count, modular summary) of a set of items."""

    count: int
    summary: int
    width_bits: int = 256

    @classmethod
    def identity(cls, width_bits: int = 256) -> "Aggregate":
        return cls(0, 0, width_bits)

    def combine(self, other: "Aggregate") -> "Aggregate":
        return aggregate_combine(self, other)

    __add__ = combine

    def as_summary(self) -> Summary:
        return Summary(self.width_bits, self.summary)


def aggregate_combine(a: Aggregate, b: Aggregate) -> Aggregate:
    if a.width_bits != b.width_bits:
        raise ConfigError(f"aggregate width mismatch: {a.width_bits} vs {b.width_bits}")
    return Aggregate(a.count + b.count, (a.summary + b.summary) % (1 << a.width_bits), a.width_bits)


def summary_of_item(k: ItemKey, cfg: SummaryConfig = DEFAULT_CONFIG) -> Summary:
    return Summary(cfg.width_bits, cfg.summary_raw(encode_key(k)))


def aggregate_of_items(items: Sequence[ItemKey], cfg: SummaryConfig = DEFAULT_CONFIG) -> Aggregate:
    encoded = [encode_key(k) for k in items]
    for prev, cur in zip(encoded, encoded[1:]):
        if not prev < cur:
            raise PreconditionError("items must be strictly increasing")
    return aggregate_of_raw(encoded, cfg)


def aggregate_of_raw(encoded: Iterable[bytes], cfg: SummaryConfig = DEFAULT_CONFIG) -> Aggregate:
    n = 0
    total = 0
    for kb in encoded:
        n += 1
        total += cfg.summary_raw(kb)
    return Aggregate(n, total & cfg.mask, cfg.width_bits)


def leb128(n: int) -> bytes:
    if n < 0:
        raise ValueError("LEB128 encodes unsigned integers only")
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def read_leb128(data: bytes, pos: int = 0) -> tuple[int, int]:
    result = shift = 0
    while True:
        if pos >= len(data):
            raise DecodeError("truncated LEB128 integer")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise DecodeError("LEB128 integer too long")


def encode_aggregate(a: Aggregate) -> bytes:
    """Summary as little-endian bytes followed by the LEB128 count."""
    return a.summary.to_bytes(a.width_bits // 8, "little") + leb128(a.count)


FINGERPRINT_LEN = 16


def fingerprint_of_aggregate(a: Aggregate, cfg: SummaryConfig | None = None) -> bytes:
    if cfg is not None and cfg.width_bits != a.width_bits:
        raise ConfigError("aggregate width does not match the summary config")
    return hashlib.sha256(encode_aggregate(a)).digest()[:FINGERPRINT_LEN]
