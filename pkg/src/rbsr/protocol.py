"""Range-based set reconciliation over any RSOS backend.

Wire format (version byte 0x01)::

    message  := 0x01 | leb128(n) | element * n
    element  := bound(lo) | bound(hi) | tag | body
    tag 0    := Skip                     (no body)
    tag 1    := Fingerprint              16 bytes
    tag 2    := IdList                   want_reply byte | leb128(k) | 40-byte key * k
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .base import RSOSBase
from .model import (
    FINGERPRINT_LEN,
    KEY_LEN,
    Aggregate,
    Bound,
    BoundLike,
    DecodeError,
    HalfOpenRange,
    ItemKey,
    PreconditionError,
    RSOSError,
    decode_key,
    decode_raw_bound,
    encode_raw_bound,
    fingerprint_of_aggregate,
    leb128,
    raw_bound,
    read_leb128,
)
from .window import window_at, window_partition_raw

FORMAT_VERSION = 0x01
MAX_ROUNDS = 64


class ProtocolError(RSOSError):
    pass


class Role(enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


@dataclass(frozen=True)
class ProtocolParams:
    branch_factor: int = 16
    idlist_threshold: int = 32

    def __post_init__(self) -> None:
        if self.branch_factor < 2:
            raise ValueError("branch_factor must be >= 2")
        if self.idlist_threshold < 1:
            raise ValueError("idlist_threshold must be >= 1")


# -- message model ---------------------------------------------------------------

class Skip:
    __slots__ = ()

    def __repr__(self) -> str:
        return "Skip"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Skip)

    def __hash__(self) -> int:
        return 0


SKIP = Skip()


@dataclass(frozen=True)
class Fingerprint:
    fp: bytes


@dataclass(frozen=True)
class IdList:
    keys: tuple[bytes, ...]
    want_reply: bool = False


Payload = Union[Skip, Fingerprint, IdList]


@dataclass(frozen=True)
class RangeElement:
    lo: bytes
    hi: bytes
    payload: Payload

    @property
    def range(self) -> HalfOpenRange:
        return HalfOpenRange(Bound.from_raw(self.lo), Bound.from_raw(self.hi))


@dataclass(frozen=True)
class Message:
    elements: tuple[RangeElement, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def encode(self) -> bytes:
        return encode_message(self)


def encode_message(msg: Message) -> bytes:
    out = [bytes([FORMAT_VERSION]), leb128(len(msg.elements))]
    for el in msg.elements:
        out.append(encode_raw_bound(el.lo))
        out.append(encode_raw_bound(el.hi))
        p = el.payload
        if isinstance(p, Skip):
            out.append(b"\x00")
        elif isinstance(p, Fingerprint):
            out.append(b"\x01")
            out.append(p.fp)
        else:
            out.append(b"\x02")
            out.append(b"\x01" if p.want_reply else b"\x00")
            out.append(leb128(len(p.keys)))
            out.extend(p.keys)
    return b"".join(out)


def decode_message(data: bytes) -> Message:
    if not data:
        raise DecodeError("empty message")
    if data[0] != FORMAT_VERSION:
        raise DecodeError(f"unsupported message format {data[0]:#x}")
    n, pos = read_leb128(data, 1)
    elements = []
    for _ in range(n):
        lo, pos = decode_raw_bound(data, pos)
        hi, pos = decode_raw_bound(data, pos)
        if pos >= len(data):
            raise DecodeError("truncated element")
        tag = data[pos]
        pos += 1
        if tag == 0:
            payload: Payload = SKIP
        elif tag == 1:
            if pos + FINGERPRINT_LEN > len(data):
                raise DecodeError("truncated fingerprint")
            payload = Fingerprint(bytes(data[pos:pos + FINGERPRINT_LEN]))
            pos += FINGERPRINT_LEN
        elif tag == 2:
            if pos >= len(data):
                raise DecodeError("truncated id list")
            flag = data[pos]
            if flag > 1:
                raise DecodeError(f"bad want_reply byte {flag:#x}")
            k, pos = read_leb128(data, pos + 1)
            end = pos + k * KEY_LEN
            if end > len(data):
                raise DecodeError("truncated id list")
            payload = IdList(tuple(bytes(data[o:o + KEY_LEN]) for o in range(pos, end, KEY_LEN)), bool(flag))
            pos = end
        else:
            raise DecodeError(f"unknown payload tag {tag:#x}")
        elements.append(RangeElement(lo, hi, payload))
    if pos != len(data):
        raise DecodeError("trailing bytes after message")
    return Message(tuple(elements))


def check_message(msg: Message) -> None:
    """Ranges must be well-formed, ascending and pairwise disjoint."""
    prev_hi: Optional[bytes] = None
    for el in msg.elements:
        if el.hi < el.lo:
            raise ProtocolError("element with inverted range")
        if prev_hi is not None and el.lo < prev_hi:
            raise ProtocolError("element ranges overlap or are out of order")
        prev_hi = el.hi
        p = el.payload
        if isinstance(p, IdList):
            keys = p.keys
            if any(not a < b for a, b in zip(keys, keys[1:])):
                raise ProtocolError("IdList keys not strictly ascending")
            if keys and not (el.lo <= keys[0] and keys[-1] < el.hi):
                raise ProtocolError("IdList key outside its range")


# -- responder step ---------------------------------------------------------------

@dataclass(frozen=True)
class SkipOut:
    pass


@dataclass(frozen=True)
class IdListOut:
    keys: tuple[bytes, ...]


@dataclass(frozen=True)
class SplitOut:
    children: tuple[tuple[bytes, bytes, bytes], ...]  # (lo, hi, fingerprint)


Outcome = Union[SkipOut, IdListOut, SplitOut]


def normalize_cuts(cuts: Sequence) -> list:
    """Drop consecutive duplicates from a non-decreasing cut list."""
    out: list = []
    for c in cuts:
        if out and c < out[-1]:
            raise PreconditionError("cuts must be non-decreasing")
        if not out or c != out[-1]:
            out.append(c)
    return out


def _quantiles(m: int, b: int) -> list[int]:
    return [j * m // b for j in range(1, b)]


def split_by_rank_raw(store: RSOSBase, lo: bytes, hi: bytes, b: int,
                      m: Optional[int] = None) -> list[bytes]:
    if hi < lo:
        raise PreconditionError("inverted bounds")
    if m is None:
        m, _ = store.aggregate_raw(lo, hi)
    if m == 0:
        return [lo, hi]
    r0 = store.rank_raw(lo)
    cuts = [lo] + [store.select_raw(r0 + q) for q in _quantiles(m, b)] + [hi]
    return normalize_cuts(cuts)


def split_by_rank(store: RSOSBase, l: BoundLike, u: BoundLike, b: int) -> list[Bound]:
    return [Bound.from_raw(c) for c in split_by_rank_raw(store, raw_bound(l), raw_bound(u), b)]


def _fp(c: int, s: int, width: int) -> bytes:
    return fingerprint_of_aggregate(Aggregate(c, s, width))


def respond(store: RSOSBase, lo: bytes, hi: bytes, remote_fp: bytes, params: ProtocolParams,
            use_window: bool = False) -> Outcome:
    """One responder step on [lo, hi) against the peer's fingerprint."""
    width = store.cfg.width_bits
    m, s = store.aggregate_raw(lo, hi)
    if _fp(m, s, width) == remote_fp:
        return SkipOut()
    if m <= params.idlist_threshold:
        return IdListOut(tuple(store.enumerate_raw(lo, hi)))
    b = params.branch_factor
    if use_window:
        handle = window_at(store, lo, hi, store.rank_raw(lo), m)
        keys, parts = window_partition_raw(store, handle, [0] + _quantiles(m, b) + [m])
        cuts = [lo] + keys + [hi]
        children = tuple((a, z, _fp(c, cs, width))
                         for (a, z), (c, cs) in zip(zip(cuts, cuts[1:]), parts) if a != z)
    else:
        cuts = split_by_rank_raw(store, lo, hi, b, m)
        children = tuple((a, z, _fp(*store.aggregate_raw(a, z), width)) for a, z in zip(cuts, cuts[1:]))
    assert children[0][0] == lo and children[-1][1] == hi
    assert all(x[1] == y[0] for x, y in zip(children, children[1:]))
    assert all(x[0] < x[1] for x in children)
    return SplitOut(children)


# -- peer-side message processing -------------------------------------------------

@dataclass
class PeerSession:
    """Per-peer state: Δ sink (initiator only) and accounting counters."""

    role: Role
    have: set[bytes] = field(default_factory=set)
    need: set[bytes] = field(default_factory=set)
    queried: int = 0         # Q: fingerprint elements answered
    splits: int = 0          # I
    skip_leaves: int = 0     # L_skip
    idlist_leaves: int = 0   # L_id
    idlist_items: int = 0    # K: items sent in IdList answers to fingerprints
    reply_items: int = 0     # items sent answering a want_reply IdList
    responder_visits: int = 0
    skipped: Optional[list[tuple[bytes, bytes]]] = None

    def record_skips(self) -> "PeerSession":
        self.skipped = []
        return self


def initiate(store: RSOSBase, outer: HalfOpenRange | tuple[bytes, bytes], params: ProtocolParams) -> Message:
    if isinstance(outer, HalfOpenRange):
        lo, hi = outer.lo.raw, outer.hi.raw
    else:
        lo, hi = outer
    c, s = store.aggregate_raw(lo, hi)
    return Message((RangeElement(lo, hi, Fingerprint(_fp(c, s, store.cfg.width_bits))),))


def process_message(store: RSOSBase, incoming: Message, params: ProtocolParams, role: Role,
                    sink: Optional[PeerSession] = None, use_window: bool = False) -> Message:
    check_message(incoming)
    sink = sink if sink is not None else PeerSession(role)
    out: list[RangeElement] = []
    for el in incoming.elements:
        p = el.payload
        if isinstance(p, Fingerprint):
            before = store.counters.nodes_visited
            res = respond(store, el.lo, el.hi, p.fp, params, use_window)
            sink.responder_visits += store.counters.nodes_visited - before
            sink.queried += 1
            if isinstance(res, SkipOut):
                sink.skip_leaves += 1
                if sink.skipped is not None:
                    sink.skipped.append((el.lo, el.hi))
                out.append(RangeElement(el.lo, el.hi, SKIP))
            elif isinstance(res, IdListOut):
                sink.idlist_leaves += 1
                sink.idlist_items += len(res.keys)
                out.append(RangeElement(el.lo, el.hi, IdList(res.keys, role is Role.INITIATOR)))
            else:
                sink.splits += 1
                out.extend(RangeElement(a, z, Fingerprint(fp)) for a, z, fp in res.children)
        elif isinstance(p, IdList):
            local = store.enumerate_raw(el.lo, el.hi)
            if role is Role.INITIATOR:
                remote = set(p.keys)
                local_set = set(local)
                sink.have.update(kb for kb in local if kb not in remote)
                sink.need.update(kb for kb in p.keys if kb not in local_set)
            if p.want_reply:
                assert local or p.keys, "mismatching fingerprints over two empty ranges"
                sink.reply_items += len(local)
                out.append(RangeElement(el.lo, el.hi, IdList(tuple(local), False)))
        # Skip: range resolved, nothing to emit
    return Message(tuple(out))


# -- two-peer driver ----------------------------------------------------------------

@dataclass
class ReconcileOutcome:
    have: set[ItemKey]
    need: set[ItemKey]
    rounds: int
    messages: int
    bytes_sent: int
    transcript_hash: bytes
    counters: dict[str, int]
    have_raw: set[bytes] = field(repr=False, default_factory=set)
    need_raw: set[bytes] = field(repr=False, default_factory=set)
    sessions: tuple[PeerSession, PeerSession] | None = field(repr=False, default=None)


def reconcile(store_x: RSOSBase, store_y: RSOSBase, outer: HalfOpenRange | tuple[bytes, bytes],
              params: ProtocolParams = ProtocolParams(), *, window_x: bool = False,
              window_y: bool = False, record_skips: bool = False) -> ReconcileOutcome:
    """Run the protocol with X as initiator until one side has nothing left to send."""
    if store_x.cfg != store_y.cfg:
        raise PreconditionError("peers must share the summary configuration")
    sx, sy = PeerSession(Role.INITIATOR), PeerSession(Role.RESPONDER)
    if record_skips:
        sx.record_skips()
        sy.record_skips()
    transcript = hashlib.sha256()
    sent = [0, 0]  # messages, bytes

    def ship(msg: Message) -> Message:
        data = msg.encode()
        transcript.update(data)
        sent[0] += 1
        sent[1] += len(data)
        return decode_message(data)

    wire = ship(initiate(store_x, outer, params))
    rounds = 1
    while True:
        wire = ship(process_message(store_y, wire, params, Role.RESPONDER, sy, window_y))
        if not wire:
            break
        wire = ship(process_message(store_x, wire, params, Role.INITIATOR, sx, window_x))
        if not wire:
            break
        rounds += 1
        if rounds > MAX_ROUNDS:
            raise ProtocolError(f"no convergence after {MAX_ROUNDS} rounds")

    counters = {
        "Q": sx.queried + sy.queried,
        "I": sx.splits + sy.splits,
        "L_skip": sx.skip_leaves + sy.skip_leaves,
        "L_id": sx.idlist_leaves + sy.idlist_leaves,
        "K": sx.idlist_items + sy.idlist_items,
        "K_reply": sx.reply_items + sy.reply_items,
        "visits_x": sx.responder_visits,
        "visits_y": sy.responder_visits,
    }
    return ReconcileOutcome(
        have={decode_key(kb) for kb in sx.have},
        need={decode_key(kb) for kb in sx.need},
        rounds=rounds,
        messages=sent[0],
        bytes_sent=sent[1],
        transcript_hash=transcript.digest(),
        counters=counters,
        have_raw=sx.have,
        need_raw=sx.need,
        sessions=(sx, sy),
    )
