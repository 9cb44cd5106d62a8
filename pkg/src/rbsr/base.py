"""Typed RSOS surface shared by every backend.

Backends implement the ``*_raw`` primitives over encoded keys and raw bounds;
this mixin converts to and from the public value types and keeps the
per-operation instrumentation counters.
"""
from __future__ import annotations

from dataclasses import dataclass

from .model import (
    Aggregate,
    BoundLike,
    ItemKey,
    PreconditionError,
    SummaryConfig,
    decode_key,
    encode_key,
    raw_bound,
)


@dataclass
class OpStats:
    nodes_visited: int = 0
    entries_scanned: int = 0

    def __sub__(self, other: "OpStats") -> "OpStats":
        return OpStats(self.nodes_visited - other.nodes_visited,
                       self.entries_scanned - other.entries_scanned)


class RSOSBase:
    cfg: SummaryConfig

    def __init__(self) -> None:
        self.counters = OpStats()
        self._mark = OpStats()

    # -- instrumentation -------------------------------------------------
    def _start(self) -> None:
        self._mark = OpStats(self.counters.nodes_visited, self.counters.entries_scanned)

    def stats(self) -> OpStats:
        """Counters accumulated since the start of the last public operation."""
        return self.counters - self._mark

    @property
    def version(self) -> object:
        """Changes whenever the logical contents may have changed."""
        raise NotImplementedError

    # -- raw primitives (overridden) -------------------------------------
    def size(self) -> int:
        raise NotImplementedError

    def aggregate_raw(self, lo: bytes, hi: bytes) -> tuple[int, int]:
        raise NotImplementedError

    def rank_raw(self, z: bytes) -> int:
        raise NotImplementedError

    def select_raw(self, r: int) -> bytes:
        raise NotImplementedError

    def enumerate_raw(self, lo: bytes, hi: bytes) -> list[bytes]:
        raise NotImplementedError

    def insert_raw(self, kb: bytes) -> bool:
        raise NotImplementedError

    def delete_raw(self, kb: bytes) -> bool:
        raise NotImplementedError

    # -- rank-space primitives used by windows ---------------------------
    def aggregate_with_rank_raw(self, lo: bytes, hi: bytes) -> tuple[int, int, int]:
        """(count, summary, rank of lo) for [lo, hi)."""
        c, s = self.aggregate_raw(lo, hi)
        return c, s, self.rank_raw(lo)

    def aggregate_ranks_raw(self, r_lo: int, r_hi: int) -> tuple[int, int]:
        if r_lo >= r_hi:
            return 0, 0
        return self.aggregate_raw(self.select_raw(r_lo), self._key_at_or_inf(r_hi))

    def enumerate_ranks_raw(self, r_lo: int, r_hi: int) -> list[bytes]:
        if r_lo >= r_hi:
            return []
        return self.enumerate_raw(self.select_raw(r_lo), self._key_at_or_inf(r_hi))

    def partition_ranks_raw(self, cuts: list[int]) -> tuple[list[bytes], list[tuple[int, int]]]:
        """Keys at the interior cut ranks and the aggregate of each part.

        ``cuts`` is non-decreasing with at least two entries; part ``j`` holds
        the items of absolute rank ``[cuts[j], cuts[j+1])``.
        """
        keys = [self.select_raw(r) for r in cuts[1:-1]]
        parts = [self.aggregate_ranks_raw(a, b) for a, b in zip(cuts, cuts[1:])]
        return keys, parts

    def _key_at_or_inf(self, r: int) -> bytes:
        from .model import PLUS_INF

        return PLUS_INF if r >= self.size() else self.select_raw(r)

    # -- typed API ---------------------------------------------------------
    def _agg(self, c: int, s: int) -> Aggregate:
        return Aggregate(c, s, self.cfg.width_bits)

    def aggregate(self, l: BoundLike, u: BoundLike) -> Aggregate:
        lo, hi = raw_bound(l), raw_bound(u)
        if hi < lo:
            raise PreconditionError("inverted bounds")
        return self._agg(*self.aggregate_raw(lo, hi))

    def totals(self) -> Aggregate:
        from .model import MINUS_INF, PLUS_INF

        return self._agg(*self.aggregate_raw(MINUS_INF, PLUS_INF))

    def rank(self, z: BoundLike) -> int:
        return self.rank_raw(raw_bound(z))

    def select(self, r: int) -> ItemKey:
        if not 0 <= r < self.size():
            raise IndexError(f"rank {r} out of range for size {self.size()}")
        return decode_key(self.select_raw(r))

    def enumerate(self, l: BoundLike, u: BoundLike) -> list[ItemKey]:
        lo, hi = raw_bound(l), raw_bound(u)
        if hi < lo:
            raise PreconditionError("inverted bounds")
        return [decode_key(kb) for kb in self.enumerate_raw(lo, hi)]

    def insert(self, x: ItemKey) -> bool:
        return self.insert_raw(encode_key(x))

    def delete(self, x: ItemKey) -> bool:
        return self.delete_raw(encode_key(x))

    def __len__(self) -> int:
        return self.size()
