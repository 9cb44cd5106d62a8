"""Sorted-list RSOS: the correctness oracle for the other backends."""
from __future__ import annotations

from bisect import bisect_left
from typing import Iterable

from .base import RSOSBase
from .model import DEFAULT_CONFIG, ItemKey, PreconditionError, SummaryConfig, encode_key


class SortedListStore(RSOSBase):
    """O(n) updates and aggregates over a plain sorted list."""

    def __init__(self, items: Iterable[ItemKey] = (), cfg: SummaryConfig = DEFAULT_CONFIG) -> None:
        super().__init__()
        self.cfg = cfg
        keys = sorted({encode_key(k) for k in items})
        self._keys: list[bytes] = keys
        self._sums: list[int] = [cfg.summary_raw(kb) for kb in keys]
        self._version = 0

    @classmethod
    def from_sorted_raw(cls, keys: list[bytes], cfg: SummaryConfig = DEFAULT_CONFIG) -> "SortedListStore":
        for a, b in zip(keys, keys[1:]):
            if not a < b:
                raise PreconditionError("keys must be strictly increasing")
        store = cls(cfg=cfg)
        store._keys = list(keys)
        store._sums = [cfg.summary_raw(kb) for kb in keys]
        return store

    @property
    def version(self) -> int:
        return self._version

    def size(self) -> int:
        return len(self._keys)

    def aggregate_raw(self, lo: bytes, hi: bytes) -> tuple[int, int]:
        self._start()
        if hi < lo:
            raise PreconditionError("inverted bounds")
        i = bisect_left(self._keys, lo)
        j = bisect_left(self._keys, hi)
        if j <= i:
            return 0, 0
        return j - i, sum(self._sums[i:j]) & self.cfg.mask

    def rank_raw(self, z: bytes) -> int:
        self._start()
        return bisect_left(self._keys, z)

    def select_raw(self, r: int) -> bytes:
        self._start()
        if not 0 <= r < len(self._keys):
            raise IndexError(f"rank {r} out of range")
        return self._keys[r]

    def enumerate_raw(self, lo: bytes, hi: bytes) -> list[bytes]:
        self._start()
        if hi < lo:
            raise PreconditionError("inverted bounds")
        return self._keys[bisect_left(self._keys, lo):bisect_left(self._keys, hi)]

    def insert_raw(self, kb: bytes) -> bool:
        self._start()
        i = bisect_left(self._keys, kb)
        if i < len(self._keys) and self._keys[i] == kb:
            return False
        self._keys.insert(i, kb)
        self._sums.insert(i, self.cfg.summary_raw(kb))
        self._version += 1
        return True

    def delete_raw(self, kb: bytes) -> bool:
        self._start()
        i = bisect_left(self._keys, kb)
        if i == len(self._keys) or self._keys[i] != kb:
            return False
        del self._keys[i]
        del self._sums[i]
        self._version += 1
        return True

    def __contains__(self, x: ItemKey) -> bool:
        kb = encode_key(x)
        i = bisect_left(self._keys, kb)
        return i < len(self._keys) and self._keys[i] == kb

    # rank-space primitives are direct slices here
    def aggregate_with_rank_raw(self, lo: bytes, hi: bytes) -> tuple[int, int, int]:
        i = bisect_left(self._keys, lo)
        c, s = self.aggregate_raw(lo, hi)
        return c, s, i

    def aggregate_ranks_raw(self, r_lo: int, r_hi: int) -> tuple[int, int]:
        self._start()
        if r_lo >= r_hi:
            return 0, 0
        return r_hi - r_lo, sum(self._sums[r_lo:r_hi]) & self.cfg.mask

    def enumerate_ranks_raw(self, r_lo: int, r_hi: int) -> list[bytes]:
        self._start()
        return self._keys[r_lo:r_hi]

    def partition_ranks_raw(self, cuts: list[int]) -> tuple[list[bytes], list[tuple[int, int]]]:
        self._start()
        keys = [self._keys[r] for r in cuts[1:-1]]
        mask = self.cfg.mask
        parts = [(b - a, sum(self._sums[a:b]) & mask) for a, b in zip(cuts, cuts[1:])]
        return keys, parts
