"""Window subranges: a stable outer range pinned to its absolute rank interval.

Nested queries inside the window are expressed in window-relative ranks, so
they skip the boundary descents an absolute key-range query would repeat.
"""
from __future__ import annotations

from dataclasses import dataclass

from .base import RSOSBase
from .model import (Aggregate, Bound, BoundLike, HalfOpenRange, ItemKey, PreconditionError,
                    RSOSError, decode_key, raw_bound)


class StaleWindowError(RSOSError):
    """The store changed since the window was opened."""


@dataclass(frozen=True)
class WindowHandle:
    lo: bytes
    hi: bytes
    rank_lo: int
    rank_hi: int
    store_txn: object

    @property
    def outer(self) -> HalfOpenRange:
        return HalfOpenRange(Bound.from_raw(self.lo), Bound.from_raw(self.hi))

    @property
    def count(self) -> int:
        return self.rank_hi - self.rank_lo


def window_open(store: RSOSBase, l: BoundLike, u: BoundLike) -> WindowHandle:
    lo, hi = raw_bound(l), raw_bound(u)
    if hi < lo:
        raise PreconditionError("inverted window bounds")
    r_lo = store.rank_raw(lo)
    r_hi = store.rank_raw(hi)
    return WindowHandle(lo, hi, r_lo, r_hi, store.version)


def window_at(store: RSOSBase, lo: bytes, hi: bytes, rank_lo: int, count: int) -> WindowHandle:
    """Handle for a range whose rank and size the caller already knows."""
    return WindowHandle(lo, hi, rank_lo, rank_lo + count, store.version)


def _check(store: RSOSBase, h: WindowHandle) -> None:
    if h.store_txn != store.version:
        raise StaleWindowError(f"window opened at {h.store_txn}, store now at {store.version}")


def window_count(store: RSOSBase, h: WindowHandle) -> int:
    _check(store, h)
    return h.count


def window_select(store: RSOSBase, h: WindowHandle, rel_r: int) -> ItemKey:
    _check(store, h)
    if not 0 <= rel_r < h.count:
        raise IndexError(f"relative rank {rel_r} outside window of {h.count}")
    return decode_key(store.select_raw(h.rank_lo + rel_r))


def window_aggregate_raw(store: RSOSBase, h: WindowHandle, rel_lo: int, rel_hi: int) -> tuple[int, int]:
    _check(store, h)
    if not 0 <= rel_lo <= rel_hi <= h.count:
        raise IndexError(f"relative range [{rel_lo}, {rel_hi}) outside window of {h.count}")
    return store.aggregate_ranks_raw(h.rank_lo + rel_lo, h.rank_lo + rel_hi)


def window_aggregate(store: RSOSBase, h: WindowHandle, rel_lo: int, rel_hi: int) -> Aggregate:
    return store._agg(*window_aggregate_raw(store, h, rel_lo, rel_hi))


def window_enumerate_raw(store: RSOSBase, h: WindowHandle, rel_lo: int = 0, rel_hi: int | None = None) -> list[bytes]:
    _check(store, h)
    rel_hi = h.count if rel_hi is None else rel_hi
    if not 0 <= rel_lo <= rel_hi <= h.count:
        raise IndexError("relative range outside window")
    return store.enumerate_ranks_raw(h.rank_lo + rel_lo, h.rank_lo + rel_hi)


def window_partition_raw(store: RSOSBase, h: WindowHandle,
                         rel_cuts: list[int]) -> tuple[list[bytes], list[tuple[int, int]]]:
    """Split the window at relative ranks in a single tree walk.

    ``rel_cuts`` is non-decreasing, starts at 0 and ends at the window count;
    every interior cut must be below the count.  Returns the keys at the
    interior cuts (which become half-open boundaries) and each part's
    aggregate.
    """
    _check(store, h)
    if not rel_cuts or rel_cuts[0] != 0 or rel_cuts[-1] != h.count:
        raise PreconditionError("cuts must span the whole window")
    if any(b < a for a, b in zip(rel_cuts, rel_cuts[1:])):
        raise PreconditionError("cuts must be non-decreasing")
    if any(c >= h.count for c in rel_cuts[1:-1]):
        raise PreconditionError("interior cuts must address stored items")
    return store.partition_ranks_raw([h.rank_lo + c for c in rel_cuts])
