import random

import pytest

from rbsr.btree import AggBTree
from rbsr.model import Aggregate, Bound, ItemKey, PreconditionError, SummaryConfig, decode_key
from rbsr.paged import PagedStore
from rbsr.reference import SortedListStore
from rbsr.window import (
    StaleWindowError,
    window_aggregate,
    window_aggregate_raw,
    window_count,
    window_enumerate_raw,
    window_open,
    window_partition_raw,
    window_select,
)

from _oracle import MINUS_INF, PLUS_INF, brute_aggregate, key, nested_refinement, random_bound, random_key

W8 = SummaryConfig(8, 8, 1)
FOUR_ITEMS = [key(10, 0xA1), key(10, 0xF3), key(11, 0x1C), key(13, 0x7B)]


@pytest.fixture(params=["ref", "btree"])
def four(request):
    items = [decode_key(kb) for kb in FOUR_ITEMS]
    if request.param == "ref":
        return SortedListStore(items, W8)
    return AggBTree(items, W8, fanout=4)


def test_four_items_window(four):
    h = window_open(four, decode_key(key(10)), decode_key(key(13)))
    assert (h.rank_lo, h.rank_hi) == (0, 3)
    assert window_count(four, h) == 3
    assert window_select(four, h, 0) == decode_key(FOUR_ITEMS[0])
    assert window_aggregate(four, h, 0, 3) == Aggregate(3, 0xB0, 8)
    assert window_open(four, decode_key(key(10)), decode_key(key(13))) == h


def test_full_and_empty_windows(four):
    full = window_open(four, Bound.minus_inf(), Bound.plus_inf())
    assert (full.rank_lo, full.rank_hi) == (0, 4)
    for r in range(4):
        assert window_select(four, full, r) == four.select(r)
    empty = window_open(four, FOUR_ITEMS[1], FOUR_ITEMS[1])
    assert window_count(four, empty) == 0
    assert window_aggregate(four, full, 2, 2) == Aggregate.identity(8)


def test_window_open_needs_two_descents():
    rng = random.Random(0)
    t = AggBTree.from_sorted_raw(sorted({random_key(rng) for _ in range(5000)}), fanout=16)
    before = t.counters.nodes_visited
    window_open(t, key(10), key(40))
    assert t.counters.nodes_visited - before <= 2 * t.height()


def test_errors(four):
    with pytest.raises(PreconditionError):
        window_open(four, Bound.plus_inf(), Bound.minus_inf())
    h = window_open(four, decode_key(key(10)), decode_key(key(13)))
    with pytest.raises(IndexError):
        window_select(four, h, 3)
    with pytest.raises(IndexError):
        window_aggregate(four, h, 2, 4)
    with pytest.raises(PreconditionError):
        window_partition_raw(four, h, [0, 3, 3])


@pytest.mark.parametrize("kind", ["ref", "btree"])
def test_random_windows_match_absolute(kind):
    rng = random.Random(4)
    pool = sorted({random_key(rng, 256) for _ in range(1500)})
    store = SortedListStore.from_sorted_raw(pool) if kind == "ref" else AggBTree.from_sorted_raw(pool, fanout=8)
    for _ in range(300):
        lo, hi = sorted((random_bound(rng, pool, 256), random_bound(rng, pool, 256)))
        h = window_open(store, lo, hi)
        inside = [kb for kb in pool if lo <= kb < hi]
        assert window_count(store, h) == len(inside) == store.aggregate_raw(lo, hi)[0]
        assert window_enumerate_raw(store, h) == inside
        if not inside:
            continue
        r = rng.randrange(len(inside))
        assert window_select(store, h, r) == decode_key(inside[r])
        a, b = sorted((rng.randrange(len(inside) + 1), rng.randrange(len(inside) + 1)))
        # upper edge maps to the window's own bound, otherwise to the key at that rank
        lo_key = inside[a] if a < len(inside) else hi
        hi_key = inside[b] if b < len(inside) else hi
        assert window_aggregate_raw(store, h, a, b) == brute_aggregate(pool, lo_key, hi_key, store.cfg)
        cuts = sorted({0, len(inside)} | {rng.randrange(len(inside)) for _ in range(4)})
        keys, parts = window_partition_raw(store, h, cuts)
        assert keys == [inside[c] for c in cuts[1:-1]]
        assert parts == [window_aggregate_raw(store, h, x, y) for x, y in zip(cuts, cuts[1:])]


def test_stale_after_commit_valid_after_abort(tmp_path):
    rng = random.Random(5)
    pool = sorted({random_key(rng) for _ in range(500)})
    with PagedStore.create(tmp_path / "w.db", page_size=512, sync=False) as s:
        s.bulk_load_raw(pool)
        s.commit()
        h = window_open(s, pool[10], pool[300])
        s.insert_raw(key(99, 1))
        s.abort()
        assert window_count(s, h) == 290
        snap = s.reader()
        hs = window_open(snap, pool[10], pool[300])
        s.insert_raw(key(99, 1))
        s.commit()
        with pytest.raises(StaleWindowError):
            window_count(s, h)
        with pytest.raises(StaleWindowError):
            window_select(s, h, 0)
        # the pinned reader still sees its own snapshot
        assert window_count(snap, hs) == 290
        assert window_select(snap, hs, 0) == decode_key(pool[10])


def test_stale_on_in_memory_mutation():
    t = AggBTree([ItemKey(1, bytes(32))])
    h = window_open(t, MINUS_INF, PLUS_INF)
    t.insert(ItemKey(2, bytes(32)))
    with pytest.raises(StaleWindowError):
        window_aggregate(t, h, 0, 1)


@pytest.mark.parametrize("n", [3000, 20000])
def test_nested_refinement_work_reduction(n):
    rng = random.Random(n)
    pool = sorted({random_key(rng, 1 << 20) for _ in range(n)})
    t = AggBTree.from_sorted_raw(pool, fanout=16)
    lo, hi = pool[n // 10], pool[9 * n // 10]
    abs_out, abs_visits = nested_refinement(t, lo, hi, windowed=False)
    win_out, win_visits = nested_refinement(t, lo, hi, windowed=True)
    assert abs_out == win_out and len(abs_out) > 16
    assert win_visits < abs_visits
