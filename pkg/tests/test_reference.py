import random

import pytest
from hypothesis import given, settings, strategies as st

from rbsr.model import Aggregate, Bound, ItemKey, PreconditionError, SummaryConfig, decode_key, encode_key
from rbsr.reference import SortedListStore

from _oracle import MINUS_INF, PLUS_INF, brute_aggregate, brute_rank, key, random_bound, random_key, run_script

W8 = SummaryConfig(8, 8, 1)
FOUR_ITEMS = [key(10, 0xA1), key(10, 0xF3), key(11, 0x1C), key(13, 0x7B)]


@pytest.fixture
def four():
    return SortedListStore([decode_key(kb) for kb in FOUR_ITEMS], W8)


def test_four_items_queries(four):
    assert four.size() == 4
    got = four.aggregate(decode_key(key(10)), decode_key(key(13)))
    assert got == Aggregate(3, 0xB0, 8)
    assert four.rank(decode_key(FOUR_ITEMS[2])) == 2
    assert four.select(2) == decode_key(FOUR_ITEMS[2])
    assert four.enumerate(Bound.minus_inf(), Bound.plus_inf()) == [decode_key(kb) for kb in FOUR_ITEMS]


def test_trivial_cases(four):
    empty = SortedListStore()
    assert empty.size() == 0
    assert four.rank(Bound.minus_inf()) == 0
    assert four.rank(Bound.plus_inf()) == 4
    x = decode_key(FOUR_ITEMS[1])
    assert four.aggregate(x, x) == Aggregate.identity(8)
    assert four.enumerate(x, x) == []
    single = SortedListStore([x])
    assert single.select(0) == x
    with pytest.raises(IndexError):
        single.select(1)
    with pytest.raises(PreconditionError):
        four.aggregate(Bound.plus_inf(), Bound.minus_inf())
    with pytest.raises(PreconditionError):
        four.enumerate(Bound.plus_inf(), x)


def test_set_semantics():
    s = SortedListStore()
    k = ItemKey(7, bytes(32))
    assert s.insert(k) is True
    assert s.insert(k) is False
    assert s.size() == 1
    assert s.delete(ItemKey(8, bytes(32))) is False
    assert s.delete(k) is True
    assert len(s) == 0


def test_random_ranges_vs_filter():
    rng = random.Random(11)
    for _ in range(500):
        pool = sorted({random_key(rng) for _ in range(rng.randrange(60))})
        s = SortedListStore.from_sorted_raw(pool)
        a, b = sorted((random_bound(rng, pool), random_bound(rng, pool)))
        assert s.aggregate_raw(a, b) == brute_aggregate(pool, a, b, s.cfg)
        assert s.enumerate_raw(a, b) == [kb for kb in pool if a <= kb < b]
        assert s.rank_raw(a) == brute_rank(pool, a)


@settings(max_examples=60)
@given(st.lists(st.binary(min_size=40, max_size=40), unique=True, max_size=40), st.data())
def test_composability_and_adjunction(pool, data):
    s = SortedListStore([decode_key(kb) for kb in pool])
    bounds = sorted(data.draw(st.lists(st.sampled_from(pool + [MINUS_INF, PLUS_INF]), min_size=3, max_size=3)))
    l, m, u = bounds
    left, right = s.aggregate_raw(l, m), s.aggregate_raw(m, u)
    assert s.aggregate(l, u) == s.aggregate(l, m) + s.aggregate(m, u)
    assert s.aggregate_raw(l, u)[0] == left[0] + right[0]
    for kb in pool:
        x = decode_key(kb)
        assert s.select(s.rank(x)) == x


def test_model_script():
    assert run_script([SortedListStore()], seed=5, n_ops=3000, ts_span=128) > 0


def test_from_sorted_raw_matches_constructor():
    rng = random.Random(2)
    pool = sorted({random_key(rng) for _ in range(100)})
    a = SortedListStore.from_sorted_raw(pool)
    b = SortedListStore([decode_key(kb) for kb in reversed(pool)])
    assert a.enumerate_raw(MINUS_INF, PLUS_INF) == b.enumerate_raw(MINUS_INF, PLUS_INF) == pool
    assert all(decode_key(kb) in a for kb in pool)
    assert encode_key(a.select(0)) == pool[0]
