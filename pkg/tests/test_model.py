import hashlib
import random

import pytest
from hypothesis import given, strategies as st

from rbsr.model import (
    Aggregate,
    Bound,
    ConfigError,
    DecodeError,
    HalfOpenRange,
    ItemKey,
    PreconditionError,
    SummaryConfig,
    aggregate_combine,
    aggregate_of_items,
    compare_keys,
    decode_bound,
    decode_key,
    encode_bound,
    encode_key,
    fingerprint_of_aggregate,
    leb128,
    read_leb128,
    summary_of_item,
)

from _oracle import brute_fingerprint

W8 = SummaryConfig(width_bits=8, slice_offset=8, slice_len=1)


def ik(ts: int, first: int) -> ItemKey:
    return ItemKey(ts, bytes([first]) + bytes(31))


FOUR_ITEMS = [ik(10, 0xA1), ik(10, 0xF3), ik(11, 0x1C), ik(13, 0x7B)]

keys = st.builds(ItemKey, st.integers(0, 2**64 - 1), st.binary(min_size=32, max_size=32))


def aggs(width):
    return st.builds(Aggregate, st.integers(0, 2**64 - 1), st.integers(0, 2**width - 1), st.just(width))


def test_four_items_order():
    assert compare_keys(FOUR_ITEMS[0], FOUR_ITEMS[1]) == -1
    assert compare_keys(FOUR_ITEMS[2], FOUR_ITEMS[1]) == 1
    assert compare_keys(FOUR_ITEMS[3], FOUR_ITEMS[3]) == 0


def test_encode_key_rule():
    assert encode_key(ItemKey(0, bytes(32))) == bytes(40)
    assert encode_key(ik(10, 0xA1)) == bytes.fromhex("000000000000000aa1") + bytes(31)


def test_key_validation():
    with pytest.raises(ValueError):
        ItemKey(-1, bytes(32))
    with pytest.raises(ValueError):
        ItemKey(0, bytes(31))
    with pytest.raises(DecodeError):
        decode_key(bytes(39))


@given(keys)
def test_key_round_trip(k):
    assert decode_key(encode_key(k)) == k


@given(keys, keys)
def test_order_coherence(a, b):
    ea, eb = encode_key(a), encode_key(b)
    assert compare_keys(a, b) == (ea > eb) - (ea < eb)


def test_summary_of_item():
    assert summary_of_item(ik(10, 0xA1), W8).value == 0xA1
    assert summary_of_item(ItemKey(5, bytes(32))).value == 0
    rng = random.Random(3)
    for _ in range(200):
        ident = rng.randbytes(32)
        assert summary_of_item(ItemKey(rng.getrandbits(64), ident)).value == int(ident.hex(), 16)


def test_summary_config_validation():
    for bad in ((7, 8, 1), (264, 0, 33), (16, 8, 1), (256, 9, 32)):
        with pytest.raises(ConfigError):
            SummaryConfig(*bad)


def test_four_items_combine():
    got = aggregate_combine(Aggregate(1, 0xA1, 8), Aggregate(2, 0x0F, 8))
    assert (got.count, got.summary) == (3, 0xB0)


def test_four_items_aggregate_of_items():
    got = aggregate_of_items(FOUR_ITEMS[:3], W8)
    assert (got.count, got.summary) == (3, 0xB0)
    assert aggregate_of_items([], W8) == Aggregate.identity(8)


def test_aggregate_of_items_rejects_unsorted():
    with pytest.raises(PreconditionError):
        aggregate_of_items([FOUR_ITEMS[1], FOUR_ITEMS[0]], W8)
    with pytest.raises(PreconditionError):
        aggregate_of_items([FOUR_ITEMS[0], FOUR_ITEMS[0]], W8)


def test_width_mismatch():
    with pytest.raises(ConfigError):
        aggregate_combine(Aggregate(1, 1, 8), Aggregate(1, 1, 256))


@pytest.mark.parametrize("width", [8, 256])
@given(data=st.data())
def test_monoid_laws(width, data):
    a, b, c = (data.draw(aggs(width)) for _ in range(3))
    e = Aggregate.identity(width)
    assert (a + b) + c == a + (b + c)
    assert e + a == a == a + e


@given(st.lists(keys, max_size=30, unique=True))
def test_aggregate_of_items_left_fold(items):
    items.sort()
    want_sum = 0
    for k in items:
        want_sum = (want_sum + int.from_bytes(k.id, "big")) % 2**256
    assert aggregate_of_items(items) == Aggregate(len(items), want_sum)


def test_fingerprint_golden_vectors():
    # frozen from hashlib over the hand-built byte strings
    assert fingerprint_of_aggregate(Aggregate(0, 0, 256)).hex() == "7f9c9e31ac8256ca2f258583df262dbc"
    assert fingerprint_of_aggregate(Aggregate(3, 0xB0, 8)).hex() == "7ade47833b79e89e01c0779ebfc7a1ba"
    assert hashlib.sha256(bytes(32) + b"\x00").digest()[:16].hex() == "7f9c9e31ac8256ca2f258583df262dbc"


@given(aggs(256))
def test_fingerprint_matches_oracle(a):
    fp = fingerprint_of_aggregate(a)
    assert len(fp) == 16
    assert fp == fingerprint_of_aggregate(Aggregate(a.count, a.summary, 256))
    assert fp == brute_fingerprint(a.count, a.summary, 256)


def test_fingerprint_config_check():
    with pytest.raises(ConfigError):
        fingerprint_of_aggregate(Aggregate(0, 0, 8), SummaryConfig())


def test_bound_encoding():
    assert encode_bound(Bound.minus_inf()) == b"\x00"
    assert encode_bound(Bound.plus_inf()) == b"\x02"
    for junk in (b"", b"\x03", b"\x01" + bytes(39), b"\x00\x00"):
        with pytest.raises(DecodeError):
            decode_bound(junk)


@given(keys)
def test_bound_round_trip(k):
    b = Bound.of(k)
    assert decode_bound(encode_bound(b)) == b
    assert Bound.minus_inf() < b < Bound.plus_inf()


def test_half_open_range():
    r = HalfOpenRange(Bound.of(ik(10, 0)), Bound.of(ik(13, 0)))
    assert [k in r for k in FOUR_ITEMS] == [True, True, True, False]
    with pytest.raises(PreconditionError):
        HalfOpenRange(Bound.plus_inf(), Bound.minus_inf())


@given(st.integers(0, 2**63))
def test_leb128_round_trip(n):
    enc = leb128(n)
    assert read_leb128(enc) == (n, len(enc))
    assert len(enc) == max(1, (n.bit_length() + 6) // 7)
