import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from concsketch.core import MASK64, Oracle, as_bytes, encode_int, splitmix64


def test_new_oracle_starts_at_cursor_zero():
    o = Oracle(0)
    assert (o.seed, o.coin_cursor) == (0, 0)


def test_same_seed_same_hash():
    assert Oracle(42).hash(b"x") == Oracle(42).hash(b"x")


def test_different_seeds_differ_on_corpus():
    a, b = Oracle(1), Oracle(2)
    corpus = [encode_int(i) for i in range(1000)] + [b"x", b"abc", b""]
    assert all(a.hash(item) != b.hash(item) for item in corpus)


@given(st.integers(-(1 << 63), MASK64), st.binary(max_size=64))
def test_hash_range_and_determinism(seed, item):
    o = Oracle(seed)
    h = o.hash(item)
    assert 0.0 <= h < 1.0
    assert h == o.hash(item)
    assert h == o.hash64(item) * 2.0 ** -53


def test_seed_out_of_range_rejected():
    with pytest.raises(ValueError):
        Oracle(1 << 64)


def test_hash_uniformity():
    o = Oracle(2024)
    hs = np.fromiter((o.hash(encode_int(i)) for i in range(10**6)), float, count=10**6)
    assert 0.497 <= hs.mean() <= 0.503
    ks = stats.kstest(hs, "uniform")
    assert ks.statistic < 0.002
    assert ks.pvalue > 0.01


def test_coin_fraction():
    o = Oracle(7)
    ones = sum(o.coin_at(i) for i in range(10**6))
    assert 0.497 <= ones / 10**6 <= 0.503


def test_coin_replay_from_cursor():
    o = Oracle(99)
    first = [o.coin() for _ in range(8)]
    assert o.coin_cursor == 8
    o.coin_cursor = 0
    assert [o.coin() for _ in range(8)] == first
    assert first == [Oracle(99).coin_at(i) for i in range(8)]


@given(st.integers(0, MASK64), st.integers(0, 10_000))
def test_coin_is_pure_in_cursor(seed, i):
    assert Oracle(seed).coin_at(i) == Oracle(seed).coin_at(i) in (0, 1)


def test_derive_gives_distinct_streams():
    root = Oracle(5)
    streams = [[root.derive(w).coin_at(i) for i in range(64)] for w in range(4)]
    assert len({tuple(s) for s in streams}) == 4
    assert root.derive(3).seed == Oracle(5).derive(3).seed


def test_as_bytes():
    assert as_bytes(b"ab") == b"ab"
    assert as_bytes("é") == "é".encode()
    assert as_bytes(1) == b"\x00" * 7 + b"\x01"
    assert encode_int(-1) == b"\xff" * 8
    with pytest.raises(TypeError):
        as_bytes(1.5)


def test_splitmix_known_value():
    # first output of the reference SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
