import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from impactlab.classify import (classify_stream, lee_ready, prevailing_quote, read_classified,
                                write_classified)
from impactlab.events import AggTrades, Direction, QuoteEvent, Quotes

B, S, I = Direction.BUYER, Direction.SELLER, Direction.INDETERMINATE


def test_prevailing_quote_strictly_before():
    q = Quotes([1, 3, 5], [1.0, 3.0, 5.0], [1.1, 3.1, 5.1])
    assert prevailing_quote(q, 4).timestamp == 3
    assert prevailing_quote(q, 1) is None
    assert prevailing_quote(q, 5).timestamp == 3
    assert prevailing_quote(q, 5, lag=2).timestamp == 1


def test_prevailing_quote_linear_scan():
    rng = np.random.default_rng(11)
    ts = np.unique(rng.integers(0, 10**6, 1000))
    q = Quotes(ts, np.ones(ts.size), np.full(ts.size, 1.1))
    rows = list(q)
    for t in rng.integers(-10, 10**6 + 10, 100):
        got = prevailing_quote(q, int(t))
        want = oracles.prevailing(rows, int(t))
        assert (got is None and want is None) or got.timestamp == rows[want][0]


def test_lee_ready_rules():
    q = QuoteEvent(0, 10.00, 10.10)
    assert lee_ready(10.08, q, None) is B
    assert lee_ready(10.01, q, None) is S
    assert lee_ready(10.05, q, 10.02) is B
    assert lee_ready(10.05, q, 10.07) is S
    assert lee_ready(10.05, q, None) is I
    assert lee_ready(10.05, q, 10.05) is I


def test_trade_before_first_quote_dropped():
    out, rep = classify_stream(AggTrades([1], [10.0], [5]), Quotes([2], [9.9], [10.1]))
    assert len(out) == 0 and rep.dropped_no_quote == 1


def test_empty_quote_stream_drops_everything():
    out, rep = classify_stream(AggTrades([1, 2], [10.0, 10.1], [5, 5]), Quotes([], [], []))
    assert len(out) == 0 and rep.dropped_no_quote == 2


def test_hand_fixture_six_trades_four_quotes():
    quotes = Quotes([10, 30, 50, 70], [10.00, 10.02, 9.98, 10.00], [10.10, 10.12, 10.08, 10.04])
    trades = AggTrades([5, 20, 30, 40, 60, 80], [10.05, 10.08, 10.05, 10.07, 10.07, 10.02], [1] * 6)
    out, rep = classify_stream(trades, quotes)
    # t=5 has no quote; t=30 sees the t=10 quote (strictly before) at its mid
    assert list(out.timestamp) == [20, 30, 40, 60, 80]
    assert [Direction(int(d)) for d in out.direction] == [B, S, B, B, S]
    assert rep.quote_rule == 2 and rep.tick_rule == 3 and rep.indeterminate == 0
    np.testing.assert_allclose(out.prevailing_mid, [10.05, 10.05, 10.07, 10.03, 10.02])


def random_instance(rng):
    nq = int(rng.integers(1, 15))
    nt = int(rng.integers(1, 25))
    qts = np.unique(rng.integers(0, 40, nq))
    mids = rng.choice([10.0, 10.05, 10.1], qts.size)
    quotes = Quotes(qts, mids - 0.05, mids + 0.05)
    tts = np.unique(rng.integers(0, 45, nt))
    # prices on a coarse grid so midquote hits and repeated prices are common
    prices = rng.choice([9.95, 10.0, 10.05, 10.1, 10.15], tts.size)
    return AggTrades(tts, prices, np.ones(tts.size, dtype=np.int64)), quotes


@pytest.mark.parametrize("seed", range(100))
def test_stream_matches_brute_force_labeler(seed):
    rng = np.random.default_rng(seed)
    trades, quotes = random_instance(rng)
    lag = int(rng.integers(0, 3))
    out, _ = classify_stream(trades, quotes, lag)
    want = oracles.lee_ready_labels(list(zip(trades.timestamp, trades.vwap)), list(quotes), lag)
    assert list(out.timestamp) == [int(trades.timestamp[k]) for k, _ in want]
    assert list(out.direction) == [lab for _, lab in want]


@given(st.integers(0, 2**32 - 1))
def test_stream_equals_per_trade_lookup(seed):
    rng = np.random.default_rng(seed)
    trades, quotes = random_instance(rng)
    out, _ = classify_stream(trades, quotes)
    prices = list(trades.vwap)
    expect = []
    for k, t in enumerate(trades):
        q = prevailing_quote(quotes, t.timestamp)
        if q is None:
            continue
        prev = next((p for p in reversed(prices[:k]) if abs(p - t.vwap) > 1e-9 * abs(p)), None)
        expect.append(int(lee_ready(t.vwap, q, prev)))
    assert list(out.direction) == expect


@given(st.integers(0, 2**32 - 1))
def test_reflection_swaps_quote_rule_labels(seed):
    rng = np.random.default_rng(seed)
    trades, quotes = random_instance(rng)
    out, _ = classify_stream(trades, quotes)
    have = np.isin(trades.timestamp, out.timestamp)
    mirrored = AggTrades(trades.timestamp, trades.vwap, trades.total_volume)
    mirrored.vwap = trades.vwap.copy()
    mirrored.vwap[have] = 2 * out.prevailing_mid - trades.vwap[have]
    out2, _ = classify_stream(mirrored, quotes)
    quote_rule = np.abs(out.vwap - out.prevailing_mid) > 1e-9 * out.prevailing_mid
    np.testing.assert_array_equal(out2.direction[quote_rule], -out.direction[quote_rule])


def test_deterministic():
    trades, quotes = random_instance(np.random.default_rng(5))
    a, _ = classify_stream(trades, quotes)
    b, _ = classify_stream(trades, quotes)
    assert a.equals(b)


def test_classified_csv_round_trip(tmp_path):
    trades, quotes = random_instance(np.random.default_rng(9))
    out, _ = classify_stream(trades, quotes)
    write_classified(tmp_path / "c.csv", out)
    assert read_classified(tmp_path / "c.csv").equals(out)
