"""Lee-Ready trade-direction inference."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .events import AggTrades, ClassifiedTrades, Direction, QuoteEvent, Quotes
from .fileio import fmt_float, read_csv, write_csv

# prices within this relative distance are treated as equal (mid test, tick test)
PRICE_RTOL = 1e-9


def _same(a: float, b: float, rtol: float = PRICE_RTOL) -> bool:
    return abs(a - b) <= rtol * abs(b)


def prevailing_quote(quotes: Quotes, t: int, lag: int = 0) -> QuoteEvent | None:
    """Latest quote strictly before ``t - lag``, or None."""
    i = int(np.searchsorted(quotes.timestamp, t - lag, side="left")) - 1
    return quotes[i] if i >= 0 else None


def lee_ready(price: float, quote: QuoteEvent, prev_distinct_price: float | None,
              rtol: float = PRICE_RTOL) -> Direction:
    """Quote rule against the prevailing midquote, tick rule at the midquote."""
    mid = (quote.bid + quote.ask) / 2.0
    if not _same(price, mid, rtol):
        return Direction.BUYER if price > mid else Direction.SELLER
    if prev_distinct_price is None or np.isnan(prev_distinct_price) or _same(price, prev_distinct_price, rtol):
        return Direction.INDETERMINATE
    return Direction.BUYER if price > prev_distinct_price else Direction.SELLER


@dataclass
class ClassifyReport:
    total: int = 0
    dropped_no_quote: int = 0
    indeterminate: int = 0
    quote_rule: int = 0
    tick_rule: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def classify_stream(trades: AggTrades, quotes: Quotes, lag: int = 0,
                    rtol: float = PRICE_RTOL) -> tuple[ClassifiedTrades, ClassifyReport]:
    """Classify every trade that has a prevailing quote.

    The tick test looks at the most recent earlier trade price that differs
    from the current one, over all trades of the stream (including those
    later dropped for lack of a quote).
    """
    report = ClassifyReport(total=len(trades))
    qi = kernels.prevailing_index(trades.timestamp, quotes.timestamp, np.int64(lag))
    prev = kernels.prev_distinct_price(trades.vwap, rtol)
    have = qi >= 0
    report.dropped_no_quote = int((~have).sum())
    qi = qi[have]
    price = trades.vwap[have]
    prev = prev[have]
    mid = (quotes.bid[qi] + quotes.ask[qi]) / 2.0
    at_mid = np.abs(price - mid) <= rtol * np.abs(mid)
    direction = np.where(price > mid, 1, -1).astype(np.int8)
    tick_ok = at_mid & ~np.isnan(prev) & (np.abs(price - prev) > rtol * np.abs(prev))
    direction[at_mid] = 0
    direction[tick_ok] = np.where(price[tick_ok] > prev[tick_ok], 1, -1)
    report.quote_rule = int((~at_mid).sum())
    report.tick_rule = int(tick_ok.sum())
    report.indeterminate = int((direction == 0).sum())
    out = ClassifiedTrades(trades.timestamp[have], price, trades.total_volume[have],
                           direction, mid)
    return out, report


CLASSIFIED_HEADER = ("timestamp", "vwap", "volume", "direction", "prevailing_mid")


def write_classified(path, ct: ClassifiedTrades):
    return write_csv(path, CLASSIFIED_HEADER, (
        (int(t), fmt_float(p), int(v), Direction(int(d)).label, fmt_float(m))
        for t, p, v, d, m in zip(ct.timestamp, ct.vwap, ct.total_volume, ct.direction,
                                 ct.prevailing_mid)))


def read_classified(path) -> ClassifiedTrades:
    header, rows = read_csv(path)
    if tuple(header) != CLASSIFIED_HEADER:
        raise ValueError(f"{path}: not a classified-trade file")
    cols = list(zip(*rows)) if rows else [()] * 5
    return ClassifiedTrades(np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=float),
                            np.array(cols[2], dtype=np.int64),
                            np.array([int(Direction.parse(d)) for d in cols[3]], dtype=np.int8),
                            np.array(cols[4], dtype=float))
