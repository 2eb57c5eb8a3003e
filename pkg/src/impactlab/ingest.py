"""Parse, validate, session-filter and timestamp-aggregate raw tick files."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from datetime import datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseAbortError
from .events import AggTrades, Quotes, RejectionReport, Trades

US_PER_DAY = 86_400_000_000
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_ISO = re.compile(r"^(\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2})(?:\.(\d{1,6}))?(Z|[+-]\d{2}:\d{2})?$")

TRADE_FIELDS = ("timestamp", "price", "volume")
QUOTE_FIELDS = ("timestamp", "bid", "ask")


@dataclass
class TickFormat:
    """Column layout of a delimited tick file.

    ``trade_columns``/``quote_columns`` map each field to a 0-based column
    index, or to a header name when ``header`` is true.
    ``timestamp_format`` is ``iso``, ``epoch_us`` or ``auto``.
    """
    delimiter: str = ","
    header: bool = True
    timestamp_format: str = "auto"
    trade_columns: dict = field(default_factory=lambda: dict(zip(TRADE_FIELDS, range(3))))
    quote_columns: dict = field(default_factory=lambda: dict(zip(QUOTE_FIELDS, range(3))))
    max_error_rate: float = 0.01

    @classmethod
    def from_dict(cls, d: dict | None) -> "TickFormat":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"format.{sorted(unknown)[0]}", "unknown key")
        if d.get("timestamp_format", "auto") not in ("auto", "iso", "epoch_us"):
            raise ConfigError("format.timestamp_format", "must be auto, iso or epoch_us")
        return cls(**d)


def parse_timestamp(text: str, fmt: str = "auto") -> int:
    """Integer microseconds since the epoch; naive ISO times are taken as UTC.

    Fractions coarser than a microsecond are zero-padded.
    """
    s = text.strip()
    if fmt == "epoch_us" or (fmt == "auto" and s.lstrip("-").isdigit()):
        return int(s)
    m = _ISO.match(s)
    if not m:
        raise ValueError(f"bad timestamp {text!r}")
    tz = m.group(3)
    base = datetime.fromisoformat(m.group(1) + ("+00:00" if tz in (None, "Z") else tz))
    frac = m.group(2) or ""
    return (base - _EPOCH) // timedelta(microseconds=1) + (int(frac.ljust(6, "0")) if frac else 0)


def format_timestamp(us: int, fmt: str = "iso") -> str:
    if fmt == "epoch_us":
        return str(int(us))
    dt = _EPOCH + timedelta(microseconds=int(us))
    return dt.replace(tzinfo=None).isoformat(timespec="microseconds")


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        f = float(text)
        if not f.is_integer():
            raise
        return int(f)


def _read_rows(path, fmt: TickFormat, fields, columns):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=fmt.delimiter)
        idx = dict(columns)
        first = True
        for lineno, row in enumerate(reader, start=1):
            if first and fmt.header:
                first = False
                header = [h.strip() for h in row]
                for f, c in idx.items():
                    if isinstance(c, str):
                        if c not in header:
                            raise ParseAbortError(f"{path}: header lacks column {c!r}")
                        idx[f] = header.index(c)
                continue
            first = False
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, row, [idx[f] for f in fields]


def _parse(path, fmt, fields, columns, convert, validate):
    fmt = fmt or TickFormat()
    report = RejectionReport()
    cols = {f: [] for f in fields}
    for lineno, row, pos in _read_rows(path, fmt, fields, columns):
        report.total += 1
        try:
            values = convert([row[p] for p in pos], fmt.timestamp_format)
        except (ValueError, IndexError) as exc:
            report.reject("malformed")
            report.errors.append(f"line {lineno}: {exc}")
            continue
        reason = validate(values)
        if reason:
            report.reject(reason)
            continue
        for f, v in zip(fields, values):
            cols[f].append(v)
        report.accepted += 1
    malformed = report.rejected.get("malformed", 0)
    if report.total and malformed / report.total > fmt.max_error_rate:
        raise ParseAbortError(
            f"{path}: {malformed}/{report.total} malformed rows exceeds "
            f"{fmt.max_error_rate:.2%}", report)
    order = np.argsort(np.asarray(cols["timestamp"], dtype=np.int64), kind="stable")
    return {f: np.asarray(v)[order] if v else np.asarray(v) for f, v in cols.items()}, report


def _convert_trade(vals, tsfmt):
    return parse_timestamp(vals[0], tsfmt), float(vals[1]), _parse_int(vals[2])


def _validate_trade(v):
    if not v[1] > 0.0:
        return "nonpositive_price"
    if v[2] <= 0:
        return "nonpositive_volume"
    return None


def _convert_quote(vals, tsfmt):
    return parse_timestamp(vals[0], tsfmt), float(vals[1]), float(vals[2])


def _validate_quote(v):
    if not v[1] > 0.0:
        return "nonpositive_bid"
    if not v[2] > 0.0:
        return "nonpositive_ask"
    if v[1] > v[2]:
        return "crossed"
    return None


def parse_trades(path, fmt: TickFormat | None = None) -> tuple[Trades, RejectionReport]:
    """Read a trade file; rows with zero/negative price or volume are rejected
    and counted, unparseable rows are counted as ``malformed``."""
    fmt = fmt or TickFormat()
    cols, report = _parse(path, fmt, TRADE_FIELDS, fmt.trade_columns,
                          _convert_trade, _validate_trade)
    return Trades(**cols), report


def parse_quotes(path, fmt: TickFormat | None = None) -> tuple[Quotes, RejectionReport]:
    """Read a quote file; non-positive and crossed (bid > ask) quotes are rejected."""
    fmt = fmt or TickFormat()
    cols, report = _parse(path, fmt, QUOTE_FIELDS, fmt.quote_columns,
                          _convert_quote, _validate_quote)
    return Quotes(**cols), report


def _write(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_trades(path, trades: Trades, timestamp_format: str = "iso") -> None:
    """Write trades in the default input layout (floats round-trip exactly)."""
    _write(path, TRADE_FIELDS, (
        (format_timestamp(t, timestamp_format), repr(float(p)), int(v))
        for t, p, v in zip(trades.timestamp, trades.price, trades.volume)))


def write_quotes(path, quotes: Quotes, timestamp_format: str = "iso") -> None:
    _write(path, QUOTE_FIELDS, (
        (format_timestamp(t, timestamp_format), repr(float(b)), repr(float(a)))
        for t, b, a in zip(quotes.timestamp, quotes.bid, quotes.ask)))


# -- session filtering -----------------------------------------------------

def _tod(value) -> int:
    """Time-of-day as microseconds after midnight."""
    if isinstance(value, str):
        value = time.fromisoformat(value)
    return ((value.hour * 60 + value.minute) * 60 + value.second) * 1_000_000 + value.microsecond


def _fmt_tod(us: int) -> str:
    s = us // 1_000_000
    return f"{s // 3600:02d}:{s // 60 % 60:02d}:{s % 60:02d}"


@dataclass
class SessionFilter:
    """Trading-session and volume-cap rules.

    Window bounds are half-open ``[start, end)`` times of day, in the local
    clock ``utc_offset_minutes`` ahead of UTC.
    """
    trading_day_start: str = "09:00"
    trading_day_end: str = "17:00"
    excluded_windows: list = field(default_factory=lambda: [("09:00", "09:10"), ("16:50", "17:00")])
    auction_windows: list = field(default_factory=lambda: [("08:30", "09:00"), ("16:50", "17:00")])
    max_volume: int = 10**6
    utc_offset_minutes: int = 0

    def __post_init__(self):
        try:
            self._start = _tod(self.trading_day_start)
            self._end = _tod(self.trading_day_end)
            self._excluded = [(_tod(a), _tod(b)) for a, b in self.excluded_windows]
            self._auction = [(_tod(a), _tod(b)) for a, b in self.auction_windows]
        except (TypeError, ValueError) as exc:
            raise ConfigError("session", f"bad time of day ({exc})") from None
        if not self._start < self._end:
            raise ConfigError("session.trading_day_end", "must be after trading_day_start")
        for k, (a, b) in enumerate(self._excluded):
            if not (self._start <= a < b <= self._end):
                raise ConfigError(f"session.excluded_windows[{k}]",
                                  "must be a non-empty interval inside the trading day")
        for k, (a, b) in enumerate(self._auction):
            if not a < b:
                raise ConfigError(f"session.auction_windows[{k}]", "empty interval")
        if not int(self.max_volume) > 0:
            raise ConfigError("session.max_volume", "must be positive")

    @classmethod
    def from_dict(cls, d: dict | None) -> "SessionFilter":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"session.{sorted(unknown)[0]}", "unknown key")
        for key in ("excluded_windows", "auction_windows"):
            if key in d:
                d[key] = [tuple(w) for w in d[key]]
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "trading_day_start": _fmt_tod(self._start),
            "trading_day_end": _fmt_tod(self._end),
            "excluded_windows": [[_fmt_tod(a), _fmt_tod(b)] for a, b in self._excluded],
            "auction_windows": [[_fmt_tod(a), _fmt_tod(b)] for a, b in self._auction],
            "max_volume": int(self.max_volume),
            "utc_offset_minutes": int(self.utc_offset_minutes),
        }

    def time_of_day(self, ts: np.ndarray) -> np.ndarray:
        return (np.asarray(ts, dtype=np.int64) + self.utc_offset_minutes * 60_000_000) % US_PER_DAY

    def tradable_intervals(self) -> list[tuple[int, int]]:
        """Sub-intervals of the trading day not covered by any window."""
        pieces = [(self._start, self._end)]
        for a, b in self._excluded + self._auction:
            nxt = []
            for lo, hi in pieces:
                if b <= lo or a >= hi:
                    nxt.append((lo, hi))
                    continue
                if lo < a:
                    nxt.append((lo, a))
                if b < hi:
                    nxt.append((b, hi))
            pieces = nxt
        return pieces


def _in_windows(tod, windows):
    hit = np.zeros(tod.shape, dtype=bool)
    for a, b in windows:
        hit |= (tod >= a) & (tod < b)
    return hit


def filter_events(events, session: SessionFilter):
    """Drop events outside the session, inside excluded/auction windows, or
    (trades only) above the volume cap.  Returns (filtered, report)."""
    tod = session.time_of_day(events.timestamp)
    report = RejectionReport(total=len(events))
    keep = np.ones(len(events), dtype=bool)
    rules = [
        ("outside_session", (tod < session._start) | (tod >= session._end)),
        ("excluded_window", _in_windows(tod, session._excluded)),
        ("auction_window", _in_windows(tod, session._auction)),
    ]
    if hasattr(events, "volume"):
        rules.append(("volume_cap", events.volume > session.max_volume))
    for reason, bad in rules:
        hit = keep & bad
        report.reject(reason, int(hit.sum()))
        keep &= ~bad
    report.accepted = int(keep.sum())
    return events.take(keep), report


# -- same-timestamp consolidation ------------------------------------------

def _check_sorted(ts, what):
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise ValueError(f"{what} must be timestamp-ordered")


def aggregate_trades(trades: Trades) -> AggTrades:
    """Merge same-timestamp trades into one VWAP print with summed volume."""
    ts = trades.timestamp
    _check_sorted(ts, "trades")
    if ts.size == 0:
        return AggTrades([], [], [])
    starts = np.flatnonzero(np.r_[True, ts[1:] != ts[:-1]])
    vol = np.add.reduceat(trades.volume, starts)
    value = np.add.reduceat(trades.price * trades.volume, starts)
    vwap = np.clip(value / vol, np.minimum.reduceat(trades.price, starts),
                   np.maximum.reduceat(trades.price, starts))
    return AggTrades(ts[starts], vwap, vol)


def dedupe_quotes(quotes: Quotes) -> Quotes:
    """Keep the last quote (in file order) of every timestamp."""
    ts = quotes.timestamp
    _check_sorted(ts, "quotes")
    if ts.size == 0:
        return quotes
    last = np.flatnonzero(np.r_[ts[1:] != ts[:-1], True])
    return quotes.take(last)
