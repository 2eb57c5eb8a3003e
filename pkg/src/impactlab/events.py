"""Columnar containers for tick events.

A stock-day can hold hundreds of thousands of events, so sequences of
trades/quotes are stored as parallel numpy arrays rather than lists of
records.  Indexing a container yields the per-row record type.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np


class Direction(IntEnum):
    SELLER = -1
    INDETERMINATE = 0
    BUYER = 1

    @property
    def label(self) -> str:
        return {1: "buyer", -1: "seller", 0: "indeterminate"}[int(self)]

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, str):
            key = value.strip().lower()
            for d in cls:
                if key in (d.label, d.name.lower(), str(int(d))):
                    return d
            raise ValueError(f"unknown direction {value!r}")
        return cls(int(value))


class TradeEvent(NamedTuple):
    timestamp: int
    price: float
    volume: int


class QuoteEvent(NamedTuple):
    timestamp: int
    bid: float
    ask: float

    @property
    def mid(self) -> float:
        return (self.bid + self.ask) / 2.0


class AggregatedTrade(NamedTuple):
    timestamp: int
    vwap: float
    total_volume: int


class _Columns:
    _fields: tuple[str, ...] = ()
    _record = tuple

    def __len__(self) -> int:
        return int(getattr(self, self._fields[0]).shape[0])

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return self._record(*(getattr(self, f)[key].item() for f in self._fields))
        return self.take(key)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def take(self, key):
        kw = {f: getattr(self, f)[key] for f in self._fields}
        return type(self)(**kw)

    def equals(self, other) -> bool:
        return type(self) is type(other) and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in self._fields)

    @classmethod
    def from_records(cls, records):
        records = list(records)
        cols = list(zip(*records)) if records else [[] for _ in cls._fields]
        return cls(*cols)


@dataclass(eq=False)
class Trades(_Columns):
    timestamp: np.ndarray
    price: np.ndarray
    volume: np.ndarray
    _fields = ("timestamp", "price", "volume")
    _record = TradeEvent

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.price = np.asarray(self.price, dtype=np.float64)
        self.volume = np.asarray(self.volume, dtype=np.int64)


@dataclass(eq=False)
class Quotes(_Columns):
    timestamp: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    _fields = ("timestamp", "bid", "ask")
    _record = QuoteEvent

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.bid = np.asarray(self.bid, dtype=np.float64)
        self.ask = np.asarray(self.ask, dtype=np.float64)

    @property
    def mid(self) -> np.ndarray:
        return (self.bid + self.ask) / 2.0


@dataclass(eq=False)
class AggTrades(_Columns):
    timestamp: np.ndarray
    vwap: np.ndarray
    total_volume: np.ndarray
    _fields = ("timestamp", "vwap", "total_volume")
    _record = AggregatedTrade

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.vwap = np.asarray(self.vwap, dtype=np.float64)
        self.total_volume = np.asarray(self.total_volume, dtype=np.int64)


class ClassifiedTrade(NamedTuple):
    trade: AggregatedTrade
    direction: Direction
    prevailing_mid: float


@dataclass(eq=False)
class ClassifiedTrades(_Columns):
    """Aggregated trades with an inferred direction and the prevailing midquote."""
    timestamp: np.ndarray
    vwap: np.ndarray
    total_volume: np.ndarray
    direction: np.ndarray
    prevailing_mid: np.ndarray
    _fields = ("timestamp", "vwap", "total_volume", "direction", "prevailing_mid")

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.vwap = np.asarray(self.vwap, dtype=np.float64)
        self.total_volume = np.asarray(self.total_volume, dtype=np.int64)
        self.direction = np.asarray(self.direction, dtype=np.int8)
        self.prevailing_mid = np.asarray(self.prevailing_mid, dtype=np.float64)

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            t = AggregatedTrade(int(self.timestamp[key]), float(self.vwap[key]),
                                int(self.total_volume[key]))
            return ClassifiedTrade(t, Direction(int(self.direction[key])),
                                   float(self.prevailing_mid[key]))
        return self.take(key)

    @property
    def trades(self) -> AggTrades:
        return AggTrades(self.timestamp, self.vwap, self.total_volume)


@dataclass
class RejectionReport:
    """Per-reason tallies for one parsing or filtering stage."""
    total: int = 0
    accepted: int = 0
    rejected: dict[str, int] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    def reject(self, reason: str, n: int = 1) -> None:
        if n:
            self.rejected[reason] = self.rejected.get(reason, 0) + int(n)

    @property
    def n_rejected(self) -> int:
        return sum(self.rejected.values())

    def to_dict(self) -> dict:
        return {"total": self.total, "accepted": self.accepted,
                "rejected": dict(sorted(self.rejected.items())),
                "errors": self.errors[:20]}
