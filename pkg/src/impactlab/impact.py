"""Per-trade log-midquote impacts, volume normalisation, logarithmic binning
and daily-average distributions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .events import ClassifiedTrades, Direction, Quotes
from .fileio import fmt_float, read_csv, write_csv
from .ingest import US_PER_DAY

BIN_LO_EXP = -3.2
BIN_HI_EXP = 1.0
N_BINS = 20
TAIL_THRESHOLD = 10**-0.9


@dataclass(eq=False)
class ImpactObservations:
    """One row per trade: normalised volume ``omega`` and impact ``delta_p``.

    ``omega`` equals the raw volume until :func:`normalize_volumes` runs.
    """
    stock: np.ndarray
    day: np.ndarray
    timestamp: np.ndarray
    volume: np.ndarray
    price: np.ndarray
    omega: np.ndarray
    delta_p: np.ndarray
    direction: np.ndarray

    _fields = ("stock", "day", "timestamp", "volume", "price", "omega", "delta_p", "direction")

    def __len__(self):
        return int(self.omega.shape[0])

    def take(self, key) -> "ImpactObservations":
        return ImpactObservations(**{f: getattr(self, f)[key] for f in self._fields})

    @classmethod
    def empty(cls) -> "ImpactObservations":
        return cls(np.array([], dtype=object), np.array([], dtype=np.int64),
                   np.array([], dtype=np.int64), np.array([], dtype=np.int64),
                   np.array([]), np.array([]), np.array([]), np.array([], dtype=np.int8))

    @classmethod
    def concat(cls, parts) -> "ImpactObservations":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(**{f: np.concatenate([getattr(p, f) for p in parts]) for f in cls._fields})

    def with_direction(self, direction) -> "ImpactObservations":
        return self.take(self.direction == int(direction))


@dataclass
class ImpactReport:
    total: int = 0
    dropped_no_quote_before: int = 0
    dropped_no_quote_after: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compute_impacts(trades: ClassifiedTrades, quotes: Quotes, stock_id: str = "",
                    utc_offset_minutes: int = 0) -> tuple[ImpactObservations, ImpactReport]:
    """delta_p = ln(mid of first quote after) - ln(mid of last quote before).

    Trades missing either quote are dropped and counted.
    """
    report = ImpactReport(total=len(trades))
    before = kernels.prevailing_index(trades.timestamp, quotes.timestamp, np.int64(0))
    after = kernels.following_index(trades.timestamp, quotes.timestamp)
    ok_b = before >= 0
    ok_a = after < len(quotes)
    report.dropped_no_quote_before = int((~ok_b).sum())
    report.dropped_no_quote_after = int((ok_b & ~ok_a).sum())
    keep = ok_b & ok_a
    mid = quotes.mid
    dp = np.log(mid[after[keep]]) - np.log(mid[before[keep]])
    ts = trades.timestamp[keep]
    obs = ImpactObservations(
        stock=np.full(ts.shape[0], stock_id, dtype=object),
        day=(ts + utc_offset_minutes * 60_000_000) // US_PER_DAY,
        timestamp=ts,
        volume=trades.total_volume[keep],
        price=trades.vwap[keep],
        omega=trades.total_volume[keep].astype(np.float64),
        delta_p=dp,
        direction=trades.direction[keep],
    )
    return obs, report


def normalize_volumes(obs: ImpactObservations, raw_volumes: dict) -> ImpactObservations:
    """omega = volume / mean(raw volumes of the same stock)."""
    omega = np.empty(len(obs))
    for stock in np.unique(obs.stock):
        sel = obs.stock == stock
        vols = np.asarray(raw_volumes[stock], dtype=np.float64)
        if vols.size == 0:
            raise ValueError(f"no raw volumes for stock {stock!r}")
        omega[sel] = obs.volume[sel] / vols.mean()
    out = obs.take(slice(None))
    out.omega = omega
    return out


def log_bin_edges(lo_exp: float = BIN_LO_EXP, hi_exp: float = BIN_HI_EXP,
                  n_bins: int = N_BINS) -> np.ndarray:
    return np.logspace(lo_exp, hi_exp, n_bins + 1)


@dataclass(eq=False)
class BinnedCurve:
    """Average impact per logarithmic volume bin; empty bins hold nan."""
    edges: np.ndarray
    omega_star: np.ndarray
    delta_p_star: np.ndarray
    count: np.ndarray
    direction: Direction = Direction.BUYER
    group_id: str = ""
    n_out_of_range: int = 0

    @property
    def n_bins(self) -> int:
        return int(self.count.shape[0])

    def nonempty(self):
        m = self.count > 0
        return self.omega_star[m], self.delta_p_star[m], self.count[m]

    def points(self) -> list[tuple[float, float, int]]:
        return [(float(o), float(d), int(c)) for o, d, c in zip(*self.nonempty())]

    def plot_values(self):
        """(omega_star, impact) of nonempty bins with seller impacts sign-flipped."""
        o, d, _ = self.nonempty()
        return o, (-d if self.direction == Direction.SELLER else d)

    def above(self, threshold: float) -> "BinnedCurve":
        """Copy keeping only bins whose omega_star exceeds ``threshold``."""
        m = (self.count > 0) & (self.omega_star > threshold)
        return BinnedCurve(self.edges, np.where(m, self.omega_star, np.nan),
                           np.where(m, self.delta_p_star, np.nan), np.where(m, self.count, 0),
                           self.direction, self.group_id, self.n_out_of_range)

    def to_csv(self, path):
        rows = [(fmt_float(self.edges[k]), fmt_float(self.edges[k + 1]),
                 fmt_float(self.omega_star[k]), fmt_float(self.delta_p_star[k]), int(self.count[k]))
                for k in range(self.n_bins) if self.count[k] > 0]
        return write_csv(path, ("bin_lo", "bin_hi", "omega_star", "delta_p_star", "count"), rows)

    @classmethod
    def from_csv(cls, path, direction=Direction.BUYER, group_id="", edges=None) -> "BinnedCurve":
        """Rebuild a curve from its CSV; bins absent from the file are empty."""
        _, rows = read_csv(path)
        edges = log_bin_edges() if edges is None else np.asarray(edges, dtype=float)
        n = edges.size - 1
        om, dp, cnt = np.full(n, np.nan), np.full(n, np.nan), np.zeros(n, dtype=np.int64)
        for lo, hi, o, d, c in rows:
            k = int(np.argmin(np.abs(np.log(edges[:-1]) - math.log(float(lo)))))
            if not math.isclose(edges[k], float(lo), rel_tol=1e-9):
                # file written with different edges: take them from the file
                return cls._from_rows(rows, direction, group_id)
            om[k], dp[k], cnt[k] = float(o), float(d), int(c)
        return cls(edges, om, dp, cnt, Direction.parse(direction), group_id)

    @classmethod
    def _from_rows(cls, rows, direction, group_id):
        lo = np.array([float(r[0]) for r in rows])
        hi = np.array([float(r[1]) for r in rows])
        return cls(np.r_[lo, hi[-1:]], np.array([float(r[2]) for r in rows]),
                   np.array([float(r[3]) for r in rows]), np.array([int(r[4]) for r in rows]),
                   Direction.parse(direction), group_id)


def bin_index(omega: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin of each omega ([lo, hi) bins, last bin closed); -1 when out of range."""
    n = edges.size - 1
    idx = np.searchsorted(edges, omega, side="right") - 1
    idx[omega == edges[-1]] = n - 1
    idx[(omega < edges[0]) | (omega > edges[-1]) | np.isnan(omega)] = -1
    return idx


def bin_curve(obs: ImpactObservations, edges: np.ndarray | None = None,
              direction: Direction = Direction.BUYER, group_id: str = "") -> BinnedCurve:
    """Arithmetic-mean omega and delta_p per bin for one trade direction."""
    edges = log_bin_edges() if edges is None else np.asarray(edges, dtype=float)
    n = edges.size - 1
    sub = obs.with_direction(direction)
    idx = bin_index(sub.omega, edges)
    ok = idx >= 0
    cnt = np.bincount(idx[ok], minlength=n)
    safe = np.maximum(cnt, 1)
    so = np.bincount(idx[ok], weights=sub.omega[ok], minlength=n)
    sd = np.bincount(idx[ok], weights=sub.delta_p[ok], minlength=n)
    empty = cnt == 0
    omega_star = np.where(empty, np.nan, np.clip(so / safe, edges[:-1], edges[1:]))
    dp_star = np.where(empty, np.nan, sd / safe)
    return BinnedCurve(edges, omega_star, dp_star, cnt, Direction(int(direction)),
                       group_id, int((~ok).sum()))


# -- Daily averages --------------------------------------------------------

@dataclass
class LogHistogram:
    """Normalised histogram on a log10 axis; ``masses`` sum to 1."""
    log10_edges: np.ndarray
    counts: np.ndarray
    n_dropped: int = 0

    @property
    def masses(self) -> np.ndarray:
        tot = self.counts.sum()
        return self.counts / tot if tot else self.counts.astype(float)


def log_histogram(values, n_bins: int) -> LogHistogram:
    """Equal-width bins over the log10 range of the positive values."""
    v = np.asarray(values, dtype=float)
    pos = v[v > 0]
    if pos.size == 0:
        return LogHistogram(np.array([]), np.array([], dtype=np.int64), int(v.size))
    counts, edges = np.histogram(np.log10(pos), bins=int(n_bins))
    return LogHistogram(edges, counts, int(v.size - pos.size))


@dataclass
class DailyAverages:
    stock: np.ndarray
    day: np.ndarray
    direction: np.ndarray
    n_trades: np.ndarray
    mean_volume: np.ndarray
    mean_delta_p: np.ndarray
    mean_price: np.ndarray
    histograms: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.day.shape[0])

    def to_csv(self, path):
        rows = [(s, int(d), Direction(int(r)).label, int(n), fmt_float(v), fmt_float(i), fmt_float(p))
                for s, d, r, n, v, i, p in zip(self.stock, self.day, self.direction, self.n_trades,
                                               self.mean_volume, self.mean_delta_p, self.mean_price)]
        return write_csv(path, ("stock", "day", "direction", "n_trades", "mean_volume",
                                "mean_delta_p", "mean_price"), rows)


QUANTITIES = ("volume", "impact", "price")


def daily_distributions(obs: ImpactObservations, n_days: int,
                        n_bins: int | None = None) -> DailyAverages:
    """Per (stock, day, direction) means plus pooled log-axis histograms.

    The histogram uses ceil(n_days) bins unless ``n_bins`` is given.  Seller
    impacts enter the impact histogram sign-flipped; non-positive values
    cannot sit on a log axis and are counted in ``n_dropped``.
    """
    if n_days <= 0:
        raise ValueError("n_days must be positive")
    sided = obs.take(obs.direction != 0)
    if len(sided):
        codes, stock_idx = np.unique(sided.stock.astype(str), return_inverse=True)
        keys = np.stack([stock_idx, sided.day, sided.direction.astype(np.int64)], axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        n = np.bincount(inv)
        mean = lambda w: np.bincount(inv, weights=w) / n  # noqa: E731
        out = DailyAverages(codes[uniq[:, 0]].astype(object), uniq[:, 1], uniq[:, 2].astype(np.int8), n,
                            mean(sided.volume.astype(float)), mean(sided.delta_p), mean(sided.price))
    else:
        e = np.array([])
        out = DailyAverages(e.astype(object), e.astype(np.int64), e.astype(np.int8),
                            e.astype(np.int64), e, e, e)
    bins = int(n_bins) if n_bins is not None else int(math.ceil(n_days))
    for d in (Direction.BUYER, Direction.SELLER):
        sel = out.direction == int(d)
        series = {"volume": out.mean_volume[sel], "impact": int(d) * out.mean_delta_p[sel],
                  "price": out.mean_price[sel]}
        for q in QUANTITIES:
            out.histograms[(q, d.label)] = log_histogram(series[q], bins)
    return out


def loglog_slope(curve: BinnedCurve, threshold: float = TAIL_THRESHOLD) -> float:
    """Least-squares slope of log|delta_p*| on log(omega*) over bins above ``threshold``."""
    o, d = curve.plot_values()
    m = (o > threshold) & (d > 0)
    if m.sum() < 2:
        raise ValueError("need two bins above the threshold with positive impact")
    return float(np.polyfit(np.log(o[m]), np.log(d[m]), 1)[0])
