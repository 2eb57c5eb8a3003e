"""Seeded synthetic markets with known directions and impacts, plus analytic
power-law samples and constructed collapse families."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .collapse import LiquidityProxy
from .errors import ConfigError
from .events import Direction, Quotes, Trades
from .impact import BinnedCurve, log_bin_edges
from .ingest import US_PER_DAY, SessionFilter, write_quotes, write_trades

# quote at slot start, trade one microsecond later, post-trade quote one after that
SLOT_US = 4


def powerlaw_from_uniform(u, alpha: float, x_min: float) -> np.ndarray:
    """Inverse CDF of the continuous power law: x_min * (1 - u)**(-1/(alpha - 1))."""
    return x_min * (1.0 - np.asarray(u, dtype=np.float64)) ** (-1.0 / (alpha - 1.0))


def gen_powerlaw_samples(alpha: float, x_min: float, n: int, seed: int) -> np.ndarray:
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if not x_min > 0:
        raise ValueError("x_min must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    return powerlaw_from_uniform(np.random.default_rng(seed).random(n), alpha, x_min)


@dataclass
class GroupSpec:
    group_id: str
    C_target: float | None = None
    alpha_impact: float = 0.3
    lam: float = 5000.0
    trade_rate: float = 200.0
    mean_volume: float = 1000.0
    volume_sigma: float = 1.0
    spread: float = 0.002
    price0: float = 100.0
    n_stocks: int = 1

    def __post_init__(self):
        if not 0 < self.alpha_impact <= 1:
            raise ConfigError(f"groups.{self.group_id}.alpha_impact", "must lie in (0, 1]")
        for name in ("lam", "trade_rate", "mean_volume", "price0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"groups.{self.group_id}.{name}", "must be positive")
        if self.C_target is not None and not self.C_target > 0:
            raise ConfigError(f"groups.{self.group_id}.C_target", "must be positive")
        if not 0 <= self.spread < 2:
            raise ConfigError(f"groups.{self.group_id}.spread", "must lie in [0, 2)")
        if self.volume_sigma < 0 or self.n_stocks < 1:
            raise ConfigError(f"groups.{self.group_id}", "volume_sigma >= 0 and n_stocks >= 1 required")


@dataclass
class MarketScenario:
    """Everything needed to regenerate a synthetic market bit-for-bit.

    ``spread`` is relative to the midquote, ``volatility`` is the standard
    deviation of the log-midquote step between trades and ``noise_sigma``
    the log-scale of mean-one lognormal noise on impact magnitudes.
    """
    groups: list = field(default_factory=lambda: [GroupSpec("G1")])
    session: SessionFilter = field(default_factory=SessionFilter)
    n_days: int = 5
    start_date: str = "2013-01-02"
    seed: int = 0
    buy_prob: float = 0.5
    midquote_fraction: float = 0.0
    noise_sigma: float = 0.0
    volatility: float = 1e-4
    split_prob: float = 0.0
    dup_quote_prob: float = 0.0
    gamma_0: float = 0.3
    delta_0: float = 0.3
    master: str = "power"
    beta: float = 0.5
    collapse_noise: float = 0.0
    collapse_count: int = 100

    def __post_init__(self):
        self.groups = [g if isinstance(g, GroupSpec) else GroupSpec(**g) for g in self.groups]
        if not isinstance(self.session, SessionFilter):
            self.session = SessionFilter.from_dict(self.session)
        if not self.groups:
            raise ConfigError("groups", "at least one group required")
        ids = [g.group_id for g in self.groups]
        if len(set(ids)) != len(ids):
            raise ConfigError("groups", "group ids must be unique")
        if self.n_days < 1:
            raise ConfigError("n_days", "must be >= 1")
        for name in ("buy_prob", "midquote_fraction", "split_prob", "dup_quote_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(name, "must lie in [0, 1]")
        for name in ("noise_sigma", "volatility", "collapse_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be nonnegative")
        if self.master not in MASTER_FUNCTIONS:
            raise ConfigError("master", f"must be one of {sorted(MASTER_FUNCTIONS)}")
        try:
            date.fromisoformat(self.start_date)
        except ValueError:
            raise ConfigError("start_date", "not an ISO date") from None

    @classmethod
    def from_dict(cls, d: dict) -> "MarketScenario":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown scenario key")
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["groups"] = [asdict(g) for g in self.groups]
        out["session"] = self.session.to_dict()
        return out

    def trading_days(self) -> list[date]:
        """Consecutive weekdays from ``start_date``."""
        d = date.fromisoformat(self.start_date)
        days = []
        while len(days) < self.n_days:
            if d.weekday() < 5:
                days.append(d)
            d += timedelta(days=1)
        return days


@dataclass(eq=False)
class LabeledTape:
    """Raw trade/quote streams of one stock with per-trade ground truth.

    Labels are indexed by distinct trade timestamp (``label_timestamp``),
    i.e. they align with the aggregated trade stream.
    """
    stock_id: str
    group_id: str
    trades: Trades
    quotes: Quotes
    label_timestamp: np.ndarray
    true_directions: np.ndarray
    true_impacts: np.ndarray
    omega: np.ndarray
    at_mid: np.ndarray
    volume: np.ndarray
    seed: tuple = ()

    def __len__(self):
        return int(self.label_timestamp.shape[0])

    def write(self, directory) -> dict:
        """Write ``<stock>_trades.csv``, ``<stock>_quotes.csv`` and the label sidecar."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {k: d / f"{self.stock_id}_{k}.csv" for k in ("trades", "quotes", "labels")}
        write_trades(paths["trades"], self.trades)
        write_quotes(paths["quotes"], self.quotes)
        with paths["labels"].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("timestamp", "direction", "omega", "impact", "at_mid"))
            for row in zip(self.label_timestamp, self.true_directions, self.omega,
                           self.true_impacts, self.at_mid):
                w.writerow((int(row[0]), Direction(int(row[1])).label, repr(float(row[2])),
                            repr(float(row[3])), int(row[4])))
        return {k: str(p) for k, p in paths.items()}


def _trade_times(rng, days, session: SessionFilter, rate_per_hour: float) -> np.ndarray:
    """Slot starts (multiples of SLOT_US) spread uniformly over tradable time."""
    intervals = session.tradable_intervals()
    usable = [(a, b) for a, b in intervals if (b - a) // SLOT_US >= 1]
    if not usable:
        raise ConfigError("session", "no tradable time left after excluded and auction windows")
    epoch = date(1970, 1, 1)
    offset = session.utc_offset_minutes * 60_000_000
    out = []
    for day in days:
        base = (day - epoch).days * US_PER_DAY - offset
        for a, b in usable:
            n_slots = (b - a) // SLOT_US
            k = min(int(rng.poisson(rate_per_hour * (b - a) / 3.6e9)), n_slots)
            picked = np.unique(rng.integers(0, n_slots, size=k))
            while picked.size < k:
                extra = rng.integers(0, n_slots, size=k - picked.size)
                picked = np.unique(np.r_[picked, extra])
            out.append(base + a + SLOT_US * picked.astype(np.int64))
    return np.concatenate(out) if out else np.array([], dtype=np.int64)


def _stock_tape(sc: MarketScenario, g: GroupSpec, gi: int, si: int, days) -> LabeledTape:
    seed = (int(sc.seed), gi, si)
    rng = np.random.default_rng(list(seed))
    slots = _trade_times(rng, days, sc.session, g.trade_rate)
    n = slots.size
    vols = np.exp(np.log(g.mean_volume) - 0.5 * g.volume_sigma**2 + g.volume_sigma * rng.standard_normal(n))
    vols = np.clip(np.rint(vols), 1, sc.session.max_volume).astype(np.int64)
    omega = vols / vols.mean() if n else vols.astype(np.float64)
    sign = np.where(rng.random(n) < sc.buy_prob, 1, -1).astype(np.int8)
    noise = (np.exp(sc.noise_sigma * rng.standard_normal(n) - 0.5 * sc.noise_sigma**2)
             if sc.noise_sigma > 0 else np.ones(n))
    impact = sign * omega**g.alpha_impact / g.lam * noise
    steps = sc.volatility * rng.standard_normal(n)
    at_mid = rng.random(n) < sc.midquote_fraction
    split = rng.random(n) < sc.split_prob
    dup = rng.random(n) < sc.dup_quote_prob
    split_frac = rng.random(n)

    price0 = g.price0
    if g.C_target is not None and n:
        price0 = g.C_target * len(days) / (vols.sum() * g.n_stocks)
    # log mid before trade i = log mid after trade i-1 + random-walk step
    log_pre = np.log(price0) + np.cumsum(steps) + np.r_[0.0, np.cumsum(impact)[:-1]]
    log_post = log_pre + impact
    mid_pre, mid_post = np.exp(log_pre), np.exp(log_post)
    half = g.spread / 2.0
    bid_pre, ask_pre = mid_pre * (1 - half), mid_pre * (1 + half)
    price = np.where(sign > 0, ask_pre, bid_pre)
    price = np.where(at_mid, (bid_pre + ask_pre) / 2.0, price)
    # quotes: [stale duplicate], pre-trade, post-trade
    q_ts = [slots[dup], slots, slots + 2]
    q_bid = [bid_pre[dup] * (1 - half), bid_pre, mid_post * (1 - half)]
    q_ask = [ask_pre[dup] * (1 + half), ask_pre, mid_post * (1 + half)]
    q_rank = [np.zeros(dup.sum()), np.ones(n), np.full(n, 2)]
    q_ts, q_bid, q_ask, q_rank = map(np.concatenate, (q_ts, q_bid, q_ask, q_rank))
    order = np.lexsort((q_rank, q_ts))
    quotes = Quotes(q_ts[order], q_bid[order], q_ask[order])

    # trades: split prints share the timestamp and price, so VWAP is unchanged
    can_split = split & (vols >= 2)
    v1 = np.where(can_split, np.clip(np.rint(vols * split_frac), 1, vols - 1), vols)
    t_ts = np.r_[slots + 1, slots[can_split] + 1]
    t_px = np.r_[price, price[can_split]]
    t_vol = np.r_[v1, (vols - v1)[can_split]]
    t_rank = np.r_[np.zeros(n), np.ones(can_split.sum())]
    order = np.lexsort((t_rank, t_ts))
    trades = Trades(t_ts[order], t_px[order], t_vol[order].astype(np.int64))

    return LabeledTape(f"{g.group_id}_{si}", g.group_id, trades, quotes, slots + 1, sign,
                       impact, omega, at_mid, vols, seed)


def gen_market(scenario: MarketScenario) -> dict[str, list[LabeledTape]]:
    """One labelled tape per stock, grouped by group id.

    Each stock draws from its own generator seeded by (seed, group, stock),
    so tapes do not depend on generation order.
    """
    days = scenario.trading_days()
    return {g.group_id: [_stock_tape(scenario, g, gi, si, days) for si in range(g.n_stocks)]
            for gi, g in enumerate(scenario.groups)}


def write_market(tapes: dict, directory) -> dict:
    """Write every tape; returns {stock: {trades, quotes, labels}} paths."""
    return {t.stock_id: t.write(directory) for ts in tapes.values() for t in ts}


MASTER_FUNCTIONS = {
    "power": lambda z, beta: z**beta,
    "log1p": lambda z, beta: np.log1p(z) ** beta,
    "saturating": lambda z, beta: z**beta / (1.0 + z**beta),
}


def master_curve(z, name: str = "power", beta: float = 0.5) -> np.ndarray:
    return MASTER_FUNCTIONS[name](np.asarray(z, dtype=np.float64), beta)


def gen_collapse_family(scenario: MarketScenario, edges=None) -> list[tuple[BinnedCurve, LiquidityProxy]]:
    """Curves delta_p* = C**-gamma_0 * f(omega* / C**delta_0) on the bin
    centres (geometric midpoints) of the standard impact grid.

    Each group's C is its ``C_target``.  ``collapse_noise`` > 0 multiplies
    every point by mean-one lognormal noise.
    """
    edges = log_bin_edges() if edges is None else np.asarray(edges, dtype=float)
    centres = np.sqrt(edges[:-1] * edges[1:])
    out = []
    for gi, g in enumerate(scenario.groups):
        if g.C_target is None:
            raise ConfigError(f"groups.{g.group_id}.C_target", "required for a collapse family")
        C = float(g.C_target)
        dp = C**-scenario.gamma_0 * master_curve(centres / C**scenario.delta_0,
                                                 scenario.master, scenario.beta)
        if scenario.collapse_noise > 0:
            rng = np.random.default_rng([int(scenario.seed), gi, 1])
            s = scenario.collapse_noise
            dp = dp * np.exp(s * rng.standard_normal(dp.size) - 0.5 * s * s)
        count = np.full(centres.size, int(scenario.collapse_count), dtype=np.int64)
        curve = BinnedCurve(edges, centres.copy(), dp, count, Direction.BUYER, g.group_id)
        out.append((curve, LiquidityProxy(g.group_id, C)))
    return out


def run_config_for(scenario: MarketScenario, paths: dict, output_dir: str = "out") -> dict:
    """A pipeline config covering a written market: trading days split into
    "before"/"after" halves (a single "all" period for one day)."""
    days = scenario.trading_days()
    if len(days) >= 2:
        h = len(days) // 2
        periods = {"before": [days[0].isoformat(), days[h - 1].isoformat()],
                   "after": [days[h].isoformat(), days[-1].isoformat()]}
    else:
        periods = {"all": [days[0].isoformat(), days[0].isoformat()]}
    groups = {t: g.group_id for g in scenario.groups for t in
              (f"{g.group_id}_{k}" for k in range(g.n_stocks))}
    return {
        "stocks": {s: {"trades": Path(p["trades"]).name, "quotes": Path(p["quotes"]).name}
                   for s, p in sorted(paths.items())},
        "groups": groups,
        "periods": periods,
        "session": scenario.session.to_dict(),
        "output_dir": output_dir,
    }
