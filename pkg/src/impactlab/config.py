"""Run configuration: loading (TOML or JSON), defaults and validation."""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .collapse import CollapseSettings
from .errors import ConfigError
from .ingest import SessionFilter, TickFormat

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_PERIODS = {"before": ("2013-01-01", "2013-09-27"), "after": ("2013-09-30", "2013-12-31")}


@dataclass
class BinSettings:
    lo_exp: float = -3.2
    hi_exp: float = 1.0
    n_bins: int = 20


@dataclass
class PowerLawSettings:
    volume_threshold: float = 10**-0.9
    n_boot: int = 2500
    seed: int = 0
    min_tail: int = 5
    max_candidates: int = 1000
    significance: float = 0.1


@dataclass
class RunConfig:
    stocks: dict                      # stock -> {"trades": path, "quotes": path}
    groups: dict                      # stock -> group id
    periods: dict = field(default_factory=lambda: dict(DEFAULT_PERIODS))
    session: SessionFilter = field(default_factory=SessionFilter)
    format: TickFormat = field(default_factory=TickFormat)
    bins: BinSettings = field(default_factory=BinSettings)
    powerlaw: PowerLawSettings = field(default_factory=PowerLawSettings)
    collapse: CollapseSettings = field(default_factory=CollapseSettings)
    output_dir: str = "out"
    normalization: str = "period"     # or "whole"
    pooling: str = "group"            # or "stock"
    histogram_bins: int | None = None
    quote_lag_us: int = 0
    workers: int = 1

    def period_bounds(self) -> dict[str, tuple[date, date]]:
        return {k: (date.fromisoformat(a), date.fromisoformat(b)) for k, (a, b) in self.periods.items()}

    def to_dict(self) -> dict:
        return {
            "stocks": {s: dict(v) for s, v in sorted(self.stocks.items())},
            "groups": dict(sorted(self.groups.items())),
            "periods": {k: list(v) for k, v in self.periods.items()},
            "session": self.session.to_dict(),
            "format": dict(self.format.__dict__),
            "bins": dict(self.bins.__dict__),
            "powerlaw": dict(self.powerlaw.__dict__),
            "collapse": {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in self.collapse.__dict__.items()},
            "output_dir": self.output_dir,
            "normalization": self.normalization,
            "pooling": self.pooling,
            "histogram_bins": self.histogram_bins,
            "quote_lag_us": self.quote_lag_us,
            "workers": self.workers,
        }


def _section(cls, d, name):
    d = dict(d or {})
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
    try:
        return cls.from_dict(d) if hasattr(cls, "from_dict") else cls(**d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def _check_periods(periods: dict) -> dict:
    if not periods:
        raise ConfigError("periods", "at least one period required")
    parsed = {}
    for name, span in periods.items():
        try:
            a, b = (date.fromisoformat(str(x)) for x in span)
        except (TypeError, ValueError):
            raise ConfigError(f"periods.{name}", "expected [start, end] ISO dates") from None
        if a > b:
            raise ConfigError(f"periods.{name}", "start after end")
        parsed[name] = (a, b)
    items = sorted(parsed.items(), key=lambda kv: kv[1])
    for (n1, (_, e1)), (n2, (s2, _)) in zip(items, items[1:]):
        if s2 <= e1:
            raise ConfigError("periods", f"periods {n1!r} and {n2!r} overlap")
    return {k: (a.isoformat(), b.isoformat()) for k, (a, b) in parsed.items()}


def build_config(d: dict, base_dir=None, check_files: bool = True) -> RunConfig:
    """Validate a config mapping; relative input paths resolve against ``base_dir``."""
    d = dict(d)
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    stocks = d.get("stocks")
    if not isinstance(stocks, dict) or not stocks:
        raise ConfigError("stocks", "at least one stock with trades and quotes files required")
    resolved = {}
    for s, files in stocks.items():
        if not isinstance(files, dict):
            raise ConfigError(f"stocks.{s}", "expected a table with trades and quotes")
        out = {}
        for kind in ("trades", "quotes"):
            if kind not in files:
                raise ConfigError(f"stocks.{s}.{kind}", "missing")
            p = Path(files[kind])
            p = p if p.is_absolute() else (base / p)
            if check_files and not p.is_file():
                raise ConfigError(f"stocks.{s}.{kind}", f"file not found: {p}")
            out[kind] = str(p.resolve())
        resolved[str(s)] = out

    groups = d.get("groups")
    if groups is None:
        groups = {s: s for s in resolved}
    if not isinstance(groups, dict):
        raise ConfigError("groups", "expected a stock -> group table")
    for s in groups:
        if s not in resolved:
            raise ConfigError(f"groups.{s}", "stock has no input files")
    for s in resolved:
        if s not in groups:
            raise ConfigError(f"groups.{s}", "stock not assigned to a group")

    cfg = RunConfig(
        stocks=resolved,
        groups={str(k): str(v) for k, v in groups.items()},
        periods=_check_periods(d.get("periods", DEFAULT_PERIODS)),
        session=_section(SessionFilter, d.get("session"), "session"),
        format=_section(TickFormat, d.get("format"), "format"),
        bins=_section(BinSettings, d.get("bins"), "bins"),
        powerlaw=_section(PowerLawSettings, d.get("powerlaw"), "powerlaw"),
        collapse=_section(CollapseSettings, d.get("collapse"), "collapse"),
        output_dir=str(d.get("output_dir", "out")),
        normalization=d.get("normalization", "period"),
        pooling=d.get("pooling", "group"),
        histogram_bins=d.get("histogram_bins"),
        quote_lag_us=int(d.get("quote_lag_us", 0)),
        workers=int(d.get("workers", 1)),
    )
    if cfg.normalization not in ("period", "whole"):
        raise ConfigError("normalization", "must be 'period' or 'whole'")
    if cfg.pooling not in ("group", "stock"):
        raise ConfigError("pooling", "must be 'group' or 'stock'")
    b = cfg.bins
    if not (b.n_bins >= 1 and b.lo_exp < b.hi_exp):
        raise ConfigError("bins", "need n_bins >= 1 and lo_exp < hi_exp")
    pl = cfg.powerlaw
    if pl.n_boot != 0 and pl.n_boot < 100:
        raise ConfigError("powerlaw.n_boot", "must be 0 (skip) or >= 100")
    if pl.min_tail < 2:
        raise ConfigError("powerlaw.min_tail", "must be >= 2")
    if not 0 < pl.significance < 1:
        raise ConfigError("powerlaw.significance", "must lie in (0, 1)")
    c = cfg.collapse
    if c.n_bins < 1 or not c.step > 0 or not c.tol > 0:
        raise ConfigError("collapse", "need n_bins >= 1, step > 0, tol > 0")
    for name in ("gamma_bounds", "delta_bounds"):
        lo, hi = getattr(c, name)
        if not lo < hi:
            raise ConfigError(f"collapse.{name}", "lower bound must be below upper bound")
    if cfg.histogram_bins is not None and int(cfg.histogram_bins) < 1:
        raise ConfigError("histogram_bins", "must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    return cfg


def read_mapping(path) -> dict:
    """Parse a TOML or JSON file (chosen by suffix; TOML otherwise)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("config", f"{path}: {exc}") from None


def set_path(d: dict, dotted: str, value) -> None:
    """Set ``a.b.c = value`` inside nested dicts, creating tables as needed."""
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        nxt = cur.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ConfigError(dotted, f"{k!r} is not a table")
        cur = nxt
    cur[keys[-1]] = value


def load_config(path, overrides: dict | None = None, check_files: bool = True) -> RunConfig:
    d = read_mapping(path)
    for k, v in (overrides or {}).items():
        set_path(d, k, v)
    return build_config(d, Path(path).parent, check_files)
