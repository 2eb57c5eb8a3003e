"""End-to-end run: ingest -> classify -> impact -> fit -> collapse -> report."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from . import __version__
from .classify import classify_stream
from .collapse import fit_collapse, liquidity_proxy
from .config import RunConfig
from .errors import ImpactLabError, MissingDependencyError
from .events import ClassifiedTrades, Direction
from .fileio import fmt_float, read_csv, write_csv, write_json
from .impact import (ImpactObservations, bin_curve, compute_impacts, daily_distributions,
                     log_bin_edges)
from .ingest import aggregate_trades, dedupe_quotes, filter_events, parse_quotes, parse_trades
from .powerlaw import fit_tail_impacts

DIRECTIONS = (Direction.BUYER, Direction.SELLER)
_EPOCH = date(1970, 1, 1)


@dataclass
class StockData:
    stock: str
    stages: dict
    classified: ClassifiedTrades | None = None
    obs: ImpactObservations | None = None
    error: str | None = None


def _stage(n_in, n_out, rejected: dict) -> dict:
    return {"in": int(n_in), "out": int(n_out),
            "rejected": {k: int(v) for k, v in sorted(rejected.items()) if v}}


def process_stock(cfg: RunConfig, stock: str) -> StockData:
    """Per-stock stages up to impact observations; errors are captured, not raised."""
    files = cfg.stocks[stock]
    stages = {}
    try:
        trades, rep_t = parse_trades(files["trades"], cfg.format)
        quotes, rep_q = parse_quotes(files["quotes"], cfg.format)
        stages["parse_trades"] = _stage(rep_t.total, rep_t.accepted, rep_t.rejected)
        stages["parse_quotes"] = _stage(rep_q.total, rep_q.accepted, rep_q.rejected)
        trades, f_t = filter_events(trades, cfg.session)
        quotes, f_q = filter_events(quotes, cfg.session)
        stages["filter_trades"] = _stage(f_t.total, f_t.accepted, f_t.rejected)
        stages["filter_quotes"] = _stage(f_q.total, f_q.accepted, f_q.rejected)
        agg = aggregate_trades(trades)
        stages["aggregate_trades"] = _stage(len(trades), len(agg), {"merged": len(trades) - len(agg)})
        dq = dedupe_quotes(quotes)
        stages["dedupe_quotes"] = _stage(len(quotes), len(dq), {"superseded": len(quotes) - len(dq)})
        classified, rc = classify_stream(agg, dq, cfg.quote_lag_us)
        stages["classify"] = _stage(rc.total, len(classified), {"no_prevailing_quote": rc.dropped_no_quote})
        stages["classify"].update(quote_rule=rc.quote_rule, tick_rule=rc.tick_rule,
                                  indeterminate=rc.indeterminate)
        obs, ri = compute_impacts(classified, dq, stock, cfg.session.utc_offset_minutes)
        stages["impact"] = _stage(ri.total, len(obs), {"no_quote_before": ri.dropped_no_quote_before,
                                                       "no_quote_after": ri.dropped_no_quote_after})
        return StockData(stock, stages, classified, obs)
    except (ImpactLabError, ValueError, OSError) as exc:
        return StockData(stock, stages, error=f"{type(exc).__name__}: {exc}")


def _day_index(d: date) -> int:
    return (d - _EPOCH).days


def _trade_days(ts, utc_offset_minutes):
    return (np.asarray(ts, dtype=np.int64) + utc_offset_minutes * 60_000_000) // 86_400_000_000


def _normalize(obs: ImpactObservations, raw: np.ndarray) -> ImpactObservations:
    out = obs.take(slice(None))
    out.omega = obs.volume / raw.mean()
    return out


@dataclass
class RunReport:
    version: str
    config: dict
    seeds: dict
    stages: dict = field(default_factory=dict)
    failed_stocks: dict = field(default_factory=dict)
    periods: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    output_dir: str = ""

    def to_dict(self) -> dict:
        return {"version": self.version, "config": self.config, "seeds": self.seeds,
                "stages": self.stages, "failed_stocks": self.failed_stocks,
                "periods": self.periods, "files": sorted(self.files)}

    @classmethod
    def load(cls, path) -> "RunReport":
        path = Path(path)
        if not path.is_file():
            raise MissingDependencyError(str(path), "run report not found")
        d = json.loads(path.read_text())
        return cls(d["version"], d["config"], d["seeds"], d["stages"], d["failed_stocks"],
                   d["periods"], d["files"], str(path.parent))


class _Writer:
    """Writes under the run directory and records relative paths."""

    def __init__(self, root: Path, files: list):
        self.root, self.files = root, files

    def path(self, *parts) -> Path:
        rel = Path(*parts)
        self.files.append(rel.as_posix())
        return self.root / rel


def _write_histograms(path, daily):
    rows = []
    for (q, d), h in sorted(daily.histograms.items()):
        masses = h.masses
        for k in range(h.counts.size):
            rows.append((q, d, fmt_float(h.log10_edges[k]), fmt_float(h.log10_edges[k + 1]),
                         int(h.counts[k]), fmt_float(masses[k])))
    write_csv(path, ("quantity", "direction", "log10_lo", "log10_hi", "count", "mass"), rows)


def _group_period(cfg, w, period, group, obs, classified, n_days):
    """Curves, fits, daily distributions and liquidity proxy for one group in one period."""
    rec = {"status": "ok", "n_obs": len(obs), "curves": {}, "fits": {}, "errors": {}}
    if len(obs) == 0:
        rec["status"] = "failed"
        rec["errors"]["group"] = "no impact observations survive filtering in this period"
        return rec, None
    edges = log_bin_edges(cfg.bins.lo_exp, cfg.bins.hi_exp, cfg.bins.n_bins)
    pl = cfg.powerlaw
    curves = {}
    for d in DIRECTIONS:
        curve = bin_curve(obs, edges, d, group)
        curves[d] = curve
        curve.to_csv(w.path(period, group, f"curve_{d.label}.csv"))
        rec["curves"][d.label] = {"n_in_range": int(curve.count.sum()),
                                  "n_out_of_range": curve.n_out_of_range}
        try:
            fit = fit_tail_impacts(curve, pl.volume_threshold, pl.n_boot, pl.seed,
                                   pl.min_tail, pl.max_candidates)
            out = fit.to_dict(group=group, direction=d.label, period=period)
            out["significant"] = None if fit.p_value is None else bool(fit.p_value > pl.significance)
            write_json(w.path(period, group, f"powerlaw_{d.label}.json"), out)
            rec["fits"][d.label] = "ok"
        except (ImpactLabError, ValueError) as exc:
            rec["fits"][d.label] = "failed"
            rec["errors"][f"powerlaw_{d.label}"] = f"{type(exc).__name__}: {exc}"
    daily = daily_distributions(obs, n_days, cfg.histogram_bins)
    daily.to_csv(w.path(period, group, "daily.csv"))
    _write_histograms(w.path(period, group, "histograms.csv"), daily)
    proxy = liquidity_proxy(classified, n_days, group)
    rec["C"] = proxy.C
    rec["n_days"] = n_days
    return rec, (curves, proxy)


def run_pipeline(cfg: RunConfig, output_dir=None) -> RunReport:
    """Run every stage for every period and group; per-group failures are
    recorded in the report and do not stop the others."""
    root = Path(output_dir if output_dir is not None else cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    echo = cfg.to_dict()
    echo.pop("output_dir")
    report = RunReport(__version__, echo,
                       {"powerlaw_bootstrap": cfg.powerlaw.seed}, output_dir=str(root))
    w = _Writer(root, report.files)

    stocks = sorted(cfg.stocks)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        data = list(pool.map(lambda s: process_stock(cfg, s), stocks))
    ok = {}
    for sd in data:
        report.stages[sd.stock] = sd.stages
        if sd.error:
            report.failed_stocks[sd.stock] = sd.error
        else:
            ok[sd.stock] = sd

    off = cfg.session.utc_offset_minutes
    # per-stock pooling makes every stock its own curve unit
    assign = cfg.groups if cfg.pooling == "group" else {s: s for s in cfg.stocks}
    groups = sorted(set(assign.values()))
    for period, (a, b) in cfg.period_bounds().items():
        lo, hi = _day_index(a), _day_index(b)
        in_period = {}
        days_seen = set()
        for s, sd in ok.items():
            tdays = _trade_days(sd.classified.timestamp, off)
            sel = (tdays >= lo) & (tdays <= hi)
            days_seen.update(np.unique(tdays[sel]).tolist())
            obs = sd.obs.take((sd.obs.day >= lo) & (sd.obs.day <= hi))
            raw = sd.classified.total_volume[sel] if cfg.normalization == "period" else sd.classified.total_volume
            if len(obs):
                obs = _normalize(obs, raw)
            in_period[s] = (obs, sd.classified.take(sel))
        n_days = len(days_seen)
        prec = {"n_days": n_days, "groups": {}, "collapse": {}}
        report.periods[period] = prec
        for_collapse = []

        def one_group(group):
            members = [s for s in sorted(assign) if assign[s] == group and s in in_period]
            obs = ImpactObservations.concat([in_period[s][0] for s in members])
            classified = [in_period[s][1] for s in members]
            try:
                if not members:
                    raise ValueError("every stock in the group failed upstream")
                return _group_period(cfg, w, period, group, obs, classified, max(n_days, 1))
            except (ImpactLabError, ValueError) as exc:
                return {"status": "failed", "errors": {"group": f"{type(exc).__name__}: {exc}"}}, None

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(one_group, groups))
        for group, (rec, payload) in zip(groups, results):
            prec["groups"][group] = rec
            if payload is not None:
                for_collapse.append(payload)

        for d in DIRECTIONS:
            key = d.label
            if len(for_collapse) < 2:
                prec["collapse"][key] = {"status": "skipped", "reason": "fewer than two usable groups"}
                continue
            try:
                res = fit_collapse([c[d] for c, _ in for_collapse], [p for _, p in for_collapse],
                                   cfg.collapse)
                write_json(w.path(period, f"collapse_{key}.json"),
                           res.to_dict(period=period, direction=key))
                res.to_csv(w.path(period, f"collapse_{key}.csv"))
                prec["collapse"][key] = {"status": "ok", "flags": list(res.flags)}
            except (ImpactLabError, ValueError) as exc:
                prec["collapse"][key] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}

    write_json(root / "config.json", report.config)
    write_json(root / "report.json", report.to_dict())
    return report


# -- plot-ready projections --------------------------------------------------

def _need(root: Path, rel: str) -> Path:
    p = root / rel
    if not p.is_file():
        raise MissingDependencyError(rel, f"upstream output {rel} is missing")
    return p


def emit_plot_data(report: RunReport | str | Path, out_dir=None) -> list[str]:
    """One CSV per figure panel: impact curves, collapse (raw and rescaled)
    and daily-average histograms (masses sum to 1)."""
    if not isinstance(report, RunReport):
        report = RunReport.load(Path(report) / "report.json" if Path(report).is_dir() else report)
    root = Path(report.output_dir)
    out = Path(out_dir) if out_dir is not None else root / "plots"
    written = []
    for period, prec in report.periods.items():
        for group, rec in prec["groups"].items():
            if rec.get("status") != "ok":
                continue
            for d in DIRECTIONS:
                _, rows = read_csv(_need(root, f"{period}/{group}/curve_{d.label}.csv"))
                p = out / f"curves_{period}_{d.label}_{group}.csv"
                write_csv(p, ("omega_star", "delta_p_star", "count"), [r[2:5] for r in rows])
                written.append(p)
            _, rows = read_csv(_need(root, f"{period}/{group}/histograms.csv"))
            panels = {}
            for q, d, lo, hi, _count, mass in rows:
                panels.setdefault((q, d), []).append((lo, hi, mass))
            for (q, d), vals in sorted(panels.items()):
                p = out / f"hist_{period}_{q}_{d}_{group}.csv"
                write_csv(p, ("log10_lo", "log10_hi", "mass"), vals)
                written.append(p)
        for key, crec in prec["collapse"].items():
            if crec.get("status") != "ok":
                continue
            _, rows = read_csv(_need(root, f"{period}/collapse_{key}.csv"))
            p = out / f"collapse_{period}_{key}.csv"
            write_csv(p, ("group", "series", "x", "y"),
                      [(g, "rescaled" if s == "1" else "unscaled", x, y) for g, s, x, y in rows])
            written.append(p)
    return [str(p) for p in written]
