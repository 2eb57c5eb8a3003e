"""Command-line interface.  Failures exit nonzero with a JSON error on stderr."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classify import classify_stream, read_classified, write_classified
from .collapse import CollapseSettings, LiquidityProxy, fit_collapse
from .config import load_config, read_mapping
from .errors import ConfigError, ImpactLabError, MissingDependencyError
from .events import Direction, Trades
from .fileio import read_csv, write_json
from .impact import BinnedCurve, bin_curve, compute_impacts, log_bin_edges
from .ingest import (SessionFilter, TickFormat, aggregate_trades, dedupe_quotes, filter_events,
                     parse_quotes, parse_trades, write_quotes, write_trades)
from .pipeline import emit_plot_data, run_pipeline
from .powerlaw import fit_powerlaw, fit_tail_impacts
from .synth import MarketScenario, gen_collapse_family, gen_market, run_config_for, write_market


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _sections(path):
    d = read_mapping(path) if path else {}
    return SessionFilter.from_dict(d.get("session")), TickFormat.from_dict(d.get("format"))


def cmd_ingest(a):
    session, fmt = _sections(a.config)
    trades, rt = parse_trades(a.trades, fmt)
    quotes, rq = parse_quotes(a.quotes, fmt)
    trades, ft = filter_events(trades, session)
    quotes, fq = filter_events(quotes, session)
    agg = aggregate_trades(trades)
    dq = dedupe_quotes(quotes)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trades(out / f"{a.stock}_trades.csv", Trades(agg.timestamp, agg.vwap, agg.total_volume))
    write_quotes(out / f"{a.stock}_quotes.csv", dq)
    rep = {"parse_trades": rt.to_dict(), "parse_quotes": rq.to_dict(), "filter_trades": ft.to_dict(),
           "filter_quotes": fq.to_dict(), "aggregated_trades": len(agg), "deduped_quotes": len(dq)}
    write_json(out / f"{a.stock}_ingest.json", rep)
    _emit(rep)


def cmd_classify(a):
    trades, _ = parse_trades(a.trades)
    quotes, _ = parse_quotes(a.quotes)
    ct, rep = classify_stream(aggregate_trades(trades), dedupe_quotes(quotes), a.lag)
    write_classified(a.out, ct)
    _emit(rep.to_dict())


def cmd_impact(a):
    ct = read_classified(a.classified)
    quotes, _ = parse_quotes(a.quotes)
    obs, rep = compute_impacts(ct, dedupe_quotes(quotes), a.stock)
    if len(ct):
        obs.omega = obs.volume / ct.total_volume.mean()
    edges = log_bin_edges(a.lo_exp, a.hi_exp, a.n_bins)
    out = Path(a.out_dir)
    for d in (Direction.BUYER, Direction.SELLER):
        bin_curve(obs, edges, d, a.group).to_csv(out / f"curve_{d.label}.csv")
    _emit(rep.to_dict())


def _read_values(path):
    """First column of a CSV; a non-numeric first row is taken as a header."""
    header, rows = read_csv(path)
    rows = [header] + rows if header else rows
    vals = []
    for k, r in enumerate(rows):
        if not r or not r[0].strip():
            continue
        try:
            vals.append(float(r[0]))
        except ValueError:
            if k:
                raise
    return np.array(vals)


def cmd_fit_powerlaw(a):
    kw = dict(n_boot=a.n_boot, seed=a.seed, min_tail=a.min_tail, workers=a.workers)
    if a.curve:
        fit = fit_tail_impacts(BinnedCurve.from_csv(a.curve), a.threshold, **kw)
    else:
        fit = fit_powerlaw(_read_values(a.values), **kw)
    d = fit.to_dict()
    if a.out:
        write_json(a.out, d)
    _emit(d)


def _curve_spec(text):
    try:
        group, c, path = text.split(":", 2)
        return group, float(c), path
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected GROUP:C:PATH, got {text!r}") from None


def cmd_collapse(a):
    s = CollapseSettings(n_bins=a.n_bins, step=a.step, gamma_bounds=tuple(a.gamma_bounds),
                         delta_bounds=tuple(a.delta_bounds), volume_threshold=a.threshold)
    curves = [BinnedCurve.from_csv(p, group_id=g) for g, _, p in a.curve]
    proxies = [LiquidityProxy(g, c) for g, c, _ in a.curve]
    res = fit_collapse(curves, proxies, s)
    out = Path(a.out_dir)
    write_json(out / "collapse.json", res.to_dict())
    res.to_csv(out / "collapse.csv")
    _emit(res.to_dict())


def cmd_synth(a):
    d = read_mapping(a.scenario) if a.scenario else {}
    if a.seed is not None:
        d["seed"] = a.seed
    sc = MarketScenario.from_dict(d)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "scenario.json", sc.to_dict())
    summary = {"scenario": str(out / "scenario.json"), "seed": sc.seed}
    if a.collapse_family:
        fam = gen_collapse_family(sc)
        for curve, proxy in fam:
            curve.to_csv(out / f"family_{proxy.group_id}.csv")
        summary["family"] = {p.group_id: p.C for _, p in fam}
    else:
        paths = write_market(gen_market(sc), out)
        write_json(out / "run_config.json", run_config_for(sc, paths))
        summary.update(tapes=paths, run_config=str(out / "run_config.json"))
    _emit(summary)


def _override(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def cmd_run(a):
    overrides = dict(a.set or [])
    for key, val in (("workers", a.workers), ("powerlaw.seed", a.seed),
                     ("powerlaw.n_boot", a.n_boot)):
        if val is not None:
            overrides[key] = val
    cfg = load_config(a.config, overrides)
    rep = run_pipeline(cfg, a.output_dir)
    _emit({"output_dir": rep.output_dir, "failed_stocks": rep.failed_stocks,
           "periods": {p: {g: r["status"] for g, r in v["groups"].items()}
                       for p, v in rep.periods.items()},
           "n_files": len(rep.files)})


def cmd_emit_plots(a):
    _emit({"files": emit_plot_data(a.report, a.out)})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="impactlab", description=__doc__)
    p.add_argument("--version", action="version", version=f"impactlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse, filter and aggregate one stock's tick files")
    s.add_argument("--trades", required=True)
    s.add_argument("--quotes", required=True)
    s.add_argument("--config", help="TOML/JSON file with [session] and [format] sections")
    s.add_argument("--stock", default="stock")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("classify", help="Lee-Ready direction for cleaned trades")
    s.add_argument("--trades", required=True)
    s.add_argument("--quotes", required=True)
    s.add_argument("--lag", type=int, default=0, help="quote lag in microseconds")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_classify)

    s = sub.add_parser("impact", help="impacts and binned curves for one stock")
    s.add_argument("--classified", required=True)
    s.add_argument("--quotes", required=True)
    s.add_argument("--stock", default="stock")
    s.add_argument("--group", default="")
    s.add_argument("--lo-exp", type=float, default=-3.2)
    s.add_argument("--hi-exp", type=float, default=1.0)
    s.add_argument("--n-bins", type=int, default=20)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(fn=cmd_impact)

    s = sub.add_parser("fit-powerlaw", help="power-law fit with bootstrap p-value")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--values", help="one value per line (first CSV column)")
    src.add_argument("--curve", help="curve CSV; fits |delta_p*| above --threshold")
    s.add_argument("--threshold", type=float, default=10**-0.9)
    s.add_argument("--n-boot", type=int, default=2500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--min-tail", type=int, default=5)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_fit_powerlaw)

    s = sub.add_parser("collapse", help="fit (gamma, delta) across group curves")
    s.add_argument("--curve", type=_curve_spec, action="append", required=True,
                   metavar="GROUP:C:PATH")
    s.add_argument("--n-bins", type=int, default=10)
    s.add_argument("--step", type=float, default=0.01)
    s.add_argument("--gamma-bounds", type=float, nargs=2, default=(-1.0, 1.0))
    s.add_argument("--delta-bounds", type=float, nargs=2, default=(-1.0, 1.0))
    s.add_argument("--threshold", type=float, default=10**-0.9)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(fn=cmd_collapse)

    s = sub.add_parser("synth", help="write a synthetic market (or collapse family)")
    s.add_argument("--scenario", help="scenario TOML/JSON; defaults otherwise")
    s.add_argument("--seed", type=int)
    s.add_argument("--collapse-family", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("run", help="full pipeline from a run config")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir")
    s.add_argument("--workers", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--n-boot", type=int)
    s.add_argument("--set", type=_override, action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. collapse.n_bins=12")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("emit-plots", help="plot-ready CSVs from a finished run")
    s.add_argument("--report", required=True, help="report.json or its run directory")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_emit_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (ImpactLabError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["field"] = exc.field
        if isinstance(exc, MissingDependencyError):
            err["dependency"] = exc.dependency
        json.dump(err, sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
