import json
import math

import pytest

from impactlab.config import build_config, load_config
from impactlab.errors import ConfigError, MissingDependencyError
from impactlab.pipeline import RunReport, emit_plot_data, run_pipeline
from impactlab.synth import GroupSpec, MarketScenario, gen_market, run_config_for, write_market

SCENARIO = MarketScenario(
    groups=[GroupSpec("A", C_target=1e6, trade_rate=400.0),
            GroupSpec("B", C_target=1e7, trade_rate=400.0, n_stocks=2),
            GroupSpec("C", C_target=1e8, trade_rate=400.0)],
    n_days=4, seed=11, split_prob=0.2, dup_quote_prob=0.1, midquote_fraction=0.1,
    noise_sigma=0.3)


@pytest.fixture(scope="module")
def tapes(tmp_path_factory):
    d = tmp_path_factory.mktemp("tapes")
    paths = write_market(gen_market(SCENARIO), d)
    cfg = run_config_for(SCENARIO, paths)
    cfg["powerlaw"] = {"n_boot": 100}
    (d / "run.json").write_text(json.dumps(cfg))
    return d


@pytest.fixture(scope="module")
def run(tapes, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_pipeline(load_config(tapes / "run.json"), out), out


def test_report_contents(run):
    rep, out = run
    assert rep.failed_stocks == {}
    assert set(rep.periods) == {"before", "after"}
    for period, prec in rep.periods.items():
        assert set(prec["groups"]) == {"A", "B", "C"}
        for g, rec in prec["groups"].items():
            assert rec["status"] == "ok"
            for d in ("buyer", "seller"):
                assert (out / period / g / f"curve_{d}.csv").is_file()
        for d in ("buyer", "seller"):
            assert prec["collapse"][d]["status"] == "ok"
            res = json.loads((out / period / f"collapse_{d}.json").read_text())
            assert res["n_bins"] == 10 and res["epsilon"] >= 0
    for f in rep.files:
        assert (out / f).is_file()
    saved = json.loads((out / "report.json").read_text())
    assert saved["version"] and saved["seeds"] == {"powerlaw_bootstrap": 0}


def test_stage_completeness(run):
    rep, _ = run
    for stock, stages in rep.stages.items():
        for name, st in stages.items():
            assert st["in"] == st["out"] + sum(st["rejected"].values()), (stock, name)


def test_fit_json_shape(run):
    _, out = run
    fits = list(out.glob("*/*/powerlaw_*.json"))
    assert fits
    d = json.loads(fits[0].read_text())
    for key in ("group", "direction", "period", "alpha", "x_min", "p_value", "n_tail", "n_boot",
                "seed", "low_power", "n_candidates"):
        assert key in d


def numeric_outputs(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.suffix in (".csv", ".json")}


def test_rerun_from_echo_is_byte_identical(run, tmp_path):
    rep, out = run
    rerun = run_pipeline(load_config(out / "config.json"), tmp_path)
    assert numeric_outputs(tmp_path) == numeric_outputs(out)
    assert rerun.to_dict() == rep.to_dict()


def test_per_stock_pooling(tapes, tmp_path):
    cfg = load_config(tapes / "run.json", {"pooling": "stock", "powerlaw.n_boot": 0})
    rep = run_pipeline(cfg, tmp_path)
    assert set(rep.periods["before"]["groups"]) == {"A_0", "B_0", "B_1", "C_0"}


def test_empty_group_isolated(tapes, tmp_path):
    late = tmp_path / "late_trades.csv"
    late.write_text("timestamp,price,volume\n2013-01-02T08:00:00,10.0,100\n")
    quotes = tmp_path / "late_quotes.csv"
    quotes.write_text("timestamp,bid,ask\n2013-01-02T07:59:00,9.9,10.1\n")
    cfg = json.loads((tapes / "run.json").read_text())
    cfg["stocks"] = {s: {k: str(tapes / v) for k, v in f.items()} for s, f in cfg["stocks"].items()}
    cfg["stocks"]["Z_0"] = {"trades": str(late), "quotes": str(quotes)}
    cfg["groups"]["Z_0"] = "Z"
    cfg["powerlaw"] = {"n_boot": 0}
    rep = run_pipeline(build_config(cfg), tmp_path / "out")
    for prec in rep.periods.values():
        assert prec["groups"]["Z"]["status"] == "failed"
        assert all(prec["groups"][g]["status"] == "ok" for g in "ABC")
        assert prec["collapse"]["buyer"]["status"] == "ok"


def test_unreadable_stock_recorded(tapes, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,price,volume\n" + "junk,x,y\n" * 5)
    cfg = json.loads((tapes / "run.json").read_text())
    cfg["stocks"] = {s: {k: str(tapes / v) for k, v in f.items()} for s, f in cfg["stocks"].items()}
    cfg["stocks"]["A_0"]["trades"] = str(bad)
    cfg["powerlaw"] = {"n_boot": 0}
    rep = run_pipeline(build_config(cfg), tmp_path / "out")
    assert "ParseAbortError" in rep.failed_stocks["A_0"]
    assert rep.periods["before"]["groups"]["A"]["status"] == "failed"
    assert rep.periods["before"]["groups"]["B"]["status"] == "ok"


def test_emit_plot_data(run, tmp_path):
    rep, out = run
    files = emit_plot_data(out, tmp_path)
    names = {f.split("/")[-1] for f in files}
    assert "curves_before_buyer_A.csv" in names
    assert (tmp_path / "curves_before_buyer_A.csv").read_text().startswith("omega_star,delta_p_star")
    coll = (tmp_path / "collapse_before_buyer.csv").read_text().splitlines()
    series = {r.split(",")[1] for r in coll[1:]}
    assert series == {"unscaled", "rescaled"}
    for f in tmp_path.glob("hist_*.csv"):
        rows = f.read_text().splitlines()[1:]
        if rows:
            assert math.fsum(float(r.split(",")[2]) for r in rows) == pytest.approx(1.0, abs=1e-12)


def test_emit_missing_dependency(run, tmp_path):
    rep, out = run
    broken = RunReport(rep.version, rep.config, rep.seeds, rep.stages, rep.failed_stocks,
                       rep.periods, rep.files, str(tmp_path))
    with pytest.raises(MissingDependencyError) as e:
        emit_plot_data(broken, tmp_path / "plots")
    assert e.value.dependency.endswith(".csv")
    with pytest.raises(MissingDependencyError):
        emit_plot_data(tmp_path / "nothing.json")


# -- config validation -------------------------------------------------------------

def base_cfg(tapes):
    cfg = json.loads((tapes / "run.json").read_text())
    cfg["stocks"] = {s: {k: str(tapes / v) for k, v in f.items()} for s, f in cfg["stocks"].items()}
    return cfg


def test_overlapping_periods(tapes):
    cfg = base_cfg(tapes)
    cfg["periods"] = {"before": ["2013-01-01", "2013-09-30"], "after": ["2013-09-30", "2013-12-31"]}
    with pytest.raises(ConfigError) as e:
        build_config(cfg)
    assert e.value.field == "periods" and "overlap" in str(e.value)


@pytest.mark.parametrize("patch,field", [
    ({"stocks": {"X": {"trades": "/no/such.csv", "quotes": "/no/such.csv"}}}, "stocks.X.trades"),
    ({"groups": {"A_0": "A"}}, "groups.B_0"),
    ({"session": {"max_volume": -1}}, "session.max_volume"),
    ({"powerlaw": {"n_boot": 10}}, "powerlaw.n_boot"),
    ({"collapse": {"gamma_bounds": [1, -1]}}, "collapse.gamma_bounds"),
    ({"bins": {"nbins": 3}}, "bins.nbins"),
    ({"pooling": "sector"}, "pooling"),
    ({"periods": {"p": ["2013-02-01", "2013-01-01"]}}, "periods.p"),
    ({"colour": 1}, "colour"),
])
def test_config_errors_name_field(tapes, patch, field):
    cfg = base_cfg(tapes)
    cfg.update(patch)
    with pytest.raises(ConfigError) as e:
        build_config(cfg)
    assert e.value.field == field


def test_defaults(tapes):
    cfg = build_config(base_cfg(tapes))
    assert cfg.bins.n_bins == 20 and cfg.bins.lo_exp == -3.2 and cfg.bins.hi_exp == 1.0
    assert cfg.powerlaw.volume_threshold == 10**-0.9 and cfg.powerlaw.significance == 0.1
    assert cfg.session.max_volume == 10**6 and cfg.collapse.n_bins == 10
    d = base_cfg(tapes)
    del d["periods"]
    assert build_config(d).periods == {"before": ("2013-01-01", "2013-09-27"),
                                       "after": ("2013-09-30", "2013-12-31")}


def test_toml_config_and_overrides(tapes, tmp_path):
    cfg = base_cfg(tapes)
    lines = ["[stocks]"]
    for s, f in cfg["stocks"].items():
        lines.append(f'{s} = {{ trades = "{f["trades"]}", quotes = "{f["quotes"]}" }}')
    lines.append("[groups]")
    lines += [f'{s} = "{g}"' for s, g in cfg["groups"].items()]
    lines += ["[periods]", 'all = ["2013-01-01", "2013-12-31"]', "[collapse]", "n_bins = 12"]
    p = tmp_path / "run.toml"
    p.write_text("\n".join(lines) + "\n")
    c = load_config(p, {"collapse.step": 0.05, "workers": 2})
    assert c.collapse.n_bins == 12 and c.collapse.step == 0.05 and c.workers == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[stocks\n")
    with pytest.raises(ConfigError):
        load_config(bad)
