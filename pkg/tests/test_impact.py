import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from impactlab.events import ClassifiedTrades, Direction, Quotes
from impactlab.impact import (BinnedCurve, ImpactObservations, bin_curve, bin_index,
                              compute_impacts, daily_distributions, log_bin_edges, log_histogram,
                              loglog_slope, normalize_volumes)
from impactlab.ingest import US_PER_DAY

EDGES = log_bin_edges()


def make_obs(omega, dp, direction=1, stock="S", day=0, volume=None, price=None):
    n = len(omega)
    as_arr = lambda v, dt: np.broadcast_to(np.asarray(v, dtype=dt), (n,)).copy()  # noqa: E731
    return ImpactObservations(np.array([stock] * n, dtype=object), as_arr(day, np.int64),
                              np.arange(n, dtype=np.int64),
                              as_arr(volume if volume is not None else 1, np.int64),
                              as_arr(price if price is not None else 1.0, float),
                              np.asarray(omega, dtype=float), np.asarray(dp, dtype=float),
                              as_arr(direction, np.int8))


def test_bin_edges_shape():
    assert EDGES.size == 21
    assert EDGES[0] == pytest.approx(10**-3.2, rel=1e-15) and EDGES[-1] == pytest.approx(10.0, rel=1e-15)
    np.testing.assert_allclose(np.diff(np.log10(EDGES)), 0.21, rtol=1e-12)


def test_impact_formula():
    ct = ClassifiedTrades([10], [100.05], [5], [1], [100.0])
    q = Quotes([9, 11], [99.95, 100.05], [100.05, 100.15])
    obs, rep = compute_impacts(ct, q, "X")
    assert obs.delta_p[0] == pytest.approx(math.log(1.001), rel=1e-12)
    assert obs.delta_p[0] == pytest.approx(9.995e-4, rel=1e-4)


def test_zero_impact_retained():
    ct = ClassifiedTrades([10], [100.05], [5], [1], [100.0])
    q = Quotes([9, 11], [99.95, 99.95], [100.05, 100.05])
    obs, _ = compute_impacts(ct, q)
    assert len(obs) == 1 and obs.delta_p[0] == 0.0


def test_missing_quotes_dropped_and_counted():
    ct = ClassifiedTrades([5, 10, 20], [1.0, 1.0, 1.0], [1, 1, 1], [1, 1, 1], [1.0] * 3)
    q = Quotes([9, 11], [0.9, 0.9], [1.1, 1.1])
    obs, rep = compute_impacts(ct, q)
    assert list(obs.timestamp) == [10]
    assert rep.dropped_no_quote_before == 1 and rep.dropped_no_quote_after == 1


def test_impacts_match_linear_scan():
    rng = np.random.default_rng(21)
    qts = np.unique(rng.integers(0, 5000, 400))
    mid = np.exp(np.cumsum(rng.normal(0, 1e-3, qts.size))) * 50
    q = Quotes(qts, mid * 0.999, mid * 1.001)
    tts = np.unique(rng.integers(0, 5200, 300))
    ct = ClassifiedTrades(tts, np.ones(tts.size), np.ones(tts.size), np.ones(tts.size), np.ones(tts.size))
    obs, _ = compute_impacts(ct, q)
    rows = list(q)
    want = {}
    for t in tts:
        b, a = oracles.prevailing(rows, int(t)), oracles.following(rows, int(t))
        if b is not None and a is not None:
            mb = (rows[b][1] + rows[b][2]) / 2
            ma = (rows[a][1] + rows[a][2]) / 2
            want[int(t)] = math.log(ma) - math.log(mb)
    assert list(obs.timestamp) == list(want)
    assert list(obs.delta_p) == list(want.values())


def test_day_index_uses_offset():
    t = 3 * US_PER_DAY + 23 * 3_600_000_000  # 23:00 UTC on day 3
    ct = ClassifiedTrades([t], [1.0], [1], [1], [1.0])
    q = Quotes([t - 1, t + 1], [0.9, 0.9], [1.1, 1.1])
    assert compute_impacts(ct, q)[0].day[0] == 3
    assert compute_impacts(ct, q, utc_offset_minutes=120)[0].day[0] == 4


def test_normalize_constant_and_arithmetic():
    obs = make_obs([0, 0, 0], [0, 0, 0], volume=[7, 7, 7])
    assert list(normalize_volumes(obs, {"S": [7, 7]}).omega) == [1.0, 1.0, 1.0]
    obs = make_obs([0], [0], volume=[100])
    assert normalize_volumes(obs, {"S": [100, 300]}).omega[0] == 0.5


def test_normalize_brute_force():
    rng = np.random.default_rng(4)
    parts = []
    raw = {}
    for s in ("A", "B", "C"):
        v = rng.integers(1, 10_000, 50)
        raw[s] = v
        parts.append(make_obs(np.zeros(50), np.zeros(50), stock=s, volume=v))
    out = normalize_volumes(ImpactObservations.concat(parts), raw)
    for s in raw:
        m = sum(int(x) for x in raw[s]) / len(raw[s])
        got = out.omega[out.stock == s]
        np.testing.assert_allclose(got, [int(x) / m for x in raw[s]], rtol=1e-12)


@given(st.integers(1, 1000), st.integers(0, 2**32 - 1))
def test_normalize_scale_invariant(k, seed):
    v = np.random.default_rng(seed).integers(1, 1000, 20)
    a = normalize_volumes(make_obs(np.zeros(20), np.zeros(20), volume=v), {"S": v})
    b = normalize_volumes(make_obs(np.zeros(20), np.zeros(20), volume=v * k), {"S": v * k})
    np.testing.assert_allclose(a.omega, b.omega, rtol=1e-14)


def test_bin_singleton():
    c = bin_curve(make_obs([1.0], [1e-4]))
    o, d, n = c.nonempty()
    assert list(o) == [1.0] and list(d) == [1e-4] and list(n) == [1]


def test_bin_boundaries():
    idx = bin_index(np.array([EDGES[0], EDGES[-1], EDGES[0] * 0.999, 10.001, EDGES[5]]), EDGES)
    assert list(idx) == [0, 19, -1, -1, 5]


@pytest.mark.parametrize("seed", range(100))
def test_bin_curve_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 300)) if seed else 10_000
    om = 10 ** rng.uniform(-3.5, 1.3, n)
    dp = rng.normal(0, 1e-3, n)
    c = bin_curve(make_obs(om, dp), EDGES)
    want, oor = oracles.binned_means(om, dp, list(EDGES))
    assert c.n_out_of_range == oor
    for k, w in enumerate(want):
        if w is None:
            assert c.count[k] == 0
        else:
            assert c.count[k] == w[2]
            assert c.omega_star[k] == pytest.approx(w[0], rel=1e-12)
            assert c.delta_p_star[k] == pytest.approx(w[1], rel=1e-12, abs=1e-18)


@given(st.integers(0, 2**32 - 1))
def test_bin_partition_and_sign_symmetry(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 200))
    om = 10 ** rng.uniform(-4, 2, n)
    dp = rng.normal(0, 1, n)
    c = bin_curve(make_obs(om, dp))
    assert c.count.sum() + c.n_out_of_range == n
    m = c.count > 0
    assert np.all((c.omega_star[m] >= EDGES[:-1][m]) & (c.omega_star[m] <= EDGES[1:][m]))
    c2 = bin_curve(make_obs(om, -dp))
    np.testing.assert_array_equal(c2.count, c.count)
    np.testing.assert_array_equal(c2.omega_star[m], c.omega_star[m])
    np.testing.assert_array_equal(c2.delta_p_star[m], -c.delta_p_star[m])


def test_bin_curve_filters_direction():
    obs = ImpactObservations.concat([make_obs([1.0], [1e-3], direction=1),
                                     make_obs([1.0], [-2e-3], direction=-1),
                                     make_obs([1.0], [5.0], direction=0)])
    assert bin_curve(obs, direction=Direction.SELLER).nonempty()[1][0] == -2e-3
    assert bin_curve(obs, direction=Direction.BUYER).nonempty()[1][0] == 1e-3


def test_seller_plot_values_positive():
    c = bin_curve(make_obs([1.0], [-1e-3], direction=-1), direction=Direction.SELLER)
    assert c.plot_values()[1][0] == 1e-3


def test_curve_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    c = bin_curve(make_obs(10 ** rng.uniform(-3, 1, 500), rng.normal(0, 1e-3, 500)), group_id="G")
    c.to_csv(tmp_path / "c.csv")
    back = BinnedCurve.from_csv(tmp_path / "c.csv", group_id="G")
    np.testing.assert_array_equal(back.count, c.count)
    m = c.count > 0
    np.testing.assert_array_equal(back.omega_star[m], c.omega_star[m])
    np.testing.assert_array_equal(back.delta_p_star[m], c.delta_p_star[m])


def test_above_threshold():
    c = bin_curve(make_obs([0.01, 1.0, 5.0], [1.0, 2.0, 3.0]))
    o, d, _ = c.above(10**-0.9).nonempty()
    assert list(o) == [1.0, 5.0]


def test_loglog_slope_exact_power():
    om = 10 ** np.linspace(-3, 1, 2000)
    c = bin_curve(make_obs(om, om**0.4 / 100))
    # bin means of a power are not exactly a power, but close
    assert loglog_slope(c) == pytest.approx(0.4, abs=0.01)


# -- daily distributions --------------------------------------------------------

def test_daily_mean_volume():
    obs = make_obs([1, 1], [0, 0], volume=[100, 300])
    d = daily_distributions(obs, 1)
    assert len(d) == 1 and d.mean_volume[0] == 200


def test_daily_skips_indeterminate_and_empty_days():
    obs = ImpactObservations.concat([make_obs([1], [1e-3], day=3, volume=[5]),
                                     make_obs([1], [1e-3], day=4, direction=0)])
    d = daily_distributions(obs, 2)
    assert list(d.day) == [3]


def test_histogram_masses_sum_to_one():
    rng = np.random.default_rng(0)
    for n_bins in (1, 7, 64):
        h = log_histogram(rng.lognormal(size=100), n_bins)
        assert h.masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert log_histogram([], 5).masses.size == 0


def test_daily_64_day_histogram_brute_force():
    rng = np.random.default_rng(64)
    parts = []
    for day in range(64):
        for s in ("A", "B"):
            n = int(rng.integers(1, 30))
            parts.append(make_obs(rng.random(n), rng.normal(0, 1e-3, n), stock=s, day=day,
                                  volume=rng.integers(1, 5000, n), price=rng.uniform(10, 20, n),
                                  direction=rng.choice([-1, 0, 1], n)))
    obs = ImpactObservations.concat(parts)
    d = daily_distributions(obs, 64)
    rows = zip(obs.stock, obs.day, obs.direction, obs.volume, obs.delta_p, obs.price)
    means = oracles.daily_means(rows)
    assert len(d) == len(means)
    for s, day, r, n, v, i, p in zip(d.stock, d.day, d.direction, d.n_trades, d.mean_volume,
                                     d.mean_delta_p, d.mean_price):
        w = means[(s, day, r)]
        assert n == w[0]
        assert (v, i, p) == pytest.approx(w[1:], rel=1e-12, abs=1e-18)
    for r, lab in ((1, "buyer"), (-1, "seller")):
        sel = [k for k in means if k[2] == r]
        vols = [means[k][1] for k in sel]
        assert list(d.histograms[("volume", lab)].counts) == oracles.histogram(vols, 64)
        imp = [r * means[k][2] for k in sel]
        h = d.histograms[("impact", lab)]
        assert list(h.counts) == oracles.histogram(imp, 64)
        assert h.n_dropped == sum(1 for x in imp if x <= 0)
