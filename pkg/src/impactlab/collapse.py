"""Master-curve collapse: choose (gamma, delta) so that the rescaled curves
x = omega*/C**delta, y = |delta_p*| * C**gamma pile onto one curve.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .errors import InsufficientDataError, UndefinedObjectiveError
from .fileio import fmt_float, write_csv
from .impact import TAIL_THRESHOLD


@dataclass(frozen=True)
class LiquidityProxy:
    group_id: str
    C: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"liquidity proxy for {self.group_id!r} must be positive")


def liquidity_proxy(trades, n_days: int, group_id: str = "") -> LiquidityProxy:
    """Average daily value traded: sum(vwap * volume) / n_days.

    ``trades`` is one trade container or an iterable of them (one per stock).
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    parts = [trades] if hasattr(trades, "vwap") else list(trades)
    n = sum(len(p) for p in parts)
    if n == 0:
        raise InsufficientDataError(f"no trades for group {group_id!r}")
    value = sum(float(np.dot(p.vwap, p.total_volume.astype(np.float64))) for p in parts)
    return LiquidityProxy(group_id, value / n_days)


def rescale(curve, C: float, gamma: float, delta: float) -> list[tuple[float, float, int]]:
    """(omega*/C**delta, delta_p* * C**gamma, count) for each nonempty bin."""
    o, d, c = curve.nonempty()
    return [(float(x), float(y), int(k)) for x, y, k in zip(o / C**delta, d * C**gamma, c)]


def _pool(curves, proxies):
    if len(curves) < 2:
        raise ValueError("collapse needs at least two curves")
    if len(curves) != len(proxies):
        raise ValueError("every curve needs exactly one liquidity proxy")
    om, dp, lc = [], [], []
    for curve, proxy in zip(curves, proxies):
        o, d, _ = curve.nonempty()
        om.append(o)
        dp.append(np.abs(d))
        lc.append(np.full(o.shape[0], np.log(proxy.C)))
    return np.concatenate(om), np.concatenate(dp), np.concatenate(lc)


def collapse_error(curves, proxies, gamma: float, delta: float, n_bins: int = 10) -> tuple[float, int]:
    """Average over contributing x-bins of (sigma_x/mu_x)**2 + (sigma_y/mu_y)**2.

    Bins are log-spaced across the pooled rescaled-x range; bins with fewer
    than two points or a zero mean are skipped.  Returns (epsilon, skipped).
    """
    om, dp, lc = _pool(curves, proxies)
    if om.size == 0:
        raise UndefinedObjectiveError("no points to collapse")
    C = np.exp(lc)
    x = om / C**delta
    y = dp * C**gamma
    eps, used = kernels.collapse_eps(x, y, int(n_bins))
    if used == 0:
        raise UndefinedObjectiveError("no collapse bin holds two or more points")
    return float(eps), int(n_bins) - int(used)


@dataclass
class CollapseSettings:
    n_bins: int = 10
    gamma_bounds: tuple = (-1.0, 1.0)
    delta_bounds: tuple = (-1.0, 1.0)
    step: float = 0.01
    tol: float = 1e-6
    volume_threshold: float = TAIL_THRESHOLD
    refine: bool = True
    flat_rtol: float = 1e-9

    @classmethod
    def from_dict(cls, d: dict | None) -> "CollapseSettings":
        d = dict(d or {})
        for k in ("gamma_bounds", "delta_bounds"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        return cls(**d)

    def axis(self, bounds) -> np.ndarray:
        lo, hi = bounds
        n = int(round((hi - lo) / self.step)) + 1
        return np.round(np.linspace(lo, hi, n), 12)


@dataclass
class CollapseResult:
    gamma: float
    delta: float
    epsilon: float
    n_bins: int
    skipped_bins: int
    rescaled_curves: dict
    flags: list = field(default_factory=list)
    grid_optimum: tuple = ()
    settings: CollapseSettings = field(default_factory=CollapseSettings)
    proxies: dict = field(default_factory=dict)

    @property
    def identifiable(self) -> bool:
        return not self.flags

    def to_dict(self, **labels) -> dict:
        out = dict(labels)
        out.update(gamma=self.gamma, delta=self.delta, epsilon=self.epsilon, n_bins=self.n_bins,
                   skipped_bins=self.skipped_bins, flags=list(self.flags),
                   grid_optimum=list(self.grid_optimum), proxies=dict(self.proxies),
                   search=asdict(self.settings))
        return out

    def rows(self):
        """(group, scaled, x, y) rows: scaled=0 for raw (omega*, delta_p*), 1 after rescaling."""
        for g, pts in self.rescaled_curves.items():
            C = self.proxies[g]
            for x, y in pts:
                yield g, 0, x * C**self.delta, y / C**self.gamma
            for x, y in pts:
                yield g, 1, x, y

    def to_csv(self, path):
        return write_csv(path, ("group", "scaled", "x", "y"),
                         ((g, s, fmt_float(x), fmt_float(y)) for g, s, x, y in self.rows()))


def _pick_grid(E, gammas, deltas):
    finite = np.isfinite(E)
    if not finite.any():
        raise UndefinedObjectiveError("collapse objective undefined over the whole grid")
    emin = E[finite].min()
    tie = np.argwhere(finite & (E <= emin + 1e-12 * max(1.0, abs(emin))))
    ig, jd = min(map(tuple, tie), key=lambda t: (abs(gammas[t[0]]), abs(deltas[t[1]]),
                                                gammas[t[0]], deltas[t[1]]))
    return int(ig), int(jd)


def _flat(profile, rtol):
    p = profile[np.isfinite(profile)]
    return p.size > 1 and (p.max() - p.min()) <= rtol * max(1.0, abs(p.min()))


def fit_collapse(curves, proxies, settings: CollapseSettings | None = None) -> CollapseResult:
    """Grid search over (gamma, delta), then Nelder-Mead refinement from the
    grid optimum.  Grid ties go to the smallest (|gamma|, |delta|)."""
    s = settings or CollapseSettings()
    curves = [c.above(s.volume_threshold) for c in curves]
    om, dp, lc = _pool(curves, proxies)
    gammas, deltas = s.axis(s.gamma_bounds), s.axis(s.delta_bounds)
    E = kernels.collapse_grid(om, dp, lc, gammas, deltas, int(s.n_bins))
    ig, jd = _pick_grid(E, gammas, deltas)
    g0, d0 = float(gammas[ig]), float(deltas[jd])

    flags = []
    same_c = np.ptp(lc) == 0.0
    if same_c or _flat(E[:, jd], s.flat_rtol):
        flags.append("gamma_unidentifiable")
    if same_c or _flat(E[ig, :], s.flat_rtol):
        flags.append("delta_unidentifiable")

    def objective(p):
        g, d = p
        if not (s.gamma_bounds[0] <= g <= s.gamma_bounds[1] and s.delta_bounds[0] <= d <= s.delta_bounds[1]):
            return np.inf
        try:
            return collapse_error(curves, proxies, g, d, s.n_bins)[0]
        except UndefinedObjectiveError:
            return np.inf

    gamma, delta = g0, d0
    best = objective((g0, d0))
    if s.refine and not flags:
        simplex = np.array([[g0, d0], [g0 + s.step, d0], [g0, d0 + s.step]])
        res = minimize(objective, np.array([g0, d0]), method="Nelder-Mead",
                       options=dict(initial_simplex=simplex, fatol=s.tol, xatol=1e-9, maxiter=4000))
        cand = objective(res.x)
        if cand < best:
            gamma, delta, best = float(res.x[0]), float(res.x[1]), cand

    eps, skipped = collapse_error(curves, proxies, gamma, delta, s.n_bins)
    C = {p.group_id: float(p.C) for p in proxies}
    rescaled = {}
    for curve, proxy in zip(curves, proxies):
        rescaled[proxy.group_id] = [(x, y) for x, y, _ in rescale(curve, proxy.C, gamma, delta)]
    return CollapseResult(gamma, delta, eps, int(s.n_bins), skipped, rescaled, flags,
                          (g0, d0, float(E[ig, jd])), s, C)
