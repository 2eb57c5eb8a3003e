"""Continuous power-law fitting: MLE exponent, KS-selected lower bound and a
semiparametric bootstrap goodness-of-fit p-value (Clauset-Shalizi-Newman).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import kernels
from .errors import DegenerateSampleError, InsufficientDataError

DEFAULT_MIN_TAIL = 5
DEFAULT_MAX_CANDIDATES = 1000
DEFAULT_N_BOOT = 2500
LOW_POWER_TAIL = 50


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    x_min: float
    ks_distance: float
    n_tail: int
    n: int
    n_candidates: int
    p_value: float | None = None
    n_boot: int = 0
    seed: int | None = None
    degenerate: bool = False

    @property
    def low_power(self) -> bool:
        return self.n_tail < LOW_POWER_TAIL

    def to_dict(self, **labels) -> dict:
        out = dict(labels)
        out.update(asdict(self))
        out["low_power"] = self.low_power
        return out


def _as_sample(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size and not np.all(x > 0.0):
        raise ValueError("power-law samples must be strictly positive")
    return x


def mle_alpha(sample, x_min: float) -> float:
    """Closed-form continuous MLE ``1 + n / sum(ln(x / x_min))`` over x >= x_min."""
    x = _as_sample(sample)
    tail = x[x >= x_min]
    if tail.size < 2:
        raise InsufficientDataError(f"need >= 2 points >= x_min, got {tail.size}")
    s = math.fsum(np.log(tail / x_min))
    if s <= 0.0:
        raise DegenerateSampleError("all tail points equal x_min")
    return 1.0 + tail.size / s


def ks_distance(sample, alpha: float, x_min: float) -> float:
    """Max gap between the tail's step ECDF (both sides of each step) and the model CDF."""
    if not alpha > 1.0:
        raise ValueError("alpha must exceed 1")
    x = _as_sample(sample)
    tail = np.sort(x[x >= x_min])
    if tail.size == 0:
        raise InsufficientDataError("no sample points >= x_min")
    return float(kernels.ks_sorted(tail, float(alpha), float(x_min)))


def candidate_indices(x_sorted: np.ndarray, min_tail: int = DEFAULT_MIN_TAIL,
                      max_candidates: int = DEFAULT_MAX_CANDIDATES) -> np.ndarray:
    """First indices of the x_min candidates in an ascending sample.

    Every distinct value leaving ``min_tail`` points is a candidate when
    n <= max_candidates; otherwise the candidates are the distinct values
    reached by ``max_candidates`` log-spaced targets between the smallest and
    largest viable value.
    """
    n = x_sorted.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    first = np.flatnonzero(np.r_[True, x_sorted[1:] != x_sorted[:-1]])
    first = first[n - first >= min_tail]
    if n <= max_candidates or first.size <= max_candidates:
        return first.astype(np.int64)
    vals = x_sorted[first]
    targets = np.geomspace(vals[0], vals[-1], max_candidates)
    pos = np.searchsorted(vals, targets, side="left")
    pos = np.unique(np.clip(pos, 0, vals.size - 1))
    return first[pos].astype(np.int64)


def fit_xmin(sample, min_tail: int = DEFAULT_MIN_TAIL,
             max_candidates: int = DEFAULT_MAX_CANDIDATES) -> PowerLawFit:
    """Pick x_min minimising the KS distance; ties go to the smaller x_min."""
    x = np.sort(_as_sample(sample))
    if x.size < min_tail:
        raise InsufficientDataError(f"sample of {x.size} is below min_tail={min_tail}")
    cand = candidate_indices(x, min_tail, max_candidates)
    alphas, ds = kernels.xmin_scan(x, cand, min_tail)
    if cand.size == 0 or not np.isfinite(ds).any():
        raise InsufficientDataError(f"no x_min candidate leaves >= {min_tail} non-degenerate tail points")
    best = int(np.argmin(ds))  # argmin returns the first, i.e. smallest x_min
    i = int(cand[best])
    x_min = float(x[i])
    tail = x[i:]
    alpha = mle_alpha(tail, x_min)
    return PowerLawFit(
        alpha=alpha,
        x_min=x_min,
        ks_distance=float(kernels.ks_sorted(tail, alpha, x_min)),
        n_tail=int(tail.size),
        n=int(x.size),
        n_candidates=int(cand.size),
        degenerate=bool(np.unique(tail).size < 3),
    )


def bootstrap_sample(sample, fit: PowerLawFit, rng: np.random.Generator) -> np.ndarray:
    """One semiparametric replicate: power-law tail above x_min, resampled body below."""
    x = _as_sample(sample)
    n = x.size
    body = x[x < fit.x_min]
    k = int(rng.binomial(n, fit.n_tail / n)) if body.size else n
    u = rng.random(k)
    tail = fit.x_min * (1.0 - u) ** (-1.0 / (fit.alpha - 1.0))
    if k == n:
        return tail
    return np.concatenate([body[rng.integers(0, body.size, n - k)], tail])


def _replicate_distance(sample, fit, seed, b, min_tail, max_candidates):
    rng = np.random.default_rng([seed, b])
    rep = bootstrap_sample(sample, fit, rng)
    return fit_xmin(rep, min_tail, max_candidates).ks_distance


def bootstrap_distances(sample, fit: PowerLawFit, n_boot: int, seed: int,
                        min_tail: int = DEFAULT_MIN_TAIL,
                        max_candidates: int = DEFAULT_MAX_CANDIDATES,
                        workers: int = 1) -> np.ndarray:
    """KS distances of ``n_boot`` refitted replicates.

    Replicate ``b`` draws from ``default_rng([seed, b])`` so the result does
    not depend on ``workers`` or scheduling.
    """
    x = _as_sample(sample)
    args = (x, fit, seed)

    def one(b):
        return _replicate_distance(*args, b, min_tail, max_candidates)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.fromiter(pool.map(one, range(n_boot)), float, n_boot)
    return np.fromiter(map(one, range(n_boot)), float, n_boot)


def gof_pvalue(sample, fit: PowerLawFit, n_boot: int = DEFAULT_N_BOOT, seed: int = 0,
               min_tail: int = DEFAULT_MIN_TAIL,
               max_candidates: int = DEFAULT_MAX_CANDIDATES,
               workers: int = 1) -> float | None:
    """Fraction of bootstrap replicates whose refitted D exceeds the observed D.

    ``n_boot=0`` skips the test and returns None.
    """
    if n_boot == 0:
        return None
    if n_boot < 100:
        raise ValueError("n_boot must be 0 (skip) or >= 100")
    d = bootstrap_distances(sample, fit, n_boot, seed, min_tail, max_candidates, workers)
    return float(np.count_nonzero(d > fit.ks_distance) / n_boot)


def fit_powerlaw(sample, n_boot: int = DEFAULT_N_BOOT, seed: int = 0,
                 min_tail: int = DEFAULT_MIN_TAIL,
                 max_candidates: int = DEFAULT_MAX_CANDIDATES,
                 workers: int = 1) -> PowerLawFit:
    """fit_xmin followed by gof_pvalue; the returned fit carries p, n_boot and seed."""
    fit = fit_xmin(sample, min_tail, max_candidates)
    p = gof_pvalue(sample, fit, n_boot, seed, min_tail, max_candidates, workers)
    return replace(fit, p_value=p, n_boot=n_boot, seed=seed)


def fit_tail_impacts(curve, volume_threshold: float = 10**-0.9, n_boot: int = DEFAULT_N_BOOT,
                     seed: int = 0, min_tail: int = DEFAULT_MIN_TAIL,
                     max_candidates: int = DEFAULT_MAX_CANDIDATES,
                     workers: int = 1) -> PowerLawFit:
    """Fit the |delta_p_star| of bins whose omega_star exceeds ``volume_threshold``."""
    values = tail_impact_values(curve, volume_threshold)
    if values.size < min_tail:
        raise InsufficientDataError(
            f"{values.size} bins above omega*={volume_threshold:g}; need {min_tail}")
    return fit_powerlaw(values, n_boot, seed, min_tail, max_candidates, workers)


def tail_impact_values(curve, volume_threshold: float = 10**-0.9) -> np.ndarray:
    omega, dp, _ = curve.nonempty()
    v = np.abs(dp[omega > volume_threshold])
    return v[v > 0.0]

