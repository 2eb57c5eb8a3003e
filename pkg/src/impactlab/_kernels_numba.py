"""numba implementations of the hot loops.

Every function here has a twin with the same signature in
``_kernels_numpy``; the test-suite checks them against each other.
"""
import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def ks_sorted(tail, alpha, xmin):
    """Two-sided KS distance of an ascending tail against the power-law CDF."""
    m = tail.shape[0]
    d = 0.0
    for j in range(m):
        p = -math.expm1((1.0 - alpha) * math.log(tail[j] / xmin))
        hi = abs((j + 1) / m - p)
        lo = abs(j / m - p)
        if hi > d:
            d = hi
        if lo > d:
            d = lo
    return d


@njit(**_JIT)
def xmin_scan(x, cand, min_tail):
    """MLE exponent and KS distance for each candidate start index.

    ``x`` is sorted ascending; ``cand[c]`` is the first index of a candidate
    x_min.  Candidates with a short or degenerate tail get alpha=nan, D=inf.
    """
    n = x.shape[0]
    nc = cand.shape[0]
    alphas = np.full(nc, np.nan)
    ds = np.full(nc, np.inf)
    lx = np.log(x)
    for c in range(nc):
        i = cand[c]
        m = n - i
        if m < min_tail:
            continue
        s = 0.0
        for j in range(i, n):
            s += lx[j] - lx[i]
        if not s > 0.0:
            continue
        a = 1.0 + m / s
        alphas[c] = a
        d = 0.0
        for j in range(m):
            p = -math.expm1((1.0 - a) * (lx[i + j] - lx[i]))
            hi = abs((j + 1) / m - p)
            lo = abs(j / m - p)
            if hi > d:
                d = hi
            if lo > d:
                d = lo
        ds[c] = d
    return alphas, ds


@njit(**_JIT)
def collapse_eps(x, y, n_bins):
    """Average squared-CV collapse error of rescaled points.

    Bins are log-spaced over [min(x), max(x)]; the last bin is closed.
    Returns (eps, contributing_bins); eps is nan when nothing contributes.
    """
    n = x.shape[0]
    lo = math.log(x.min())
    hi = math.log(x.max())
    width = (hi - lo) / n_bins
    idx = np.zeros(n, dtype=np.int64)
    cnt = np.zeros(n_bins, dtype=np.int64)
    sx = np.zeros(n_bins)
    sy = np.zeros(n_bins)
    for k in range(n):
        b = 0
        if width > 0.0:
            b = int((math.log(x[k]) - lo) / width)
            if b >= n_bins:
                b = n_bins - 1
            elif b < 0:
                b = 0
        idx[k] = b
        cnt[b] += 1
        sx[b] += x[k]
        sy[b] += y[k]
    mx = np.zeros(n_bins)
    my = np.zeros(n_bins)
    for b in range(n_bins):
        if cnt[b] > 0:
            mx[b] = sx[b] / cnt[b]
            my[b] = sy[b] / cnt[b]
    vx = np.zeros(n_bins)
    vy = np.zeros(n_bins)
    for k in range(n):
        b = idx[k]
        vx[b] += (x[k] - mx[b]) ** 2
        vy[b] += (y[k] - my[b]) ** 2
    total = 0.0
    used = 0
    for b in range(n_bins):
        if cnt[b] < 2 or mx[b] == 0.0 or my[b] == 0.0:
            continue
        total += (vx[b] / cnt[b]) / mx[b] ** 2 + (vy[b] / cnt[b]) / my[b] ** 2
        used += 1
    if used == 0:
        return np.nan, 0
    return total / used, used


@njit(**_JIT)
def collapse_grid(omega, absdp, logc, gammas, deltas, n_bins):
    """collapse_eps over a (gamma, delta) grid; result indexed [gamma, delta]."""
    n = omega.shape[0]
    out = np.empty((gammas.shape[0], deltas.shape[0]))
    x = np.empty(n)
    y = np.empty(n)
    for jd in range(deltas.shape[0]):
        for k in range(n):
            x[k] = omega[k] * math.exp(-deltas[jd] * logc[k])
        for ig in range(gammas.shape[0]):
            for k in range(n):
                y[k] = absdp[k] * math.exp(gammas[ig] * logc[k])
            out[ig, jd] = collapse_eps(x, y, n_bins)[0]
    return out


@njit(**_JIT)
def prevailing_index(trade_ts, quote_ts, lag):
    """Index of the last quote strictly before ``t - lag`` (-1 if none).

    Single forward two-pointer pass; both inputs ascending.
    """
    nt = trade_ts.shape[0]
    nq = quote_ts.shape[0]
    out = np.empty(nt, dtype=np.int64)
    q = 0
    for k in range(nt):
        cutoff = trade_ts[k] - lag
        while q < nq and quote_ts[q] < cutoff:
            q += 1
        out[k] = q - 1
    return out


@njit(**_JIT)
def following_index(trade_ts, quote_ts):
    """Index of the first quote strictly after each trade (len(quotes) if none)."""
    nt = trade_ts.shape[0]
    nq = quote_ts.shape[0]
    out = np.empty(nt, dtype=np.int64)
    q = 0
    for k in range(nt):
        while q < nq and quote_ts[q] <= trade_ts[k]:
            q += 1
        out[k] = q
    return out


@njit(**_JIT)
def prev_distinct_price(prices, rtol):
    """Most recent earlier price that differs from the current one (nan if none)."""
    n = prices.shape[0]
    out = np.full(n, np.nan)
    last = np.nan
    for k in range(1, n):
        p0 = prices[k - 1]
        if abs(prices[k] - p0) > rtol * abs(p0):
            last = p0
        out[k] = last
    return out
