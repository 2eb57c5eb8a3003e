"""Pure-numpy twins of ``_kernels_numba`` (same signatures, same results
up to summation order)."""
import numpy as np


def ks_sorted(tail, alpha, xmin):
    m = tail.shape[0]
    p = -np.expm1((1.0 - alpha) * np.log(tail / xmin))
    j = np.arange(m)
    return float(max(np.abs((j + 1) / m - p).max(), np.abs(j / m - p).max()))


def xmin_scan(x, cand, min_tail):
    n = x.shape[0]
    alphas = np.full(cand.shape[0], np.nan)
    ds = np.full(cand.shape[0], np.inf)
    lx = np.log(x)
    for c, i in enumerate(cand):
        m = n - i
        if m < min_tail:
            continue
        lr = lx[i:] - lx[i]
        s = lr.sum()
        if not s > 0.0:
            continue
        a = 1.0 + m / s
        alphas[c] = a
        p = -np.expm1((1.0 - a) * lr)
        j = np.arange(m)
        ds[c] = max(np.abs((j + 1) / m - p).max(), np.abs(j / m - p).max())
    return alphas, ds


def _bin_index(x, n_bins):
    lx = np.log(x)
    lo, hi = lx.min(), lx.max()
    width = (hi - lo) / n_bins
    if not width > 0.0:
        return np.zeros(x.shape[0], dtype=np.int64)
    return np.clip(((lx - lo) / width).astype(np.int64), 0, n_bins - 1)


def _eps_from_index(idx, x, y, n_bins):
    # y may be 2-D (rows = parameter values); x is shared across rows
    cnt = np.bincount(idx, minlength=n_bins)
    safe = np.maximum(cnt, 1)
    mx = np.bincount(idx, weights=x, minlength=n_bins) / safe
    vx = np.bincount(idx, weights=(x - mx[idx]) ** 2, minlength=n_bins) / safe
    y2 = np.atleast_2d(y)
    my = np.stack([np.bincount(idx, weights=r, minlength=n_bins) for r in y2]) / safe
    dev = (y2 - my[:, idx]) ** 2
    vy = np.stack([np.bincount(idx, weights=r, minlength=n_bins) for r in dev]) / safe
    ok = (cnt >= 2) & (mx != 0.0)
    ok2 = ok[None, :] & (my != 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(ok2, vx / mx**2 + vy / my**2, 0.0)
    used = ok2.sum(axis=1)
    eps = np.where(used > 0, terms.sum(axis=1) / np.maximum(used, 1), np.nan)
    return eps, used


def collapse_eps(x, y, n_bins):
    idx = _bin_index(x, n_bins)
    eps, used = _eps_from_index(idx, x, y, n_bins)
    return float(eps[0]), int(used[0])


def collapse_grid(omega, absdp, logc, gammas, deltas, n_bins):
    out = np.empty((gammas.shape[0], deltas.shape[0]))
    ys = absdp[None, :] * np.exp(gammas[:, None] * logc[None, :])
    for jd, d in enumerate(deltas):
        x = omega * np.exp(-d * logc)
        out[:, jd] = _eps_from_index(_bin_index(x, n_bins), x, ys, n_bins)[0]
    return out


def prevailing_index(trade_ts, quote_ts, lag):
    return np.searchsorted(quote_ts, trade_ts - lag, side="left").astype(np.int64) - 1


def following_index(trade_ts, quote_ts):
    return np.searchsorted(quote_ts, trade_ts, side="right").astype(np.int64)


def prev_distinct_price(prices, rtol):
    n = prices.shape[0]
    out = np.full(n, np.nan)
    if n < 2:
        return out
    changed = np.abs(np.diff(prices)) > rtol * np.abs(prices[:-1])
    # value carried forward from the last change point
    src = np.where(changed, np.arange(n - 1), -1)
    src = np.maximum.accumulate(src)
    have = src >= 0
    out[1:][have] = prices[src[have]]
    return out
