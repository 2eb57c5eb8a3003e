"""Time the numba kernels against the pure-numpy fallback on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Both kernel modules are imported directly, so ``IMPACTLAB_BACKEND`` does not
matter here.  The first numba call (compilation) is excluded from timings.
"""
import argparse
import time

import numpy as np

from impactlab import _kernels_numba as nb
from impactlab import _kernels_numpy as npk
from impactlab.powerlaw import candidate_indices
from impactlab.synth import gen_powerlaw_samples


def cases():
    rng = np.random.default_rng(0)
    x = np.sort(gen_powerlaw_samples(2.5, 1e-4, 50_000, 0))
    cand = candidate_indices(x).astype(np.int64)
    yield "xmin_scan n=50k", (x, cand, 5)

    om = 10 ** rng.uniform(-0.9, 1, 60)
    dp = 1e-3 * om**0.4
    lc = np.log(np.repeat([1.0, 10.0, 100.0], 20))
    g = np.round(np.linspace(-1, 1, 201), 12)
    yield "collapse_grid 201x201", (om, dp, lc, g, g, 10)

    qt = np.sort(rng.integers(0, 10**10, 1_000_000))
    tt = np.sort(rng.integers(0, 10**10, 300_000))
    yield "prevailing_index 300k/1M", (tt, qt, np.int64(0))

    p = 100 + np.cumsum(rng.choice([-0.01, 0.0, 0.01], 300_000))
    yield "prev_distinct_price 300k", (p, 1e-9)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<28}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for label, a in cases():
        name = label.split()[0]
        f_nb, f_np = getattr(nb, name), getattr(npk, name)
        f_nb(*a)  # compile
        t_nb = best_of(f_nb, a, args.repeat)
        t_np = best_of(f_np, a, args.repeat)
        print(f"{label:<28}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
