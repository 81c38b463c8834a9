"""Time one SGD epoch of the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n 5000] [--repeat 5]

Both backends run the same epoch from the same starting parameters, so the
script also reports how far apart their results are.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from mpe_lab.nn import BACKEND, _kernels_py, get_kernels

MSE, RIESZ = _kernels_py.MSE, _kernels_py.RIESZ


def time_epoch(kernels, params, sizes, X, y, order, mode, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        p, v = params.copy(), np.zeros_like(params)
        t0 = time.perf_counter()
        kernels.sgd_epoch(p, v, sizes, X, y, order, 128, 2e-3, 0.9, mode, X.shape[1] - 1, 0.05)
        best = min(best, time.perf_counter() - t0)
        out = p
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--d", type=int, default=8, help="input width")
    ap.add_argument("--hidden", type=int, nargs="+", default=[64, 64])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if BACKEND != "compiled":
        print("compiled kernels not built; only the Python fallback is available")
    rng = np.random.default_rng(0)
    sizes = np.array([args.d, *args.hidden, 1], dtype=np.int64)
    params = rng.normal(scale=0.3, size=_kernels_py.param_count(sizes))
    X = rng.normal(size=(args.n, args.d))
    y = rng.normal(size=args.n)
    order = rng.permutation(args.n)

    print(f"n={args.n} layers={sizes.tolist()} batch=128, best of {args.repeat}")
    print(f"{'loss':<7}{'python (s)':>12}{'compiled (s)':>14}{'speedup':>9}{'max |dparam|':>14}")
    for name, mode in (("mse", MSE), ("riesz", RIESZ)):
        t_py, p_py = time_epoch(get_kernels("python"), params, sizes, X, y, order, mode, args.repeat)
        if BACKEND == "compiled":
            t_c, p_c = time_epoch(get_kernels("compiled"), params, sizes, X, y, order, mode, args.repeat)
            diff = float(np.abs(p_py - p_c).max())
            print(f"{name:<7}{t_py:>12.4f}{t_c:>14.4f}{t_py / t_c:>8.2f}x{diff:>14.2e}")
        else:
            print(f"{name:<7}{t_py:>12.4f}{'-':>14}{'-':>9}{'-':>14}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
