"""Time the numba and numpy conv kernels on network-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

The numba path is compiled once before timing.
"""
import argparse
import timeit

import numpy as np

from rimml import kernels

SHAPES = {
    # batch, in channels, bins, out channels, filter length
    "smoke": (32, 12, 257, 12, 15),
    "full": (32, 50, 257, 50, 25),
    "first-layer": (32, 2, 257, 50, 25),
}


def bench(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if not kernels.HAS_NUMBA:
        print("numba unavailable; only the numpy path is timed")
    print(f"{'shape':<12} {'pass':<9} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, (b, c, n, o, k) in SHAPES.items():
        x = rng.standard_normal((b, c, n)).astype(np.float32)
        w = rng.standard_normal((o, c, k)).astype(np.float32)
        d = rng.standard_normal((b, o, n)).astype(np.float32)
        cases = {
            "forward": (lambda: kernels.conv1d_forward_numpy(x, w),
                        lambda: kernels.conv1d_forward_numba(x, w)),
            "backward": (lambda: kernels.conv1d_backward_numpy(d, x, w),
                         lambda: kernels.conv1d_backward_numba(d, x, w)),
        }
        for pas, (f_np, f_nb) in cases.items():
            t_np = bench(f_np, args.repeat) * 1e3
            if kernels.HAS_NUMBA:
                t_nb = bench(f_nb, args.repeat) * 1e3
                print(f"{name:<12} {pas:<9} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:8.2f}")
            else:
                print(f"{name:<12} {pas:<9} {t_np:10.2f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
