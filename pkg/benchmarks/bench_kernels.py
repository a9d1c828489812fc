"""Time the corner-scan kernels on both backends and check they agree.

    python3 benchmarks/bench_kernels.py [--rows N] [--corners K] [--dims 1,4,16] [--repeat R]
"""
import argparse
import time

import numpy as np

from rectclt import kernels


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def grid_corners(count, p):
    k = max(2, int(round(count ** (1.0 / p))))
    axis = np.linspace(-2.0, 2.0, k)
    mesh = np.stack(np.meshgrid(*[axis] * p, indexing="ij"), axis=-1).reshape(-1, p)
    return np.ascontiguousarray(mesh[:count])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--corners", type=int, default=512)
    ap.add_argument("--dims", default="1,4,16")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not kernels.compiled_available():
        print("compiled extension not built; only the numpy backend is available")
    backends = ["numpy"] + (["cython"] if kernels.compiled_available() else [])
    gen = np.random.default_rng(args.seed)
    print(f"{'kernel':<16}{'p':>4}{'backend':>9}{'seconds':>11}{'speedup':>9}{'max |diff|':>12}")
    for p in (int(x) for x in args.dims.split(",")):
        pts = gen.standard_normal((args.rows, p))
        cor = gen.standard_normal((args.corners, p))
        grid = grid_corners(args.corners, p)
        w = np.ones(args.rows)
        cases = {
            "indicator_sums": lambda b: kernels.indicator_sums(pts, w, cor, b),
            "phi_sums": lambda b: kernels.phi_sums(pts, w, cor, 0.3, b),
            # grid corners share per-axis values, which enables the tabulated path
            "phi_sums_grid": lambda b: kernels.phi_sums(pts, w, grid, 0.3, b),
        }
        for name, fn in cases.items():
            ref_t, ref = best_time(lambda: fn("numpy"), args.repeat)
            for b in backends:
                t, out = best_time(lambda: fn(b), args.repeat)
                err = float(np.max(np.abs(out - ref)))
                print(f"{name:<16}{p:>4}{b:>9}{t:>11.4f}{ref_t / t:>9.1f}{err:>12.2e}")


if __name__ == "__main__":
    main()
