"""
Compiled core against the numpy fallback.

Times one field evaluation (all atoms as targets) and one RK4 step for a
range of ensemble sizes, reports the speedup and the fitted exponent of the
compiled time in ``n`` (close to 2 for the pairwise sum).

    python benchmarks/bench_backends.py [--dims 3] [--sizes 64 128 256 512 1024]
"""

import argparse
import timeit

import numpy as np

from sphereflow import _backend, _fallback
from sphereflow.sphere import sample_uniform


def _time(fn, budget=0.5):
    reps = max(1, int(budget / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=reps, repeat=3)) / reps


def bench(d, sizes, beta=1.0):
    core = _backend.impl
    if core is _fallback:
        raise SystemExit("compiled core unavailable; build with `pip install -e .`")
    threads = _backend.threads()
    A = np.eye(d)
    rows = []
    for n in sizes:
        X = sample_uniform(d, n, n)
        w = np.full(n, 1.0 / n)
        M = np.empty((0, d))
        args = (X, X, X, X, w, 1, beta)
        tc = _time(lambda: core.field_batch(*args, threads))
        tp = _time(lambda: _fallback.field_batch(*args))
        rc = _time(lambda: core.rk_advance(X, w, M, A, 1, beta, False, 0.01, 1, 1, True, threads))
        diff = np.abs(core.field_batch(*args, threads) - _fallback.field_batch(*args)).max()
        rows.append((n, tc, tp, rc, diff))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    p.add_argument("--dims", type=int, default=3)
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512, 1024])
    args = p.parse_args()
    rows = bench(args.dims, args.sizes)
    print(f"d={args.dims} threads={_backend.threads()}")
    print(f"{'n':>6} {'compiled field':>15} {'numpy field':>12} {'speedup':>8} "
          f"{'compiled rk4':>13} {'max |diff|':>11}")
    for n, tc, tp, rc, diff in rows:
        print(f"{n:>6} {tc * 1e3:>12.3f} ms {tp * 1e3:>9.3f} ms {tp / tc:>7.1f}x "
              f"{rc * 1e3:>10.3f} ms {diff:>11.2e}")
    n = np.log([r[0] for r in rows])
    t = np.log([r[1] for r in rows])
    slope = np.polyfit(n[len(n) // 2:], t[len(t) // 2:], 1)[0]
    print(f"compiled time ~ n^{slope:.2f} (large-n fit)")


if __name__ == "__main__":
    main()
