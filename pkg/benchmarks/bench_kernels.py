"""Benchmark the compiled kernels against the numpy fallback.

Run from the repository root after building the extension:

    python3 setup.py build_ext --inplace
    python3 benchmarks/bench_kernels.py
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from ewclab._kernels import _pykernels as pk

try:
    from ewclab._kernels import _ckernels as ck
except ImportError:
    ck = None


def timeit(fn, *args, repeat=7):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_adam(impl, n=75184, steps=20):
    rng = np.random.default_rng(0)
    p, g = rng.normal(size=n), rng.normal(size=n)
    m, v = np.zeros(n), np.zeros(n)

    def run():
        for t in range(1, steps + 1):
            impl.adam_update(p, g, m, v, t, 1e-3, 0.9, 0.999, 1e-8)

    return timeit(run)


def bench_ewc(impl, n=75184, steps=20):
    rng = np.random.default_rng(1)
    th, ref, f = rng.normal(size=n), rng.normal(size=n), rng.random(n)

    def run():
        for _ in range(steps):
            impl.ewc_terms(th, ref, f, 2.5)

    return timeit(run)


def bench_pairwise(impl, n=768, d=64):
    x = np.random.default_rng(2).normal(size=(n, d))
    return timeit(lambda: impl.pairwise_sq_dists(x))


def bench_student(impl, n=768, steps=10):
    y = np.random.default_rng(3).normal(size=(n, 2))

    def run():
        for _ in range(steps):
            impl.student_terms(y)

    return timeit(run)


def bench_calibrate(impl, n=768, d=64):
    x = np.random.default_rng(4).normal(size=(n, d))
    sqd = pk.pairwise_sq_dists(x)
    return timeit(lambda: impl.perplexity_calibrate(sqd, 30.0), repeat=3)


BENCHES = [
    ("adam_update (75k params, 20 steps)", bench_adam),
    ("ewc_terms (75k params, 20 steps)", bench_ewc),
    ("pairwise_sq_dists (768 x 64)", bench_pairwise),
    ("student_terms (768 pts, 10 iters)", bench_student),
    ("perplexity_calibrate (768 pts)", bench_calibrate),
]


def main():
    if ck is None:
        print("compiled backend not built; run: python3 setup.py build_ext --inplace")
    header = f"{'kernel':42s} {'py':>10s} {'c':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, bench in BENCHES:
        t_py = bench(pk)
        if ck is not None:
            t_c = bench(ck)
            print(f"{name:42s} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms {t_py / t_c:7.1f}x")
        else:
            print(f"{name:42s} {t_py * 1e3:9.2f}ms {'-':>10s} {'-':>8s}")


if __name__ == "__main__":
    main()
