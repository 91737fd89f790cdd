#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from layoutpref._kernels import _fallback

try:
    from layoutpref._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_binning(impl, a, d):
    return lambda: impl.unbin_tokens(impl.bin_tokens(a, d, 224), d, 224)


def bench_iou(impl, boxes_a, boxes_b):
    return lambda: impl.iou_many(boxes_a, boxes_b)


def bench_metrics(impl, layouts):
    def run():
        for xs, ys, corners, areas in layouts:
            impl.alignment_score(xs, ys)
            impl.overlap_raw(corners, areas)

    return run


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n = 1_000_000
    d = rng.uniform(1, 2048, n)
    a = rng.uniform(0, 1, n) * d

    m = 200_000
    xy = rng.uniform(-10, 10, (m, 2))
    wh = rng.uniform(0, 8, (m, 2))
    boxes_a = np.hstack([xy - wh / 2, xy + wh / 2])
    xy = rng.uniform(-10, 10, (m, 2))
    boxes_b = np.hstack([xy - wh / 2, xy + wh / 2])

    layouts = []
    for _ in range(2000):
        k = int(rng.integers(2, 9))
        xy = rng.uniform(0, 100, (k, 2))
        wh = rng.uniform(1, 40, (k, 2))
        corners = np.hstack([xy - wh / 2, xy + wh / 2])
        xs = np.stack([corners[:, 0], (corners[:, 0] + corners[:, 2]) / 2, corners[:, 2]], axis=1) / 100
        ys = np.stack([corners[:, 1], (corners[:, 1] + corners[:, 3]) / 2, corners[:, 3]], axis=1) / 100
        layouts.append((xs, ys, corners, wh[:, 0] * wh[:, 1]))

    cases = [
        ("bin+unbin 1e6 coords", bench_binning, (a, d)),
        ("iou_many 2e5 pairs", bench_iou, (boxes_a, boxes_b)),
        ("align+overlap 2e3 layouts", bench_metrics, (layouts,)),
    ]

    print(f"{'case':<28} {'python':>10} {'compiled':>10} {'speedup':>9}")
    for name, factory, payload in cases:
        t_py = timeit(factory(_fallback, *payload), args.repeat)
        if _core is None:
            print(f"{name:<28} {t_py * 1e3:9.1f}ms {'n/a':>10} {'n/a':>9}")
            continue
        t_c = timeit(factory(_core, *payload), args.repeat)
        print(f"{name:<28} {t_py * 1e3:9.1f}ms {t_c * 1e3:8.1f}ms {t_py / t_c:8.2f}x")


if __name__ == "__main__":
    main()
