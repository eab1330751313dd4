#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the convolution and pooling forward/backward kernels at the
shapes the base network actually runs during training, checks that the
two implementations agree numerically, and prints a speedup table.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5] [--batch 16]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cacaodx.kernels import pykernels

try:
    from cacaodx.kernels import ckernels
except ImportError:
    ckernels = None

# (name, in_channels, out_channels, side): the three conv stages of the
# base network plus one scaled-up stage.
CONV_CASES = [
    ("conv 3->16 @64", 3, 16, 64),
    ("conv 16->32 @32", 16, 32, 32),
    ("conv 32->64 @16", 32, 64, 16),
    ("conv 36->72 @74", 36, 72, 74),
]
POOL_CASES = [
    ("pool 16 @64", 16, 64),
    ("pool 32 @32", 32, 32),
    ("pool 64 @16", 64, 16),
]


def timeit(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(float(np.abs(x - y).max()) for x, y in zip(a, b))
    return float(np.abs(a - b).max())


def bench(args) -> None:
    rng = np.random.default_rng(0)
    rows = []
    for name, cin, cout, side in CONV_CASES:
        x = rng.standard_normal((args.batch, cin, side, side)).astype(np.float32)
        w = rng.standard_normal((cout, cin, 3, 3)).astype(np.float32)
        b = rng.standard_normal(cout).astype(np.float32)
        d_out = rng.standard_normal((args.batch, cout, side, side)).astype(np.float32)
        rows.append((f"{name} fwd",
                     lambda m=pykernels, x=x, w=w, b=b: m.conv2d_forward(x, w, b, 1, 1),
                     (lambda m=ckernels, x=x, w=w, b=b: m.conv2d_forward(x, w, b, 1, 1))
                     if ckernels else None))
        rows.append((f"{name} bwd",
                     lambda m=pykernels, x=x, w=w, d=d_out: m.conv2d_backward(x, w, 1, 1, d),
                     (lambda m=ckernels, x=x, w=w, d=d_out: m.conv2d_backward(x, w, 1, 1, d))
                     if ckernels else None))
    for name, channels, side in POOL_CASES:
        x = rng.standard_normal((args.batch, channels, side, side)).astype(np.float32)
        d_out = rng.standard_normal((args.batch, channels, side // 2, side // 2)).astype(np.float32)
        rows.append((f"{name} fwd",
                     lambda m=pykernels, x=x: m.avgpool_forward(x, 2, 2),
                     (lambda m=ckernels, x=x: m.avgpool_forward(x, 2, 2)) if ckernels else None))
        rows.append((f"{name} bwd",
                     lambda m=pykernels, s=x.shape, d=d_out: m.avgpool_backward(s, 2, 2, d),
                     (lambda m=ckernels, s=x.shape, d=d_out: m.avgpool_backward(s, 2, 2, d))
                     if ckernels else None))

    print(f"batch={args.batch} repeats={args.repeats}"
          f" compiled={'yes' if ckernels else 'NOT BUILT'}")
    print(f"{'kernel':<22} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8} {'max diff':>10}")
    for name, py_fn, c_fn in rows:
        py_ms = timeit(py_fn, args.repeats) * 1e3
        if c_fn is None:
            print(f"{name:<22} {py_ms:>10.2f} {'-':>12} {'-':>8} {'-':>10}")
            continue
        c_ms = timeit(c_fn, args.repeats) * 1e3
        diff = max_diff(py_fn(), c_fn())
        print(f"{name:<22} {py_ms:>10.2f} {c_ms:>12.2f} {py_ms / c_ms:>7.2f}x {diff:>10.2e}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--batch", type=int, default=16)
    bench(parser.parse_args())
