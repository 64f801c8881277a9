#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Covers the individual hot kernels at simulator-typical sizes and an
end-to-end federated round, switching backends in-process.

Usage: python benchmarks/bench_backends.py [--repeats N] [--rounds T]
"""

from __future__ import annotations

import argparse
import tempfile
import time

import numpy as np

from fedsplitx import _kernels
from fedsplitx.harness import ExperimentConfig, run_experiment


def time_call(fn, repeats: int) -> float:
    """Best-of-runs seconds per call."""
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def kernel_cases(width: int, batch: int = 32):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(batch, width)).astype(np.float32)
    W = rng.normal(size=(width, width)).astype(np.float32)
    b = rng.normal(size=width).astype(np.float32)
    g = rng.normal(size=(batch, width)).astype(np.float32)
    gW = np.zeros_like(W)
    gb = np.zeros_like(b)
    logits = rng.normal(size=(batch, 10)).astype(np.float32)
    labels = rng.integers(0, 10, size=batch).astype(np.int64)

    def run(k):
        return {
            f"dense_fwd w={width}": lambda: k.dense_fwd(x, W, b),
            f"dense_bwd w={width}": lambda: k.dense_bwd(x, W, g, gW, gb),
            f"res_fwd   w={width}": lambda: k.res_fwd(x, W, b),
            f"res_bwd   w={width}": lambda: k.res_bwd(x, W, b, g, gW, gb),
            f"softmax_xent b={batch}": lambda: k.softmax_xent(logits, labels),
        }

    return run


def bench_kernels(repeats: int) -> list[tuple[str, float, float]]:
    rows = []
    for width in (32, 64, 128):
        case = kernel_cases(width)
        with _kernels.use("numpy") as k:
            numpy_times = {name: time_call(fn, repeats)
                           for name, fn in case(k).items()}
        with _kernels.use("compiled") as k:
            comp_times = {name: time_call(fn, repeats)
                          for name, fn in case(k).items()}
        for name in numpy_times:
            rows.append((name, numpy_times[name], comp_times[name]))
    return rows


def bench_round(rounds: int) -> list[tuple[str, float, float]]:
    cfg = ExperimentConfig(rounds=rounds, seed=0, eval_interval=10 ** 9)
    times = {}
    for backend in ("numpy", "compiled"):
        with _kernels.use(backend):
            with tempfile.TemporaryDirectory() as td:
                t0 = time.perf_counter()
                run_experiment(cfg, td)
                times[backend] = (time.perf_counter() - t0) / max(rounds, 1)
    return [(f"fedsplitx round (T={rounds})", times["numpy"], times["compiled"])]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=2000)
    parser.add_argument("--rounds", type=int, default=50)
    args = parser.parse_args()

    if "compiled" not in _kernels.available():
        print("compiled backend not built; nothing to compare")
        return 1

    rows = bench_kernels(args.repeats) + bench_round(args.rounds)
    print(f"{'case':<26} {'numpy':>12} {'compiled':>12} {'speedup':>8}")
    print("-" * 62)
    for name, t_np, t_c in rows:
        print(f"{name:<26} {t_np * 1e6:>10.2f}us {t_c * 1e6:>10.2f}us "
              f"{t_np / t_c:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
