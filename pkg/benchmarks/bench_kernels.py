"""Benchmark the compiled kernels against the pure-NumPy fallbacks.

Run from the repo root:

    python3 benchmarks/bench_kernels.py

Times affine warping and the im2col/col2im convolution kernels on
classifier-shaped workloads and prints the speedup of the native backend.
"""

from __future__ import annotations

import time

import numpy as np

from restlearn._kernels import pure

try:
    from restlearn._kernels import _native as native
except ImportError:
    native = None


def _time(fn, *args, repeats=5, warmup=1):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _workloads():
    rng = np.random.default_rng(0)
    images = rng.random((256, 28, 28, 1))
    # Pixel-space source map: mild rotation + shift, one matrix per image.
    ang = np.deg2rad(12.0)
    mat = np.array(
        [
            [np.cos(ang), -np.sin(ang), 2.0],
            [np.sin(ang), np.cos(ang), -1.5],
        ]
    )
    mats = np.broadcast_to(mat, (256, 2, 3)).copy()
    x = rng.random((128, 32, 24, 24))
    cols = rng.random((128 * 20 * 20, 32 * 5 * 5))
    yield "affine_sample (256x28x28)", "affine_sample", (images, mats)
    yield "im2col (128,32,24,24 k5)", "im2col", (x, 5, 5)
    yield "col2im (back to 24x24)", "col2im", (cols, 128, 32, 24, 24, 5, 5)


def main():
    if native is None:
        print("native backend not built; showing pure-backend times only")
    header = f"{'kernel':<28} {'pure (ms)':>10} {'native (ms)':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, name, args in _workloads():
        t_pure = _time(getattr(pure, name), *args)
        if native is not None:
            t_nat = _time(getattr(native, name), *args)
            a = getattr(pure, name)(*args)
            b = getattr(native, name)(*args)
            err = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
            print(
                f"{label:<28} {1e3 * t_pure:>10.2f} {1e3 * t_nat:>12.2f} "
                f"{t_pure / t_nat:>7.2f}x  (max diff {err:.2e})"
            )
        else:
            print(f"{label:<28} {1e3 * t_pure:>10.2f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
