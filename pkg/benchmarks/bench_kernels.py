"""Numba kernels against the pure-numpy fallback.

Times the squared EDT, edge thinning, hysteresis and whole-sample
preprocessing with VOXELFORGE_NUMBA switched on and off, and checks that
both backends agree. Compile time is excluded by a warm-up call.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--canonical]
"""

import argparse
import os
import time

import numpy as np

from voxelforge import _accel
from voxelforge.data.scene import generate_scene, render
from voxelforge.edges import (
    DEFAULT_T_HIGH,
    DEFAULT_T_LOW,
    gaussian_blur,
    hysteresis,
    non_maximum_suppression,
    rgb_to_gray,
    sobel_gradients,
)
from voxelforge.pipeline import prepare_sample
from voxelforge.tsdf import edt3_squared


def timed(fn, repeat):
    fn()  # warm-up, triggers compilation
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def run_both(fn, repeat):
    res = {}
    for name, flag in (("numba", "1"), ("numpy", "0")):
        os.environ["VOXELFORGE_NUMBA"] = flag
        res[name] = timed(fn, repeat)
    os.environ.pop("VOXELFORGE_NUMBA", None)
    return res


def same(a, b):
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return all(np.array_equal(x.values, y.values) for x, y in zip(a, b))


def cases(canonical):
    rng = np.random.default_rng(0)
    out = []
    shapes = [(60, 36, 60)] + ([(240, 144, 240)] if canonical else [])
    for shape in shapes:
        b = rng.random(shape) < 0.01
        out.append((f"edt {shape[0]}x{shape[1]}x{shape[2]}", lambda b=b: edt3_squared(b)))

    sample = render(generate_scene(1, 0.8))
    mag, theta = sobel_gradients(gaussian_blur(rgb_to_gray(sample.rgb), 1.0))
    nms = non_maximum_suppression(mag, theta)
    h, w = mag.shape
    out.append((f"nms {h}x{w}", lambda: non_maximum_suppression(mag, theta)))
    out.append((f"hysteresis {h}x{w}", lambda: hysteresis(nms, DEFAULT_T_LOW, DEFAULT_T_HIGH)))

    def prep():
        p = prepare_sample(sample)
        return (p.surface, p.edge)

    out.append(("preprocess sample", prep))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--canonical", action="store_true", help="also time the EDT on the 240x144x240 grid")
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    print(f"{'kernel':<24}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  agree")
    for name, fn in cases(args.canonical):
        r = run_both(fn, args.repeat)
        (tn, a), (tp, b) = r["numba"], r["numpy"]
        print(f"{name:<24}{1e3 * tn:>10.1f}{1e3 * tp:>10.1f}{tp / tn:>8.1f}x  {same(a, b)}")


if __name__ == "__main__":
    main()
