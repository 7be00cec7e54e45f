"""Benchmark the numba kernels against their numpy/python fallbacks.

Run: python3 benchmarks/bench_kernels.py

The same comparisons gate correctness in tests/test_accel_fallback.py; this
script only reports timing. NAVSIM_DISABLE_NUMBA=1 makes the whole package
run on the fallback paths.
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from navsim.accel import HAS_NUMBA  # noqa: E402
from navsim import mapping, world  # noqa: E402
from navsim.geometry import Pose  # noqa: E402
from navsim.world import load_world_file  # noqa: E402


def timeit(fn, n_warmup=2, n_runs=7):
    for _ in range(n_warmup):
        fn()
    times = []
    for _ in range(n_runs):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return np.mean(times) * 1e3, np.std(times) * 1e3


def bench_raycast():
    w = load_world_file(Path(__file__).resolve().parents[1] / "worlds" / "paper_world")
    rng = np.random.default_rng(0)
    n = 640 * 360
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = np.array([0.0, -3.0, 1.2])
    max_ranges = np.full(n, 10.0)

    out = np.empty(n)
    jit_ms = timeit(lambda: world._raycast_batch_jit(origin, dirs, w.boxes, max_ranges, out)) \
        if world._raycast_batch_jit is not None else None
    np_ms = timeit(lambda: world._raycast_batch_np(origin, dirs, w.boxes, max_ranges))
    report("raycast 230k rays x 9 boxes", jit_ms, np_ms)
    if jit_ms is not None:
        got = world._raycast_batch_jit(origin, dirs, w.boxes, max_ranges, np.empty(n))
        want = world._raycast_batch_np(origin, dirs, w.boxes, max_ranges)
        assert np.array_equal(got, want), "raycast backends disagree"


def bench_integrate():
    rng = np.random.default_rng(1)
    gmap = mapping.GlobalOccupancyMap((-11, -11, 0), 0.2, (110, 110, 15))
    pts = rng.uniform([-2, -2, 0.2], [8, 2, 2.5], size=(14400, 3))
    pose = Pose(np.array([0.0, 0.0, 1.2]))
    p = gmap.params
    args_tail = (np.asarray(pose.position), pts, gmap.origin, 1.0 / 0.2,
                 p.l_occ, p.l_free, -p.l_clamp, p.l_clamp)

    jit_ms = None
    if mapping._integrate_rays_jit is not None:
        jit_ms = timeit(lambda: mapping._integrate_rays_jit(np.zeros((110, 110, 15)), *args_tail))
    py_ms = timeit(lambda: mapping._integrate_rays_py(np.zeros((110, 110, 15)), *args_tail), n_runs=3)
    report("voxel ray integration, 14.4k points", jit_ms, py_ms)


def bench_esdf():
    rng = np.random.default_rng(2)
    src = rng.random((110, 110)) < 0.1

    def run_jit():
        f = np.where(src, 0.0, 1e18)
        mapping._edt_sq_2d_jit(f)

    def run_py():
        f = np.where(src, 0.0, 1e18)
        mapping._edt_sq_2d_py(f)

    jit_ms = timeit(run_jit) if mapping._edt_sq_2d_jit is not None else None
    py_ms = timeit(run_py, n_runs=3)
    report("squared EDT 110x110", jit_ms, py_ms)
    if mapping._edt_sq_2d_jit is not None:
        a = np.where(src, 0.0, 1e18)
        b = a.copy()
        assert np.array_equal(mapping._edt_sq_2d_jit(a), mapping._edt_sq_2d_py(b)), "EDT backends disagree"


def report(name, jit_ms, fallback_ms):
    fb = f"{fallback_ms[0]:9.2f} +- {fallback_ms[1]:.2f} ms"
    if jit_ms is None:
        print(f"{name:40s} numba: unavailable   fallback: {fb}")
    else:
        speedup = fallback_ms[0] / jit_ms[0]
        print(f"{name:40s} numba: {jit_ms[0]:8.2f} ms   fallback: {fb}   speedup {speedup:6.1f}x")


def main():
    print(f"numba active: {HAS_NUMBA}")
    bench_raycast()
    bench_integrate()
    bench_esdf()


if __name__ == "__main__":
    main()
