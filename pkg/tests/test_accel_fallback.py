"""The numba kernels and their numpy/python fallbacks must agree exactly."""

import numpy as np
import pytest

from navsim import mapping, world
from navsim.accel import HAS_NUMBA
from navsim.world import load_world_file

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba disabled; only one backend active")


@needs_numba
def test_raycast_backends_bitwise_equal():
    w = load_world_file("worlds/paper_world")
    rng = np.random.default_rng(0)
    n = 5000
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = np.array([0.3, -2.7, 1.4])
    max_ranges = rng.uniform(1.0, 12.0, n)
    got = world._raycast_batch_jit(origin, dirs, w.boxes, max_ranges, np.empty(n))
    want = world._raycast_batch_np(origin, dirs, w.boxes, max_ranges)
    assert np.array_equal(got, want)


@needs_numba
def test_integrate_backends_equal():
    rng = np.random.default_rng(1)
    pts = rng.uniform([-3, -3, 0.0], [3, 3, 2.8], size=(2000, 3))
    origin = np.array([0.1, 0.1, 1.1])
    p = mapping.MappingConfig()
    args = (origin, pts, np.array([-4.0, -4.0, 0.0]), 5.0, p.l_occ, p.l_free, -p.l_clamp, p.l_clamp)
    a = np.zeros((40, 40, 15))
    b = np.zeros((40, 40, 15))
    mapping._integrate_rays_jit(a, *args)
    mapping._integrate_rays_py(b, *args)
    assert np.array_equal(a, b)


@needs_numba
def test_edt_backends_equal():
    rng = np.random.default_rng(2)
    for _ in range(10):
        src = rng.random((48, 64)) < rng.uniform(0.02, 0.6)
        a = np.where(src, 0.0, 1e18)
        b = a.copy()
        assert np.array_equal(mapping._edt_sq_2d_jit(a), mapping._edt_sq_2d_py(b))
