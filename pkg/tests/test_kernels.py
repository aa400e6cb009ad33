"""Compiled and pure-python kernel backends must agree bit for bit.

Every public kernel is driven with randomized inputs and the outputs are
compared exactly (values and dtypes), so either backend can be swapped in
without changing any downstream result.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from evcalib import _kernels
from evcalib._kernels import _ref

_core = pytest.importorskip(
    "evcalib._kernels._core",
    reason="compiled kernel extension not built")


def assert_same(a, b):
    assert type(a) == type(b) or (np.isscalar(a) and np.isscalar(b))
    if isinstance(a, tuple):
        assert len(a) == len(b)
        for ai, bi in zip(a, b):
            assert_same(ai, bi)
    elif isinstance(a, np.ndarray):
        assert a.dtype == b.dtype
        np.testing.assert_array_equal(a, b, strict=True)
    else:
        assert a == b


def random_batch(rng, n, width, height):
    t = np.sort(rng.uniform(0.0, 0.02, n))
    x = rng.integers(0, width, n, dtype=np.int32)
    y = rng.integers(0, height, n, dtype=np.int32)
    p = rng.choice(np.array([-1, 1], dtype=np.int8), n)
    return t, x, y, p


class TestRngDraws:
    @pytest.mark.parametrize("seed,pixel,count", [
        (0, 0, 1), (0, 1, 64), (12345, 99991, 200), (2 ** 31, 7, 50),
    ])
    def test_matches_reference(self, seed, pixel, count):
        assert_same(_core.rng_draws(seed, pixel, count),
                    _ref.rng_draws(seed, pixel, count))

    def test_streams_differ_across_pixels(self):
        a = _ref.rng_draws(3, 100, 32)
        b = _ref.rng_draws(3, 101, 32)
        assert not np.array_equal(a, b)


class TestBuildSae:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(0, 500))
        t, x, y, p = random_batch(rng, n, 40, 30)
        assert_same(_core.build_sae_maps(t, x, y, p, 40, 30),
                    _ref.build_sae_maps(t, x, y, p, 40, 30))

    def test_repeated_pixel_ties(self):
        t = np.zeros(4)
        x = np.array([3, 3, 3, 3], dtype=np.int32)
        y = np.array([2, 2, 2, 2], dtype=np.int32)
        p = np.array([1, -1, 1, -1], dtype=np.int8)
        assert_same(_core.build_sae_maps(t, x, y, p, 8, 8),
                    _ref.build_sae_maps(t, x, y, p, 8, 8))


class TestLabelComponents:
    @pytest.mark.parametrize("seed,fill", [(0, 0.2), (1, 0.5), (2, 0.8)])
    def test_matches_reference(self, seed, fill):
        rng = np.random.default_rng(seed)
        occ = (rng.random((37, 53)) < fill).astype(np.uint8)
        assert_same(_core.label_components(occ), _ref.label_components(occ))

    def test_empty_and_full(self):
        for occ in (np.zeros((5, 5), dtype=np.uint8),
                    np.ones((5, 5), dtype=np.uint8)):
            assert_same(_core.label_components(occ),
                        _ref.label_components(occ))

    def test_diagonal_connectivity(self):
        occ = np.eye(6, dtype=np.uint8)
        labels, n = _ref.label_components(occ)
        assert n == 1
        assert labels[occ.astype(bool)].tolist() == [1] * 6


class TestRansacPlane:
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(5, 40))
        xs = rng.integers(0, 7, n).astype(np.float64)
        ys = rng.integers(0, 7, n).astype(np.float64)
        ts = rng.uniform(0.0, 0.02, n)
        assert_same(
            _core.ransac_plane(xs, ys, ts, 50, 1e-3, seed, 12345),
            _ref.ransac_plane(xs, ys, ts, 50, 1e-3, seed, 12345))

    def test_degenerate_sample_agrees(self):
        xs = np.arange(8, dtype=np.float64)
        ys = np.zeros(8)
        ts = np.linspace(0.0, 1e-3, 8)
        assert_same(_core.ransac_plane(xs, ys, ts, 20, 1e-4, 0, 0),
                    _ref.ransac_plane(xs, ys, ts, 20, 1e-4, 0, 0))


class TestEstimateFlowFields:
    @pytest.mark.parametrize("seed", range(4))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(200 + seed)
        w, h = 24, 18
        n = int(rng.integers(50, 400))
        t, x, y, p = random_batch(rng, n, w, h)
        time_map, pol_map, valid = _ref.build_sae_maps(t, x, y, p, w, h)
        args = (time_map, pol_map, valid.astype(np.uint8), 2, 50, 0.2,
                1e-3, 5, seed)
        assert_same(_core.estimate_flow_fields(*args),
                    _ref.estimate_flow_fields(*args))


class TestBackendSelection:
    def test_active_backend_prefers_compiled(self):
        assert _kernels.BACKEND == "cython"

    def test_env_var_forces_pure_python(self):
        code = ("from evcalib._kernels import BACKEND; "
                "print(BACKEND)")
        env = dict(os.environ, EVCALIB_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"
