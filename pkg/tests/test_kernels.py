import os
import subprocess
import sys

import numpy as np
import pytest

from acimtools import _kernels_py, kernels

try:
    from acimtools import _kernels
except ImportError:  # pragma: no cover
    _kernels = None

needs_compiled = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")


def test_pure_env_forces_fallback():
    env = dict(os.environ, ACIMTOOLS_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import acimtools; print(acimtools.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_python_escape_oracle():
    # t(1 + t^2) from 0.2 leaves [0, 0.25) after 5 steps: a direct loop is the oracle
    t, n = 0.2, 0
    while t < 0.25:
        t = t * (1 + t * t)
        n += 1
    steps, X, _ = _kernels_py.escape_local(0, np.array([[0.2]]), 2.0, 1.0, np.array([16.0]), 100)
    assert steps[0] == n == 5
    assert X[0, 0] == pytest.approx(t, abs=1e-15)


@needs_compiled
@pytest.mark.parametrize("kind,m,w", [(0, 1, [16.0]), (1, 2, [25.0, 25.0]), (2, 3, [25.0, 25.0, 1600.0])])
def test_escape_backends_agree(kind, m, w):
    rng = np.random.default_rng(kind)
    X = rng.uniform(-0.2, 0.2, size=(500, m)) / np.sqrt(np.asarray(w) / 25.0)
    if kind == 0:
        X = np.abs(X)
    w = np.asarray(w)
    a = _kernels.escape_local(kind, np.ascontiguousarray(X), 2.0, 1.0, w, 5000)
    b = _kernels_py.escape_local(kind, np.ascontiguousarray(X), 2.0, 1.0, w, 5000)
    assert np.array_equal(a[0], b[0])
    assert np.allclose(a[1], b[1], rtol=1e-12, atol=0)
    assert np.allclose(a[2], b[2], rtol=1e-10, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("kind,x0", [(0, [0.2]), (1, [0.2, 0.1]), (2, [0.1, 0.1, 0.01])])
def test_inverse_orbit_backends_agree(kind, x0):
    x0 = np.array(x0)
    a = _kernels.inverse_orbit(kind, x0, 2.0, 1.0, 50, 1e-14, 200)
    b = _kernels_py.inverse_orbit(kind, x0, 2.0, 1.0, 50, 1e-14, 200)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-300)


@needs_compiled
def test_orbit_histogram_backends_agree():
    a = _kernels.orbit_histogram_1d(0.3141, 0.5, 1.0, 0.57, 20000, 100, 0.25, 1.0, 16)
    b = _kernels_py.orbit_histogram_1d(0.3141, 0.5, 1.0, 0.57, 20000, 100, 0.25, 1.0, 16)
    assert np.array_equal(a[0], b[0])
