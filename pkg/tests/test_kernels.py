"""Both kernel backends against each other and against direct definitions."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from oodcombine import _kernels_py, kernels

BACKENDS = kernels.available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


def test_selected_backend_is_listed():
    assert kernels.BACKEND in BACKENDS


def test_dominance_counts(impl, rng):
    cal = rng.integers(0, 4, size=(60, 3)).astype(float)  # many ties
    q = rng.integers(-1, 5, size=(25, 3)).astype(float)
    want = np.array([np.sum(np.all(cal <= x, axis=1)) for x in q])
    assert_array_equal(kernels.dominance_counts(cal, q, impl=impl), want)


def test_knn_mean_ties_prefer_lower_index(impl):
    ref = np.array([[0.0], [1.0], [-1.0], [2.0]])
    vals = np.array([10.0, 20.0, 30.0, 40.0])
    # x = 0.5 is equidistant from 0 and 1; k = 1 keeps index 0
    assert_allclose(kernels.knn_mean(ref, vals, [[0.5]], 1, impl=impl), [10.0])
    # x = 0: neighbours 0, then 1 and 2 tie at distance 1, index 1 wins
    assert_allclose(kernels.knn_mean(ref, vals, [[0.0]], 2, impl=impl), [15.0])


def test_knn_mean_brute_force(impl, rng):
    ref = rng.random((80, 2))
    vals = rng.random(80)
    q = rng.random((30, 2))
    d2 = ((q[:, None, :] - ref[None, :, :]) ** 2).sum(-1)
    want = np.array([vals[np.argsort(row, kind="stable")[:5]].mean() for row in d2])
    assert_allclose(kernels.knn_mean(ref, vals, q, 5, impl=impl), want, rtol=0, atol=1e-15)


def test_gibbs_kernel(impl, rng):
    c = rng.random((7, 9))
    a, b = rng.random(7), rng.random(9)
    want = np.exp((a[:, None] + b[None, :] - c) / 0.3)
    assert_allclose(kernels.gibbs_kernel(c, a, b, 0.3, impl=impl), want, rtol=1e-15)


def test_concordance(impl, rng):
    x = rng.integers(0, 5, 40).astype(float)
    y = rng.integers(0, 5, 40).astype(float)
    want = 0
    for i in range(40):
        for j in range(i + 1, 40):
            want += int(np.sign((x[i] - x[j]) * (y[i] - y[j])))
    assert kernels.concordance(x, y, impl=impl) == want


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")
def test_backends_bitwise_equal(rng):
    c = BACKENDS["cython"]
    cal, q = rng.normal(size=(300, 3)), rng.normal(size=(120, 3))
    assert_array_equal(c.dominance_counts(cal, q), _kernels_py.dominance_counts(cal, q))
    vals = rng.random(300)
    assert_array_equal(
        kernels.knn_mean(cal, vals, q, 5, impl=c), kernels.knn_mean(cal, vals, q, 5, impl=_kernels_py)
    )
    x, y = rng.normal(size=500), rng.normal(size=500)
    assert kernels.concordance(x, y, impl=c) == kernels.concordance(x, y, impl=_kernels_py)


def test_pure_python_env_switch():
    import subprocess
    import sys

    code = "from oodcombine import kernels; print(kernels.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env={"OODCOMBINE_PURE_PYTHON": "1"}, check=True
    )
    assert out.stdout.strip() == "python"
