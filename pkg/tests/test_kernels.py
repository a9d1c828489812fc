import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rectclt import _pykernels, kernels
from rectclt.distributions import Gaussian, Spike, sample
from rectclt.estimators import RectangleFamily, mu_hat, smoothed_mu_hat

BACKENDS = ["numpy"] + (["cython"] if kernels.compiled_available() else [])


def direct_phi(points, corners, eps):
    from scipy.special import ndtr

    return np.array([[np.prod(ndtr((c - x) / eps)) for x in points] for c in corners])


def data(seed, n, k, p, grid=False):
    gen = np.random.default_rng(seed)
    pts = np.round(gen.normal(size=(n, p)), 1)
    if grid:
        ax = np.linspace(-1.5, 1.5, 4)
        cor = np.stack(np.meshgrid(*[ax] * p, indexing="ij"), -1).reshape(-1, p)
    else:
        cor = np.round(gen.normal(size=(k, p)), 1)
    return pts, gen.uniform(0, 2, n), cor


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("p", [1, 2, 5])
def test_indicator_kernels(backend, p):
    pts, w, cor = data(p, 300, 40, p)
    brute = np.array([[float(np.all(x <= c)) for x in pts] for c in cor])
    assert np.array_equal(kernels.indicator_matrix(pts, cor, backend), brute)
    assert np.allclose(kernels.indicator_sums(pts, w, cor, backend), brute @ w, rtol=1e-13, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("p,grid", [(1, False), (3, False), (2, True), (3, True)])
def test_phi_kernels(backend, p, grid):
    pts, w, cor = data(10 + p, 200, 30, p, grid)
    brute = direct_phi(pts, cor, 0.4)
    assert np.allclose(kernels.phi_matrix(pts, cor, 0.4, backend), brute, rtol=1e-13, atol=1e-15)
    assert np.allclose(kernels.phi_sums(pts, w, cor, 0.4, backend), brute @ w, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_phi_saturation(backend):
    pts = np.array([[0.0], [100.0], [-100.0]])
    cor = np.array([[0.0], [50.0]])
    m = kernels.phi_matrix(pts, cor, 1.0, backend)
    assert m.tolist() == [[0.5, 0.0, 1.0], [1.0, 0.0, 1.0]]


@settings(max_examples=25)
@given(st.integers(1, 4), st.integers(1, 60), st.integers(1, 30), st.integers(0, 2**31))
def test_backends_agree(p, n, k, seed):
    pts, w, cor = data(seed, n, k, p)
    ref_i = _pykernels.indicator_sums(pts, w, cor)
    ref_f = _pykernels.phi_sums(pts, w, cor, 0.3)
    for b in BACKENDS:
        assert np.allclose(kernels.indicator_sums(pts, w, cor, b), ref_i, rtol=1e-13, atol=1e-12)
        assert np.allclose(kernels.phi_sums(pts, w, cor, 0.3, b), ref_f, rtol=1e-12, atol=1e-12)


def test_estimators_agree_across_backends():
    u = sample(Spike(3, 4.0, 1 / 3), 4000, seed=1)
    v = sample(Gaussian.standard(3), 4000, seed=1, stream_id=1)
    rects = RectangleFamily.fixed(np.random.default_rng(0).normal(size=(200, 3)))
    a = [mu_hat(u, v, rects, resamples=20, backend=b) for b in BACKENDS]
    s = [smoothed_mu_hat(u, v, 0.3, resamples=20, backend=b) for b in BACKENDS]
    assert all(x.value == a[0].value for x in a)
    assert all(abs(x.value - s[0].value) <= 1e-12 for x in s)


def test_shape_mismatch_and_unknown_backend():
    with pytest.raises(ValueError, match="shape mismatch"):
        kernels.indicator_sums(np.zeros((3, 2)), np.ones(3), np.zeros((2, 3)))
    with pytest.raises(ValueError, match="unknown kernel backend"):
        kernels.indicator_sums(np.zeros((3, 2)), np.ones(3), np.zeros((2, 2)), backend="fortran")


def test_pure_python_switch():
    env = dict(os.environ, RECTCLT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from rectclt import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
