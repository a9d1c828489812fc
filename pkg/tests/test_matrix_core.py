import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rectclt import rng
from rectclt.errors import NotPSDError, ValidationError
from rectclt.matrix_core import (CovarianceSpec, factor_for_sampling, gaussian_split,
                                 min_eigenvalue)


def eig2_min(a, b, c):
    # smaller root of the 2x2 characteristic polynomial [[a, b], [b, c]]
    return (a + c - math.sqrt((a - c) ** 2 + 4 * b * b)) / 2


def test_min_eigenvalue_examples():
    assert min_eigenvalue(np.eye(3)) == 1.0
    assert min_eigenvalue(np.diag([4.0, 1.0])) == 1.0
    assert eig2_min(2, 1, 2) == 1.0
    assert min_eigenvalue([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx(1.0, rel=1e-12)


def test_min_eigenvalue_matches_closed_form_2x2(gen):
    for _ in range(50):
        a, c = gen.uniform(0.5, 5, 2)
        b = gen.uniform(-1, 1) * math.sqrt(a * c)
        assert min_eigenvalue([[a, b], [b, c]]) == pytest.approx(max(eig2_min(a, b, c), 0), abs=1e-12)


def test_validation_errors():
    with pytest.raises(ValidationError, match="asymmetry"):
        CovarianceSpec([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValidationError, match="non-finite"):
        CovarianceSpec([[1.0, np.nan], [np.nan, 1.0]])
    with pytest.raises(NotPSDError, match="not PSD"):
        CovarianceSpec([[1.0, 2.0], [2.0, 1.0]])


def test_fields():
    c = CovarianceSpec([[4.0, 1.0], [1.0, 9.0]])
    assert c.dim == 2
    assert c.min_diag_sqrt**2 == 4.0
    assert c.min_diag == 4.0
    assert c.scale == pytest.approx(np.max(np.linalg.eigvalsh(c.entries)))


def test_factor_examples():
    assert np.array_equal(factor_for_sampling(np.eye(3)), np.eye(3))
    assert np.allclose(factor_for_sampling(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    f = factor_for_sampling(a)
    assert np.max(np.abs(f @ f.T - a)) <= 1e-12


def test_factor_rank_deficient():
    v = np.array([[1.0, 2.0, -1.0]])
    a = v.T @ v
    f = factor_for_sampling(a)
    assert np.max(np.abs(f @ f.T - a)) <= 1e-9 * 6


def test_factor_zero_matrix():
    assert np.array_equal(factor_for_sampling(np.zeros((2, 2))), np.zeros((2, 2)))


def test_split_examples():
    lam, rem = gaussian_split(np.eye(2))
    assert lam == 1.0 and np.array_equal(rem.entries, np.zeros((2, 2)))
    lam, rem = gaussian_split([[2.0, 1.0], [1.0, 2.0]])
    assert lam == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(rem.entries, [[1.0, 1.0], [1.0, 1.0]], atol=1e-12)
    assert np.allclose(rem.eigenvalues, [0.0, 2.0], atol=1e-12)
    lam, rem = gaussian_split(np.diag([3.0, 5.0]))
    assert lam == 3.0 and np.array_equal(rem.entries, np.diag([0.0, 2.0]))


def test_split_near_singular_remainder_is_sampleable():
    # eigenvalues spread over many orders leave a remainder with a tiny negative eigenvalue
    q, _ = np.linalg.qr(np.random.default_rng(5).normal(size=(6, 6)))
    a = q @ np.diag([1e-7, 1e-3, 1, 10, 100, 1e4]) @ q.T
    lam, rem = gaussian_split(0.5 * (a + a.T))
    assert rem.min_eig >= 0
    f = factor_for_sampling(rem)
    assert np.all(np.isfinite(f))


psd_gen = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                 elements=st.floats(-3, 3, allow_nan=False, width=64))


@given(psd_gen)
def test_min_eig_nonnegative_and_below_diagonal(g):
    a = g.T @ g
    c = CovarianceSpec(a)
    assert c.min_eig >= 0
    assert np.all(c.min_eig <= np.diag(c.entries) + 1e-9 * max(c.scale, 1e-300))


@given(psd_gen)
def test_split_reconstruction(g):
    a = g.T @ g
    lam, rem = gaussian_split(a)
    assert np.max(np.abs(lam * np.eye(a.shape[0]) + rem.entries - a)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


@given(psd_gen, st.floats(1e-3, 1e3))
def test_min_eig_homogeneous(g, c):
    a = g.T @ g + 0.1 * np.eye(g.shape[1])
    assert min_eigenvalue(c * a) == pytest.approx(c * min_eigenvalue(a), rel=1e-9)


@given(psd_gen)
def test_quadratic_form_lower_bound(g):
    a = g.T @ g
    c = CovarianceSpec(a)
    v = np.random.default_rng(0).normal(size=(20, a.shape[0]))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    q = np.einsum("ij,jk,ik->i", v, a, v)
    assert np.all(q >= c.min_eig - 1e-9 * max(c.scale, 1.0))


def test_sampling_covariance_within_5_se():
    a = np.array([[2.0, 0.8, -0.3], [0.8, 1.0, 0.2], [-0.3, 0.2, 0.5]])
    f = factor_for_sampling(a)
    z = rng.stream(11, 0).standard_normal((10**6, 3))
    x = z @ f.T
    prods = x[:, :, None] * x[:, None, :]
    emp = prods.mean(axis=0)
    se = prods.std(axis=0) / math.sqrt(x.shape[0])
    assert np.all(np.abs(emp - a) <= 5 * se)
