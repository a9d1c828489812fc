import itertools
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from rectclt import rng
from rectclt.distributions import Normal, Spike
from rectclt.errors import SizeGuardError, ValidationError
from rectclt.matrix_core import CovarianceSpec
from rectclt.oracle import (AtomicLaw, convolve, exact_mu_atomic, exact_mu_atomic_vs_gaussian,
                            exact_pseudo_moment, max_abs_moment, pseudo_moment_vs_gaussian, scale,
                            smoothed_mu_atomic, sum_law)

RAD = AtomicLaw.rademacher(1)


def brute_mu(a, b):
    """Direct double loop over every corner of the pooled coordinate grid."""
    p = a.dim
    values = [sorted({float(x[j]) for x in list(a.points) + list(b.points)}) for j in range(p)]
    best = 0.0
    for r in itertools.product(*values):
        fa = sum(m for x, m in zip(a.points, a.masses) if all(x[j] <= r[j] for j in range(p)))
        fb = sum(m for x, m in zip(b.points, b.masses) if all(x[j] <= r[j] for j in range(p)))
        best = max(best, abs(fa - fb))
    return best


def random_law(gen, p, atoms):
    pts = gen.integers(-2, 3, size=(atoms, p)).astype(float)
    w = gen.dirichlet(np.ones(atoms))
    return AtomicLaw(pts, w / w.sum())


@st.composite
def laws(draw, p=None):
    p = draw(st.integers(1, 3)) if p is None else p
    k = draw(st.integers(1, 5))
    pts = draw(st.lists(st.tuples(*[st.integers(-2, 2)] * p), min_size=k, max_size=k))
    w = np.array(draw(st.lists(st.integers(1, 20), min_size=k, max_size=k)), dtype=float)
    return AtomicLaw(np.array(pts, dtype=float), w / w.sum())


@st.composite
def triples(draw):
    p = draw(st.integers(1, 3))
    return draw(laws(p)), draw(laws(p)), draw(laws(p))


# -- convolve / scale / sum_law -----------------------------------------------

def test_convolve_examples():
    a = random_law(np.random.default_rng(1), 2, 4)
    assert convolve(AtomicLaw.dirac([0.0, 0.0]), a) == a
    rr = convolve(RAD, RAD)
    assert rr.points.ravel().tolist() == [-2.0, 0.0, 2.0]
    assert rr.masses.tolist() == [0.25, 0.5, 0.25]
    two = AtomicLaw.from_pairs([((0.0, 0.0), 0.5), ((1.0, 0.0), 0.5)])
    other = AtomicLaw.from_pairs([((0.0, 0.0), 0.3), ((0.0, 5.0), 0.7)])
    assert convolve(two, other).size == 4


def test_scale_examples():
    assert scale(RAD, 1.0) == RAD
    s = scale(RAD, 2.0)
    assert s.points.ravel().tolist() == [-2.0, 2.0] and s.masses.tolist() == [0.5, 0.5]
    a = random_law(np.random.default_rng(2), 3, 5)
    r = scale(a, -1.0)
    assert sorted(map(tuple, r.points)) == sorted(map(tuple, -a.points))
    with pytest.raises(ValidationError):
        scale(a, 0.0)


def test_sum_law_matches_binomial_and_convolution():
    s = sum_law(RAD, 4, normalize=False)
    assert s.points.ravel().tolist() == [-4.0, -2.0, 0.0, 2.0, 4.0]
    assert np.allclose(s.masses, np.array([1, 4, 6, 4, 1]) / 16, atol=1e-15)
    spike = AtomicLaw.from_pairs([((-1.5,), 0.1), ((0.0,), 0.8), ((1.5,), 0.1)])
    fast = sum_law(spike, 7)
    slow = spike
    for _ in range(6):
        slow = convolve(slow, spike)
    slow = scale(slow, 1 / math.sqrt(7))
    assert np.allclose(fast.points, slow.points, atol=1e-12)
    assert np.allclose(fast.masses, slow.masses, atol=1e-14)


def test_atom_merge_and_guards():
    a = AtomicLaw([[0.0], [1e-13], [1.0]], [0.25, 0.25, 0.5])
    assert a.size == 2 and a.masses.tolist() == [0.5, 0.5]
    with pytest.raises(ValidationError, match="sum"):
        AtomicLaw([[0.0], [1.0]], [0.5, 0.4])
    with pytest.raises(ValidationError):
        AtomicLaw([[0.0], [1.0]], [1.5, -0.5])
    big = AtomicLaw(np.arange(1001.0)[:, None], np.full(1001, 1 / 1001))
    with pytest.raises(SizeGuardError, match="1002001"):
        convolve(big, big)
    with pytest.raises(SizeGuardError):
        exact_mu_atomic(big, scale(big, 0.5), guard=1000)


def test_json_roundtrip():
    a = random_law(np.random.default_rng(3), 3, 5)
    text = json.dumps(a.to_json())
    assert AtomicLaw.from_json(json.loads(text)) == a
    with pytest.raises(ValidationError):
        AtomicLaw.from_json([{"point": [0.0]}])


# -- exact rectangle distance -------------------------------------------------

def test_exact_mu_examples():
    a = random_law(np.random.default_rng(4), 2, 5)
    assert exact_mu_atomic(a, a) == 0.0
    d0 = AtomicLaw.dirac([0.0])
    assert exact_mu_atomic(RAD, d0) == 0.5
    assert exact_mu_atomic(RAD.product(RAD), AtomicLaw.dirac([0.0, 0.0])) == 0.75


def test_exact_mu_matches_brute_force_on_100_instances():
    for i in range(100):
        g = rng.stream(99, 0, i)
        p = int(g.integers(1, 4))
        a = random_law(g, p, int(g.integers(1, 6)))
        b = random_law(g, p, int(g.integers(1, 6)))
        assert abs(exact_mu_atomic(a, b) - brute_mu(a, b)) <= 1e-12


@given(triples())
def test_metric_axioms(t):
    a, b, c = t
    ab, ba = exact_mu_atomic(a, b), exact_mu_atomic(b, a)
    assert abs(ab - ba) <= 1e-12
    assert exact_mu_atomic(a, c) <= ab + exact_mu_atomic(b, c) + 1e-12
    assert 0.0 <= ab <= 1.0 + 1e-12
    if a == b:
        assert ab <= 1e-12
    else:
        assert ab > 0.0


@given(laws(), st.data(), st.sampled_from([0.5, 2.0, 7.0]))
def test_homogeneity_exact(a, data, t):
    b = data.draw(laws(a.dim))
    assert exact_mu_atomic(scale(a, t), scale(b, t)) == exact_mu_atomic(a, b)


@given(triples())
def test_regularity(t):
    a, b, w = t
    assert exact_mu_atomic(convolve(a, w), convolve(b, w)) <= exact_mu_atomic(a, b) + 1e-12


# -- atomic versus Gaussian ---------------------------------------------------

def test_mixed_examples():
    m = exact_mu_atomic_vs_gaussian(AtomicLaw.dirac([0.0]), [[1.0]])
    assert m.value == pytest.approx(0.5, abs=1e-15) and m.gap_bound == 0.0
    m = exact_mu_atomic_vs_gaussian(RAD, [[1.0]])
    assert m.value == pytest.approx(float(mpmath.ncdf(1)) - 0.5, abs=1e-14)
    assert m.value == pytest.approx(0.3413, abs=1e-4)
    spike_sum = sum_law(Spike(1, 2.0, 1 / 3).atomic_law(), 2)
    assert exact_mu_atomic_vs_gaussian(spike_sum, [[2 ** (-1 / 3)]]).value >= 0.1875
    with pytest.raises(ValidationError, match="non-diagonal"):
        exact_mu_atomic_vs_gaussian(RAD.product(RAD), [[1.0, 0.5], [0.5, 1.0]])


def dense_mixed(a, sds, per_axis=2001):
    """Scan a fine grid plus points just below and at each atom coordinate."""
    axes = []
    for j, sd in enumerate(sds):
        vals = np.unique(a.points[:, j])
        extra = np.concatenate([vals, vals - 1e-9])
        axes.append(np.unique(np.concatenate([np.linspace(-8 * sd - 3, 8 * sd + 3, per_axis), extra])))
    best = 0.0
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, a.dim)
    for lo in range(0, mesh.shape[0], 4096):
        r = mesh[lo:lo + 4096]
        fa = np.all(a.points[None] <= r[:, None], axis=2) @ a.masses
        fg = np.prod([[float(mpmath.ncdf(x / s)) for x, s in zip(row, sds)] for row in r], axis=1)
        best = max(best, float(np.max(np.abs(fa - fg))))
    return best


@pytest.mark.parametrize("seed", range(4))
def test_mixed_matches_dense_scan(seed):
    g = rng.stream(5, 0, seed)
    p = 1 + seed % 2
    a = random_law(g, p, 4)
    sds = g.uniform(0.5, 2.0, p)
    exact = exact_mu_atomic_vs_gaussian(a, CovarianceSpec.diag(sds**2)).value
    scan = dense_mixed(a, sds, per_axis=801 if p == 1 else 61)
    # the scan is a lower bound that approaches the value at the atom limits
    assert scan <= exact + 1e-12
    assert exact - scan <= 1e-7


# -- pseudo-moments -----------------------------------------------------------

def test_pseudo_moment_examples():
    a = random_law(np.random.default_rng(6), 2, 4)
    assert exact_pseudo_moment(a, a, 3) == 0.0
    assert exact_pseudo_moment(AtomicLaw.dirac([1.0]), AtomicLaw.dirac([2.0]), 3) == 9.0
    b = AtomicLaw.from_pairs([((5.0, 5.0), 0.5), ((-4.0, 3.0), 0.5)])
    assert exact_pseudo_moment(a, b, 1) == pytest.approx(a.norm_moment(1) + b.norm_moment(1), abs=1e-14)


def test_pseudo_moment_vs_gaussian_examples():
    e3 = 2 * math.sqrt(2 / math.pi)
    assert float(mpmath.quad(lambda t: abs(t) ** 3 * mpmath.npdf(t), [-mpmath.inf, 0, mpmath.inf])) == \
        pytest.approx(e3, abs=1e-14)
    assert pseudo_moment_vs_gaussian(RAD, 3) == pytest.approx(1 + e3, abs=1e-12)
    assert pseudo_moment_vs_gaussian(RAD, 3) == pytest.approx(2.5958, abs=1e-4)
    assert pseudo_moment_vs_gaussian(AtomicLaw.dirac([0.0]), 3) == 0.0
    spike = Spike(1, 4.0, 1 / 3)
    expected = 2 * (1 / 8) * 4 ** (1 / 3) + 4 ** (-1 / 6) * math.sqrt(2 / math.pi)
    assert pseudo_moment_vs_gaussian(spike, 1) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(1.0301, abs=1e-4)


def test_max_abs_moment_against_mpmath():
    def oracle(sds, atom, q, order):
        def surv(t):
            g = mpmath.mpf(1)
            for s in sds:
                g *= mpmath.erf(t / (s * mpmath.sqrt(2)))
            g *= (1 - q) if t < atom else 1
            return 1 - g
        return float(mpmath.quad(lambda t: order * t ** (order - 1) * surv(t), [0, atom, mpmath.inf]))

    coords = [Normal(1.0), Normal(1.0), Normal(0.5)] + Spike(1, 9.0, 1 / 2).coords()
    for order in (1, 3):
        assert max_abs_moment(coords, order) == pytest.approx(oracle([1, 1, 0.5], 3.0, 1 / 9, order), rel=1e-9)


@given(laws(), st.data(), st.floats(-5, 5).filter(lambda c: abs(c) > 0.05))
def test_pseudo_moment_homogeneity(a, data, c):
    b = data.draw(laws(a.dim))
    lhs = exact_pseudo_moment(scale(a, c), scale(b, c), 3)
    assert lhs == pytest.approx(abs(c) ** 3 * exact_pseudo_moment(a, b, 3), rel=1e-12, abs=1e-12)


# -- smoothed distance --------------------------------------------------------

@pytest.mark.parametrize("eps", [0.1, 0.5, 2.0])
def test_smoothed_oracle_is_a_polished_sup(eps):
    g = rng.stream(8, 0)
    a, b = random_law(g, 2, 4), random_law(g, 2, 3)
    val = smoothed_mu_atomic(a, b, eps)
    assert val <= exact_mu_atomic(a, b) + 1e-12
    # independent evaluation on random corners never beats the returned sup
    r = g.uniform(-4, 4, size=(200, 2))

    def smooth_cdf(law):
        z = (r[:, None, :] - law.points[None]) / eps
        return np.prod([[[float(mpmath.ncdf(v)) for v in row] for row in blk] for blk in z], axis=2) @ law.masses

    diff = np.abs(smooth_cdf(a) - smooth_cdf(b))
    assert np.max(diff) <= val + 1e-10


def test_smoothed_p1_against_fine_scan():
    a = sum_law(RAD, 3)
    val = smoothed_mu_atomic(a, [[1.0]], 0.2)
    r = np.linspace(-6, 6, 200001)
    fa = sum(m * np.array([float(mpmath.ncdf(v)) for v in (r[::50] - x) / 0.2]) for x, m in zip(a.points[:, 0], a.masses))
    fg = np.array([float(mpmath.ncdf(v / math.sqrt(1.04))) for v in r[::50]])
    scan = float(np.max(np.abs(fa - fg)))
    assert scan <= val + 1e-12
    assert val - scan <= 1e-5
