import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rectclt.distributions import (AtomicSpec, Gaussian, Multiplier, Product, Spike, from_dict,
                                   gaussian_match, normalized_sum, sample, spike_zero_probability)
from rectclt.errors import ConfigError, NotPSDError, ValidationError
from rectclt.oracle import AtomicLaw

FAMILY_CASES = [
    Gaussian([[1.0, 0.5], [0.5, 2.0]]),
    Spike(3, 2.0, 1 / 2),
    Spike(2, 8.0, 1 / 3),
    Product(["normal", "rademacher", "uniform"]),
    Multiplier(2),
    AtomicSpec(AtomicLaw.from_pairs([((-1.0, 0.0), 0.25), ((1.0, 2.0), 0.25), ((0.0, -1.0), 0.5)])),
]


def test_sample_shape_and_finite():
    b = sample(Gaussian.standard(2), 4, seed=1)
    assert b.data.shape == (4, 2) and np.all(np.isfinite(b.data))


def test_spike_zero_atom_frequency_p1():
    b = sample(Spike(1, 4.0, 1 / 3), 10**6, seed=3)
    frac = np.mean(b.data[:, 0] == 0.0)
    se = math.sqrt(0.75 * 0.25 / 10**6)
    assert abs(frac - 0.75) <= 3 * se


def test_spike12_last_coordinate_unit_variance():
    b = sample(Spike(3, 2.0, 1 / 2), 10**6, seed=4)
    x2 = b.data[:, 2] ** 2
    assert abs(x2.mean() - 1.0) <= 3 * x2.std() / math.sqrt(x2.size)


def test_exact_covariance_examples():
    c = Spike(2, 8.0, 1 / 3).exact_covariance()
    assert np.allclose(c.entries, np.diag([1.0, 0.5]), rtol=1e-14)
    assert np.allclose(Spike(2, 5.0, 1 / 2).exact_covariance().entries, np.eye(2), rtol=1e-14)
    cov = [[1.0, 0.2], [0.2, 3.0]]
    assert np.array_equal(Gaussian(cov).exact_covariance().entries, cov)


def test_gaussian_match_examples():
    assert np.allclose(gaussian_match(Spike(4, 9.0, 1 / 2)).cov.entries, np.eye(4), rtol=1e-14)
    g = Gaussian.standard(2)
    assert gaussian_match(g) is g
    m = gaussian_match(Spike(1, 4.0, 1 / 3))
    assert m.cov.entries[0, 0] == pytest.approx(4 ** (-1 / 3), rel=1e-14)


@pytest.mark.parametrize("spec", FAMILY_CASES, ids=lambda s: s.family)
def test_mean_and_covariance_within_5_se(spec):
    x = sample(spec, 10**6, seed=9).data
    r = x.shape[0]
    assert np.all(np.abs(x.mean(axis=0)) <= 5 * x.std(axis=0) / math.sqrt(r))
    prods = x[:, :, None] * x[:, None, :]
    se = prods.std(axis=0) / math.sqrt(r)
    assert np.all(np.abs(prods.mean(axis=0) - spec.exact_covariance().entries) <= 5 * se + 1e-15)


@pytest.mark.parametrize("gamma", [2.0, 5.0, 30.0])
def test_spike_zero_frequency_within_5_se(gamma):
    x = sample(Spike(2, gamma, 1 / 3), 10**6, seed=2).data[:, -1]
    q = 1 - 1 / gamma
    assert abs(np.mean(x == 0.0) - q) <= 5 * math.sqrt(q * (1 - q) / x.size)


def test_reproducible_and_worker_invariant():
    spec = Spike(3, 4.0, 1 / 2)
    a = sample(spec, 100_000, seed=5, stream_id=2)
    b = sample(spec, 100_000, seed=5, stream_id=2, workers=4)
    c = sample(spec, 100_000, seed=5, stream_id=3)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    s1 = normalized_sum(spec, 7, 70_000, seed=5, stream_id=1)
    s4 = normalized_sum(spec, 7, 70_000, seed=5, stream_id=1, workers=4)
    assert np.array_equal(s1.data, s4.data)


def test_normalized_sum_n1_same_law_as_sample():
    spec = Product(["rademacher", "normal"])
    s = normalized_sum(spec, 1, 200_000, seed=1).data
    x = sample(spec, 200_000, seed=2).data
    assert set(np.unique(s[:, 0])) == {-1.0, 1.0}
    for j in range(2):
        assert abs(np.mean(s[:, j] ** 2) - np.mean(x[:, j] ** 2)) < 0.02


def test_normalized_sum_gaussian_stays_gaussian():
    s = normalized_sum(Gaussian.standard(1), 37, 10**6, seed=3).data[:, 0]
    assert abs(np.mean(s**4) - 3.0) <= 5 * np.std(s**4) / math.sqrt(s.size)


def test_spike_n2_support():
    a = 2 ** (1 / 3)
    # enumerate the 9 outcome pairs of two draws from {-a, 0, a}
    support = {round((x + y) / math.sqrt(2), 12) for x, y in itertools.product([-a, 0.0, a], repeat=2)}
    s = normalized_sum(Spike(1, 2.0, 1 / 3), 2, 100_000, seed=8).data[:, 0]
    assert {round(v, 12) for v in np.unique(s)} <= support


def test_normalized_sum_associativity_by_moments():
    # n = 4 * 3 directly versus summing 3 independent n = 4 blocks
    spec = Spike(1, 3.0, 1 / 2)
    rows = 400_000
    direct = normalized_sum(spec, 12, rows, seed=1).data[:, 0]
    blocks = sum(normalized_sum(spec, 4, rows, seed=2, stream_id=k).data[:, 0] for k in range(3))
    blocks = blocks / math.sqrt(3)
    for f in (lambda x: x**2, lambda x: x**4, np.abs):
        a, b = f(direct), f(blocks)
        se = math.hypot(a.std(), b.std()) / math.sqrt(rows)
        assert abs(a.mean() - b.mean()) <= 5 * se


def test_normalized_sum_overflow_guard():
    with pytest.raises(ValidationError, match="overflow"):
        normalized_sum(Spike(1, math.inf, 1 / 2), 10, 10, seed=0)


def test_spike_zero_probability_examples():
    # enumerate 9 outcomes for n = 2, gamma = 2: both zero or one +a and one -a
    assert spike_zero_probability(2, 2.0) == pytest.approx(0.25 + 2 * (1 / 16), abs=1e-15)
    assert spike_zero_probability(1, 10.0) == pytest.approx(0.9, abs=1e-15)
    assert spike_zero_probability(10, 10.0) >= 0.9**10


def brute_zero_probability(n, gamma):
    q = 1 / gamma
    law = {-1: q / 2, 0: 1 - q, 1: q / 2}
    total = 0.0
    for draws in itertools.product(law, repeat=n):
        if sum(draws) == 0:
            total += math.prod(law[d] for d in draws)
    return total


@pytest.mark.parametrize("n,gamma", [(3, 2.0), (4, 3.5), (6, 10.0), (7, 1.5)])
def test_spike_zero_probability_enumeration(n, gamma):
    assert spike_zero_probability(n, gamma) == pytest.approx(brute_zero_probability(n, gamma), abs=1e-13)


@given(st.integers(1, 400), st.floats(1.0, 1e4))
def test_spike_zero_probability_lower_bound(n, gamma):
    assert spike_zero_probability(n, gamma) >= (1 - 1 / gamma) ** n - 1e-13


def test_from_dict_roundtrip_and_errors():
    for spec in FAMILY_CASES:
        again = from_dict(spec.to_dict())
        assert again.to_dict() == spec.to_dict()
    assert from_dict({"family": "spike13", "p": 2, "gamma": "n"}, n=16).gamma == 16.0
    with pytest.raises(ConfigError, match="unknown distribution family"):
        from_dict({"family": "cauchy"})
    with pytest.raises(ConfigError):
        from_dict({"family": "spike12", "p": 2})
    with pytest.raises(NotPSDError):
        sample(Gaussian([[1.0, 2.0], [2.0, 1.0]]), 10, seed=0)
    with pytest.raises(ConfigError):
        sample("gaussian", 10, seed=0)
