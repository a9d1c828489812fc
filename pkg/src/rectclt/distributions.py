"""Random-vector families with seeded sampling and exact second moments.

Families (serialized ``family`` tags):

* ``gaussian``   N(0, cov)
* ``spike13``    p-1 standard normal coordinates plus one three-point
  coordinate: 0 w.p. 1 - 1/gamma, +-gamma**(1/3) w.p. 1/(2 gamma) each
* ``spike12``    same with +-gamma**(1/2)
* ``product``    independent standardized coordinates ("normal",
  "rademacher", "uniform")
* ``atomic``     a finite list of atoms (any dimension)
* ``multiplier`` xi * X with xi ~ t_4 / sqrt(2) (unit variance, heavy
  tailed) and X a vector of Rademacher coordinates

All families are centered. The multiplier law is a modelling choice: only
moment conditions motivate it, so treat it as one representative.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as rngmod
from .errors import ConfigError, ValidationError
from .matrix_core import CovarianceSpec, as_cov, factor_for_sampling
from .oracle import AtomicLaw

FAMILIES = ("gaussian", "spike13", "spike12", "product", "multiplier", "atomic")


# -- univariate coordinate laws ------------------------------------------------

class Coord:
    """A centered univariate law used as one independent coordinate."""

    name = "coord"
    atoms = None  # list of (value, mass) for purely atomic laws

    def var(self):
        raise NotImplementedError

    def draw(self, gen, count):
        raise NotImplementedError

    def draw_sum(self, gen, count, n):
        """Sum of n i.i.d. copies (not normalized)."""
        out = np.zeros(count)
        for _ in range(n):
            out += self.draw(gen, count)
        return out

    def abs_cdf(self, t):
        """P(|X| <= t) for t >= 0 (vectorized)."""
        raise NotImplementedError

    def breakpoints(self):
        return ()

    def tail_scale(self):
        """A magnitude beyond which the law has negligible mass."""
        raise NotImplementedError

    def key(self):
        """Hashable identity; equal keys mean equal laws."""
        return (self.name,) + tuple(v for k, v in sorted(vars(self).items()) if k != "atoms")


class Normal(Coord):
    name = "normal"

    def __init__(self, sd=1.0):
        self.sd = float(sd)

    def var(self):
        return self.sd ** 2

    def draw(self, gen, count):
        return self.sd * gen.standard_normal(count)

    def draw_sum(self, gen, count, n):
        return math.sqrt(n) * self.draw(gen, count)

    def abs_cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.sd == 0.0:
            return np.ones_like(t)
        return 2.0 * stats.norm.cdf(t / self.sd) - 1.0

    def breakpoints(self):
        # quadrature hints where the max of many normals concentrates
        return tuple(self.sd * k for k in (1, 2, 3, 4, 5, 6, 8, 12))

    def tail_scale(self):
        return 40.0 * self.sd


class ThreePoint(Coord):
    """0 w.p. 1 - q and +-a w.p. q/2 each."""

    name = "three_point"

    def __init__(self, a, q):
        self.a = float(a)
        self.q = float(q)
        atoms = [(-self.a, self.q / 2), (0.0, 1.0 - self.q), (self.a, self.q / 2)]
        self.atoms = [(x, m) for x, m in atoms if m > 0]

    def var(self):
        return self.q * self.a ** 2

    def draw(self, gen, count):
        u = gen.random(count)
        half = self.q / 2
        return np.where(u < half, -self.a, np.where(u < self.q, self.a, 0.0))

    def draw_sum(self, gen, count, n):
        nonzero = gen.binomial(n, self.q, size=count)
        plus = gen.binomial(nonzero, 0.5)
        return self.a * (2.0 * plus - nonzero)

    def abs_cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= self.a, 1.0, 1.0 - self.q)

    def breakpoints(self):
        return (self.a,)

    def tail_scale(self):
        return self.a


class Rademacher(ThreePoint):
    name = "rademacher"

    def __init__(self, a=1.0):
        super().__init__(a, 1.0)


class Uniform(Coord):
    """Uniform on [-sqrt(3), sqrt(3)] (unit variance)."""

    name = "uniform"

    def __init__(self):
        self.h = math.sqrt(3.0)

    def var(self):
        return 1.0

    def draw(self, gen, count):
        return gen.uniform(-self.h, self.h, count)

    def abs_cdf(self, t):
        return np.clip(np.asarray(t, dtype=float) / self.h, 0.0, 1.0)

    def breakpoints(self):
        return (self.h,)

    def tail_scale(self):
        return self.h


_COORDS = {"normal": Normal, "rademacher": Rademacher, "uniform": Uniform}


# -- distribution specs --------------------------------------------------------

class DistributionSpec:
    family = "abstract"

    @property
    def dim(self):
        raise NotImplementedError

    def exact_covariance(self):
        raise NotImplementedError

    def coords(self):
        """Independent coordinate laws, or None when coordinates are dependent."""
        return None

    def atomic_law(self):
        """The law as an AtomicLaw when it is purely atomic, else None."""
        cs = self.coords()
        if cs is None or any(c.atoms is None for c in cs):
            return None
        law = AtomicLaw.dirac(np.zeros(0))
        for c in cs:
            law = law.product(AtomicLaw.from_pairs([((x,), m) for x, m in c.atoms]))
        return law

    def singular_to_gaussian(self):
        """True when the law and any Gaussian are mutually singular."""
        cs = self.coords()
        return cs is not None and any(c.atoms is not None for c in cs)

    def magnitude(self):
        """Largest coordinate magnitude a single draw can plausibly take."""
        cs = self.coords()
        if cs is None:
            raise NotImplementedError
        return max(c.tail_scale() for c in cs)

    def draw(self, gen, count):
        cs = self.coords()
        return np.column_stack([c.draw(gen, count) for c in cs])

    def draw_sum(self, gen, count, n):
        """n**-1/2 times the sum of n independent draws, ``count`` rows."""
        cs = self.coords()
        cols = [c.draw_sum(gen, count, n) for c in cs]
        return np.column_stack(cols) / math.sqrt(n)

    def to_dict(self):
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


class Gaussian(DistributionSpec):
    family = "gaussian"

    def __init__(self, cov):
        self.cov = as_cov(cov)
        self._factor = factor_for_sampling(self.cov)

    @classmethod
    def standard(cls, p):
        return cls(CovarianceSpec.identity(p))

    @property
    def dim(self):
        return self.cov.dim

    def exact_covariance(self):
        return self.cov

    def coords(self):
        if not self.cov.is_diagonal:
            return None
        return [Normal(math.sqrt(v)) for v in self.cov.diagonal()]

    def singular_to_gaussian(self):
        return False

    def atomic_law(self):
        if np.all(self.cov.entries == 0):
            return AtomicLaw.dirac(np.zeros(self.dim))
        return None

    def magnitude(self):
        return 40.0 * math.sqrt(float(np.max(np.diag(self.cov.entries))))

    def draw(self, gen, count):
        z = gen.standard_normal((count, self.dim))
        return z @ self._factor.T

    def draw_sum(self, gen, count, n):
        return self.draw(gen, count)

    def to_dict(self):
        return {"family": "gaussian", "cov": self.cov.to_list()}


class Spike(DistributionSpec):
    """Standard normal coordinates 1..p-1 and a three-point last coordinate."""

    def __init__(self, p, gamma, exponent):
        if p < 1:
            raise ValidationError("p must be >= 1")
        if not gamma >= 1.0:
            raise ValidationError(f"gamma must be >= 1, got {gamma}")
        if exponent not in (1 / 3, 1 / 2):
            raise ValidationError("exponent must be 1/3 or 1/2")
        self.p = int(p)
        self.gamma = float(gamma)
        self.exponent = exponent
        self.family = "spike13" if exponent == 1 / 3 else "spike12"

    @property
    def dim(self):
        return self.p

    @property
    def atom(self):
        return self.gamma ** self.exponent

    def coords(self):
        return [Normal(1.0)] * (self.p - 1) + [ThreePoint(self.atom, 1.0 / self.gamma)]

    def exact_covariance(self):
        d = np.ones(self.p)
        # 2 * (1 / (2 gamma)) * gamma**(2 exponent)
        d[-1] = self.gamma ** (2 * self.exponent - 1)
        return CovarianceSpec.diag(d)

    def to_dict(self):
        return {"family": self.family, "p": self.p, "gamma": self.gamma}


class Product(DistributionSpec):
    family = "product"

    def __init__(self, names):
        names = list(names)
        if not names:
            raise ValidationError("product family needs at least one coordinate")
        unknown = [n for n in names if n not in _COORDS]
        if unknown:
            raise ConfigError(f"unknown coordinate law(s) {unknown}; known: {sorted(_COORDS)}")
        self.names = names
        self._coords = [_COORDS[n]() for n in names]

    @property
    def dim(self):
        return len(self.names)

    def coords(self):
        return list(self._coords)

    def exact_covariance(self):
        return CovarianceSpec.diag([c.var() for c in self._coords])

    def to_dict(self):
        return {"family": "product", "coords": list(self.names)}


class Multiplier(DistributionSpec):
    """xi * X: xi ~ Student t_4 scaled to unit variance, X Rademacher coordinates."""

    family = "multiplier"
    DF = 4.0

    def __init__(self, p, error_law="student_t4", base="rademacher"):
        if error_law != "student_t4" or base != "rademacher":
            raise ConfigError("multiplier family supports error_law='student_t4', base='rademacher'")
        self.p = int(p)
        self.error_law = error_law
        self.base = base

    @property
    def dim(self):
        return self.p

    def exact_covariance(self):
        return CovarianceSpec.identity(self.p)

    def singular_to_gaussian(self):
        # supported on the 2**(p-1) diagonals when p >= 2
        return self.p >= 2

    def magnitude(self):
        return 1e3

    def draw(self, gen, count):
        xi = gen.standard_t(self.DF, count) / math.sqrt(self.DF / (self.DF - 2.0))
        signs = 2.0 * gen.integers(0, 2, size=(count, self.p)) - 1.0
        return xi[:, None] * signs

    def draw_sum(self, gen, count, n):
        out = np.zeros((count, self.p))
        for _ in range(n):
            out += self.draw(gen, count)
        return out / math.sqrt(n)

    def to_dict(self):
        return {"family": "multiplier", "p": self.p, "error_law": self.error_law, "base": self.base}


class AtomicSpec(DistributionSpec):
    """Sampling wrapper around an AtomicLaw."""

    family = "atomic"

    def __init__(self, law):
        self.law = law

    @property
    def dim(self):
        return self.law.dim

    def exact_covariance(self):
        m = self.law.mean()
        return CovarianceSpec(self.law.second_moment() - np.outer(m, m), psd_rtol=1e-8)

    def atomic_law(self):
        return self.law

    def singular_to_gaussian(self):
        return True

    def magnitude(self):
        return float(np.max(np.abs(self.law.points)))

    def draw(self, gen, count):
        idx = gen.choice(self.law.size, size=count, p=self.law.masses)
        return self.law.points[idx]

    def draw_sum(self, gen, count, n):
        out = np.zeros((count, self.dim))
        for _ in range(n):
            out += self.draw(gen, count)
        return out / math.sqrt(n)

    def to_dict(self):
        return {"family": "atomic", "atoms": self.law.to_json()}


def from_dict(d, *, n=None):
    """Build a spec from its serialized form. ``gamma = "n"`` ties gamma to n."""
    if not isinstance(d, dict) or "family" not in d:
        raise ConfigError(f"distribution must be a table with a 'family' key, got {d!r}")
    fam = d["family"]
    try:
        if fam == "gaussian":
            if "cov" in d:
                return Gaussian(d["cov"])
            return Gaussian.standard(int(d["p"]))
        if fam in ("spike13", "spike12"):
            gamma = d["gamma"]
            if gamma == "n":
                if n is None:
                    raise ConfigError("gamma = 'n' needs a sample size")
                gamma = n
            return Spike(int(d.get("p", 1)), float(gamma), 1 / 3 if fam == "spike13" else 1 / 2)
        if fam == "product":
            return Product(d["coords"])
        if fam == "multiplier":
            return Multiplier(int(d["p"]), d.get("error_law", "student_t4"), d.get("base", "rademacher"))
        if fam == "atomic":
            return AtomicSpec(AtomicLaw.from_json(d["atoms"]))
    except KeyError as exc:
        raise ConfigError(f"distribution {fam!r} missing key {exc}") from None
    raise ConfigError(f"unknown distribution family {fam!r}; known: {FAMILIES}")


# -- sampling ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``data`` has one replication per row. ``n`` is the number of summands."""

    data: np.ndarray
    seed: int
    stream_id: int
    spec: DistributionSpec = field(repr=False)
    n: int = 1

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def scaled(self, t):
        return SampleBatch(self.data * t, self.seed, self.stream_id, self.spec, self.n)


_SAMPLE_TAG = rngmod.tag("sample")
_SUM_TAG = rngmod.tag("sum")


def _run_shards(fn, count, workers):
    shards = rngmod.shard_bounds(count)
    if workers > 1 and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, shards))
    else:
        parts = [fn(s) for s in shards]
    return np.concatenate(parts, axis=0)


def sample(spec, count, seed, stream_id=0, *, workers=1):
    """``count`` i.i.d. draws, reproducible for fixed (seed, stream_id, spec, count)."""
    if count < 1:
        raise ValidationError("count must be >= 1")
    if not isinstance(spec, DistributionSpec):
        raise ConfigError(f"not a distribution spec: {spec!r}")

    def shard(s):
        i, lo, hi = s
        return spec.draw(rngmod.stream(seed, stream_id, _SAMPLE_TAG, i), hi - lo)

    data = _run_shards(shard, count, workers)
    return SampleBatch(_finite(data), int(seed), int(stream_id), spec, 1)


def normalized_sum(spec, n, count, seed, stream_id=0, *, workers=1):
    """Rows are n**-1/2 * (X_1 + ... + X_n) for fresh i.i.d. X_i.

    Coordinates with a closed-form sum law (normal, three-point, Rademacher,
    Gaussian vectors) are drawn from it directly; others are summed.
    """
    if n < 1 or count < 1:
        raise ValidationError("n and count must be >= 1")
    try:
        mag = spec.magnitude() * math.sqrt(n) * math.sqrt(count)
    except OverflowError:
        mag = math.inf
    if not math.isfinite(mag):
        raise ValidationError("normalized sum would overflow: magnitude * sqrt(n * count) is not finite")

    def shard(s):
        i, lo, hi = s
        return spec.draw_sum(rngmod.stream(seed, stream_id, _SUM_TAG, n, i), hi - lo, n)

    data = _run_shards(shard, count, workers)
    return SampleBatch(_finite(data), int(seed), int(stream_id), spec, int(n))


def _finite(data):
    if not np.all(np.isfinite(data)):
        raise ValidationError("sampled data contains non-finite entries")
    return data


def exact_covariance(spec):
    return spec.exact_covariance()


def gaussian_match(spec):
    """The centered Gaussian with the same covariance as ``spec``."""
    if isinstance(spec, Gaussian):
        return spec
    return Gaussian(spec.exact_covariance())


def spike_zero_probability(n, gamma):
    """P(sum of n spike coordinates == 0), exactly.

    The sum vanishes iff an even number k of draws are nonzero and exactly
    k/2 of those are positive.
    """
    if n < 1 or not gamma >= 1.0:
        raise ValidationError("need n >= 1 and gamma >= 1")
    k = np.arange(0, n + 1, 2)
    nonzero = stats.binom.pmf(k, n, 1.0 / gamma)
    balanced = stats.binom.pmf(k // 2, k, 0.5)
    return float(np.sum(nonzero * balanced))
