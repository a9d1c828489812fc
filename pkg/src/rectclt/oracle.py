"""Exact computations for small atomic laws.

The rectangle distance between two atomic laws is a max over the tensor grid
of pooled coordinate values: both CDFs are constant on every half-open grid
cell, and each cell takes the value at its lower-left corner. Against a
Gaussian with diagonal covariance the atomic CDF is still constant on cells
while the Gaussian CDF is coordinate-wise increasing, so the sup over a cell
sits at its lower corner or at the limit at its upper corner. Both
evaluations are finite and exact.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .errors import SizeGuardError, ValidationError

MERGE_TOL = 1e-12
MASS_TOL = 1e-12
ATOM_GUARD = 10**6
GRID_GUARD = 10**8


def _snap_columns(points, tol=MERGE_TOL):
    """Replace coordinate values within ``tol`` of a smaller neighbour by it."""
    out = np.array(points, dtype=np.float64, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        order = np.argsort(col, kind="stable")
        s = col[order]
        if s.size < 2:
            continue
        new_cluster = np.concatenate(([True], np.diff(s) > tol))
        reps = s[new_cluster][np.cumsum(new_cluster) - 1]
        col[order] = reps
    return out


@dataclass(frozen=True, eq=False)
class AtomicLaw:
    """Finitely many atoms (rows of ``points``) with positive ``masses``.

    Construction merges points that agree coordinate-wise within 1e-12,
    drops zero masses, and sorts atoms lexicographically.
    """

    points: np.ndarray
    masses: np.ndarray = field(repr=False)

    def __init__(self, points, masses, *, guard=ATOM_GUARD):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        m = np.asarray(masses, dtype=np.float64).ravel()
        if pts.shape[0] != m.shape[0]:
            raise ValidationError(f"{pts.shape[0]} points but {m.shape[0]} masses")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(m))):
            raise ValidationError("atoms must be finite")
        if np.any(m < 0):
            raise ValidationError("masses must be nonnegative")
        keep = m > 0
        pts, m = pts[keep], m[keep]
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise ValidationError(f"masses sum to {m.sum()!r}, not 1")
        if pts.shape[1] > 0 and pts.shape[0] > 1:
            pts = _snap_columns(pts)
            uniq, inv = np.unique(pts, axis=0, return_inverse=True)
            m = np.bincount(inv.ravel(), weights=m, minlength=uniq.shape[0])
            pts = uniq
        elif pts.shape[1] == 0:
            pts, m = np.zeros((1, 0)), np.array([m.sum()])
        if pts.shape[0] > guard:
            raise SizeGuardError("atom count", pts.shape[0], guard)
        pts.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", m)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    @classmethod
    def dirac(cls, point):
        point = np.atleast_1d(np.asarray(point, dtype=np.float64))
        return cls(point[None, :], [1.0])

    @classmethod
    def from_pairs(cls, pairs):
        pts = [np.atleast_1d(np.asarray(x, dtype=np.float64)) for x, _ in pairs]
        return cls(np.vstack(pts), [m for _, m in pairs])

    @classmethod
    def rademacher(cls, p=1):
        law = cls.from_pairs([((-1.0,), 0.5), ((1.0,), 0.5)])
        out = cls.dirac(np.zeros(0))
        for _ in range(p):
            out = out.product(law)
        return out

    def product(self, other):
        """Law of the concatenated independent pair (X, X')."""
        i, j = np.meshgrid(np.arange(self.size), np.arange(other.size), indexing="ij")
        i, j = i.ravel(), j.ravel()
        pts = np.hstack([self.points[i], other.points[j]])
        return AtomicLaw(pts, self.masses[i] * other.masses[j])

    def mean(self):
        return self.masses @ self.points

    def second_moment(self):
        return (self.points * self.masses[:, None]).T @ self.points

    def norm_moment(self, order):
        """E ||X||_inf ** order."""
        if self.dim == 0:
            return 0.0
        return float(self.masses @ (np.max(np.abs(self.points), axis=1) ** order))

    def cdf(self, r, strict=False):
        r = np.asarray(r, dtype=np.float64)
        inside = np.all(self.points < r if strict else self.points <= r, axis=1)
        return float(self.masses[inside].sum())

    def to_json(self):
        return [{"point": p.tolist(), "mass": float(m)} for p, m in zip(self.points, self.masses)]

    @classmethod
    def from_json(cls, items):
        if not isinstance(items, list) or not items:
            raise ValidationError("atomic law JSON must be a nonempty list of {point, mass}")
        try:
            return cls.from_pairs([(it["point"], float(it["mass"])) for it in items])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad atom entry: {exc}") from None

    def __eq__(self, other):
        return (
            isinstance(other, AtomicLaw)
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.masses, other.masses)
        )

    __hash__ = None


def _same_dim(a, b):
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")


def convolve(a, b, *, guard=ATOM_GUARD):
    """Law of X + X' for independent X ~ a, X' ~ b."""
    _same_dim(a, b)
    count = a.size * b.size
    if count > guard:
        raise SizeGuardError("convolution atom count", count, guard)
    pts = (a.points[:, None, :] + b.points[None, :, :]).reshape(-1, a.dim)
    ms = np.outer(a.masses, b.masses).ravel()
    return AtomicLaw(pts, ms, guard=guard)


def scale(a, t):
    """Law of t * X."""
    t = float(t)
    if t == 0.0:
        raise ValidationError("scale factor must be nonzero")
    return AtomicLaw(a.points * t, a.masses)


def _lattice(a):
    """(origin, step, integer offsets) when a 1-d law lives on a lattice."""
    x = a.points[:, 0]
    if x.size == 1:
        return x[0], 1.0, np.zeros(1, dtype=np.int64)
    step = float(np.min(np.diff(x)))
    k = (x - x[0]) / step
    ki = np.rint(k)
    if np.max(np.abs(k - ki)) > 1e-9:
        return None
    return x[0], step, ki.astype(np.int64)


def sum_law(a, n, *, normalize=True, guard=ATOM_GUARD):
    """Law of n**-1/2 (X_1 + ... + X_n) (or the plain sum) for X_i ~ a i.i.d.

    One-dimensional lattice laws use repeated squaring of the mass vector;
    everything else repeats ``convolve`` under the atom guard.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    lat = _lattice(a) if a.dim == 1 else None
    if lat is not None:
        x0, step, k = lat
        base = np.zeros(int(k[-1]) + 1)
        base[k] = a.masses
        acc, power, m = np.array([1.0]), base, n
        while m:
            if m & 1:
                acc = np.convolve(acc, power)
            m >>= 1
            if m:
                power = np.convolve(power, power)
        support = n * x0 + step * np.arange(acc.size)
        keep = acc > 0
        out = AtomicLaw(support[keep, None], acc[keep] / acc[keep].sum(), guard=guard)
    else:
        out = a
        for _ in range(n - 1):
            out = convolve(out, a, guard=guard)
    return scale(out, 1.0 / math.sqrt(n)) if normalize else out


# -- rectangle distance --------------------------------------------------------

def _pooled_axes(points_list):
    """Snap pooled coordinates jointly; return axes and per-law grid indices."""
    sizes = [p.shape[0] for p in points_list]
    pooled = _snap_columns(np.vstack(points_list))
    axes, idx = [], []
    for j in range(pooled.shape[1]):
        ax, inv = np.unique(pooled[:, j], return_inverse=True)
        axes.append(ax)
        idx.append(inv.ravel())
    idx = np.array(idx).T if idx else np.zeros((pooled.shape[0], 0), dtype=np.int64)
    parts, start = [], 0
    for s in sizes:
        parts.append(idx[start:start + s])
        start += s
    return axes, parts


def _grid_size(axes, extra=0):
    size = 1
    for ax in axes:
        size *= len(ax) + extra
    return size


def _cumulate(hist):
    for ax in range(hist.ndim):
        np.cumsum(hist, axis=ax, out=hist)
    return hist


def cdf_difference_grid(a, b, *, guard=GRID_GUARD):
    """(axes, F_a - F_b evaluated at every point of the pooled tensor grid)."""
    _same_dim(a, b)
    axes, (ia, ib) = _pooled_axes([a.points, b.points])
    size = _grid_size(axes)
    if size > guard:
        raise SizeGuardError("candidate grid size", size, guard)
    hist = np.zeros(tuple(len(ax) for ax in axes))
    np.add.at(hist, tuple(ia.T), a.masses)
    np.add.at(hist, tuple(ib.T), -b.masses)
    return axes, _cumulate(hist)


def exact_mu_atomic(a, b, *, guard=GRID_GUARD):
    """sup_r |P_a(X <= r) - P_b(X <= r)| for atomic a, b (exact)."""
    _, diff = cdf_difference_grid(a, b, guard=guard)
    return float(np.max(np.abs(diff)))


def _gauss_cdf_axis(values, sd, upper):
    if sd > 0:
        return special.ndtr(values / sd)
    # degenerate coordinate: step at 0; upper corners are left limits
    return (values > 0).astype(float) if upper else (values >= 0).astype(float)


@dataclass(frozen=True)
class MixedMu:
    value: float
    gap_bound: float


def exact_mu_atomic_vs_gaussian(a, cov, *, guard=GRID_GUARD):
    """sup_r |P_a(X <= r) - P(N(0, cov) <= r)| for diagonal cov.

    Returns MixedMu(value, gap_bound). Cells are evaluated at both extremes,
    so the value is exact and gap_bound is 0.
    """
    from .matrix_core import as_cov

    cov = as_cov(cov)
    if cov.dim != a.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {cov.dim}")
    if not cov.is_diagonal:
        raise ValidationError("unsupported: non-diagonal covariance (use the Monte Carlo estimator)")
    sds = np.sqrt(cov.diagonal())
    axes, (ia,) = _pooled_axes([a.points])
    size = _grid_size(axes, extra=1)
    if size > guard:
        raise SizeGuardError("candidate grid size", size, guard)
    # index 0 is the cell below every atom in that coordinate
    hist = np.zeros(tuple(len(ax) + 1 for ax in axes))
    np.add.at(hist, tuple((ia + 1).T), a.masses)
    f_atomic = _cumulate(hist)
    lo = np.ones(())
    hi = np.ones(())
    for ax, sd in zip(axes, sds):
        lower = np.concatenate(([0.0], _gauss_cdf_axis(ax, sd, upper=False)))
        upper = np.concatenate((_gauss_cdf_axis(ax, sd, upper=True), [1.0]))
        lo = np.multiply.outer(lo, lower)
        hi = np.multiply.outer(hi, upper)
    value = max(float(np.max(np.abs(f_atomic - lo))), float(np.max(np.abs(f_atomic - hi))))
    return MixedMu(value, 0.0)


# -- pseudo-moments ------------------------------------------------------------

def exact_pseudo_moment(a, b, order):
    """Integral of ||x||_inf**order against |P_a - P_b|."""
    _same_dim(a, b)
    if order not in (1, 3):
        raise ValidationError("order must be 1 or 3")
    pooled = _snap_columns(np.vstack([a.points, b.points]))
    uniq, inv = np.unique(pooled, axis=0, return_inverse=True)
    inv = inv.ravel()
    signed = np.bincount(inv, weights=np.concatenate([a.masses, -b.masses]), minlength=uniq.shape[0])
    norms = np.max(np.abs(uniq), axis=1) if uniq.shape[1] else np.zeros(uniq.shape[0])
    return float(np.abs(signed) @ norms**order)


def gaussian_abs_moment(sd, order):
    """E|N(0, sd^2)|**order."""
    return sd**order * 2 ** (order / 2) * math.gamma((order + 1) / 2) / math.sqrt(math.pi)


def max_abs_moment(coords, order):
    """E max_j |X_j|**order for independent coordinates, by 1-d quadrature.

    Uses E M^k = integral over t > 0 of k t^(k-1) P(M > t), with
    P(M <= t) = prod_j P(|X_j| <= t); atoms enter as breakpoints.
    """
    groups = {}
    for c in coords:
        groups.setdefault(c.key(), [c, 0])[1] += 1
    if not groups:
        return 0.0
    top = max(c.tail_scale() for c, _ in groups.values())
    if top == 0.0:
        return 0.0
    brk = sorted({0.0, top, *[b for c, _ in groups.values() for b in c.breakpoints() if 0 < b < top]})

    def surv(t):
        g = 1.0
        for c, k in groups.values():
            g *= float(c.abs_cdf(t)) ** k
        return 1.0 - g

    total = 0.0
    for lo, hi in zip(brk[:-1], brk[1:]):
        val, _ = integrate.quad(lambda t: order * t ** (order - 1) * surv(t), lo, hi,
                                limit=400, epsabs=1e-11, epsrel=1e-10)
        total += val
    return total


def pseudo_moment_vs_gaussian(spec, order):
    """Exact pseudo-moment between a law and its matched Gaussian.

    ``spec`` is an AtomicLaw or a distribution spec that is mutually singular
    with Gaussians and has independent coordinates; then the pseudo-moment is
    E||X||**order + E||Y||**order. A degenerate matched Gaussian is delta_0.
    """
    if isinstance(spec, AtomicLaw):
        law, cov = spec, spec.second_moment() - np.outer(spec.mean(), spec.mean())
        x_term = law.norm_moment(order)
        x_coords = None
    else:
        law = spec.atomic_law()
        cov = spec.exact_covariance().entries
        x_coords = spec.coords()
        if law is None and not spec.singular_to_gaussian():
            raise ValidationError("law is not mutually singular with its Gaussian match; use pseudo_moment_hat")
        if law is not None:
            x_term = law.norm_moment(order)
        elif x_coords is not None:
            x_term = max_abs_moment(x_coords, order)
        else:
            raise ValidationError("no exact route for E||X||; use pseudo_moment_hat")
    if order not in (1, 3):
        raise ValidationError("order must be 1 or 3")
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        dirac = AtomicLaw.dirac(np.zeros(cov.shape[0]))
        if law is not None:
            return exact_pseudo_moment(law, dirac, order)
        return x_term
    if np.any(cov - np.diag(np.diag(cov))):
        raise ValidationError("matched Gaussian is not diagonal; use pseudo_moment_hat")
    from .distributions import Normal

    sds = np.sqrt(np.clip(np.diag(cov), 0, None))
    if sds.size == 1:
        y_term = gaussian_abs_moment(float(sds[0]), order)
    else:
        y_term = max_abs_moment([Normal(s) for s in sds], order)
    return x_term + y_term


# -- Gaussian-smoothed distances ----------------------------------------------

def _smoothed_diff(a, b_law, b_sds, eps):
    """Callable r -> P(U + eps Z <= r) - P(V + eps Z <= r) on arrays of r."""

    def f(r):
        r = np.atleast_2d(r)
        za = (r[:, None, :] - a.points[None, :, :]) / eps
        fa = np.prod(special.ndtr(za), axis=2) @ a.masses
        if b_law is not None:
            zb = (r[:, None, :] - b_law.points[None, :, :]) / eps
            fb = np.prod(special.ndtr(zb), axis=2) @ b_law.masses
        else:
            fb = np.prod(special.ndtr(r / np.sqrt(b_sds**2 + eps**2)), axis=1)
        return fa - fb

    return f


def smoothed_mu_atomic(a, b, eps, *, grid_points=None):
    """sup_r |P(U + eps Z <= r) - P(V + eps Z <= r)|, U ~ a atomic.

    ``b`` is an AtomicLaw or a diagonal covariance (V Gaussian). The
    difference is smooth in r; it is scanned on a tensor grid and the best
    grid points are polished with Nelder-Mead, giving ~1e-10 accuracy for
    p <= 3.
    """
    from .matrix_core import CovarianceSpec, as_cov

    if eps <= 0:
        raise ValidationError("eps must be positive")
    p = a.dim
    if isinstance(b, AtomicLaw):
        _same_dim(a, b)
        b_law, b_sds = b, None
        spread = np.vstack([a.points, b.points])
        lo, hi = spread.min(axis=0), spread.max(axis=0)
    else:
        cov = as_cov(b) if not isinstance(b, CovarianceSpec) else b
        if not cov.is_diagonal:
            raise ValidationError("smoothed oracle needs a diagonal Gaussian")
        b_law, b_sds = None, np.sqrt(cov.diagonal())
        lo = np.minimum(a.points.min(axis=0), -6 * b_sds)
        hi = np.maximum(a.points.max(axis=0), 6 * b_sds)
    lo = lo - 6 * eps
    hi = hi + 6 * eps
    f = _smoothed_diff(a, b_law, b_sds, eps)
    if grid_points is None:
        grid_points = {1: 4001, 2: 161, 3: 41}.get(p, 13)
    axes = [np.linspace(l, h, grid_points) for l, h in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p)
    vals = np.concatenate([f(mesh[i:i + 20000]) for i in range(0, mesh.shape[0], 20000)])
    best = float(np.max(np.abs(vals)))
    for i in np.argsort(-np.abs(vals))[:8]:
        sign = 1.0 if vals[i] >= 0 else -1.0
        res = optimize.minimize(lambda r: -sign * f(r)[0], mesh[i], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        best = max(best, float(abs(f(res.x)[0])))
    return best
