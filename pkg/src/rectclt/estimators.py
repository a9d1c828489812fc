"""Monte Carlo estimators: rectangle distance, smoothed distance, a lower
bound on the third-order ideal metric via trigonometric test functions,
pseudo-moments, and log-log rate fits.

Sup-type estimates are lower bounds on the true sup over all r, up to the
bias of the candidate corner family. Uncertainty comes from a multinomial
bootstrap (200 resamples, simultaneous band over corners) or a
Hoeffding-union fallback.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from . import rng as rngmod
from .distributions import Gaussian, SampleBatch, gaussian_match, sample
from .errors import SizeGuardError, ValidationError
from .oracle import max_abs_moment

METHODS = ("empirical_sup", "plugin_moment", "test_function_sup")
GRID_GUARD = 10**6
DENSE_GRID_GUARD = 1 << 23
POINT_CORNER_CAP = 4096
BOOT_TOP = 128
BLOCK = 1 << 15
_BOOT_TAG = rngmod.tag("boot")


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    std_error: float
    replications: int
    ci_low: float
    ci_high: float
    method: str
    note: str = ""
    corner: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")

    def contains(self, x):
        return self.ci_low <= x <= self.ci_high

    def to_dict(self):
        d = {
            "value": self.value,
            "se": self.std_error,
            "ci": [self.ci_low, self.ci_high],
            "method": self.method,
            "replications": self.replications,
        }
        if self.note:
            d["note"] = self.note
        return d


# -- corner families -----------------------------------------------------------

@dataclass(frozen=True)
class Corners:
    """Materialized corners: a tensor grid (``axes``) or an explicit list."""

    axes: tuple = None
    points: np.ndarray = None
    note: str = ""

    @property
    def is_grid(self):
        return self.axes is not None

    @property
    def count(self):
        if self.is_grid:
            return math.prod(len(a) for a in self.axes)
        return self.points.shape[0]

    def as_points(self):
        if not self.is_grid:
            return self.points
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _canonical(points):
    points = np.asarray(points, dtype=np.float64)
    order = np.lexsort(points.T[::-1])
    return np.ascontiguousarray(points[order])


def _thin(points, cap):
    if points.shape[0] <= cap:
        return points
    idx = np.unique(np.linspace(0, points.shape[0] - 1, cap).round().astype(np.int64))
    return points[idx]


def ks_by_axis(u, v):
    """Two-sample Kolmogorov-Smirnov statistic of each coordinate."""
    out = np.empty(u.shape[1])
    for j in range(u.shape[1]):
        a, b = np.sort(u[:, j]), np.sort(v[:, j])
        grid = np.concatenate([a, b])
        fa = np.searchsorted(a, grid, side="right") / a.size
        fb = np.searchsorted(b, grid, side="right") / b.size
        out[j] = np.max(np.abs(fa - fb))
    return out


class RectangleFamily:
    """Candidate corners r for the sup over {x <= r}.

    * ``pooled_corners``: pooled sample values. Used as a full tensor grid of
      distinct coordinate values when that grid is small (exact for the
      empirical laws), otherwise the pooled points themselves, thinned to
      ``max_corners``.
    * ``quantile_grid(k)``: per-axis pooled quantiles at levels j/k on the
      ``axis_cap`` axes with the largest marginal KS discrepancy (fewer if
      k**axes would exceed 1e6); other axes are left unconstrained.
    * ``fixed(corners)``: an explicit list.
    """

    def __init__(self, strategy, *, k=None, axis_cap=6, corners=None, max_corners=POINT_CORNER_CAP):
        if strategy not in ("pooled_corners", "quantile_grid", "fixed"):
            raise ValidationError(f"unknown corner strategy {strategy!r}")
        self.strategy = strategy
        self.k = k
        self.axis_cap = axis_cap
        self.max_corners = max_corners
        self.corners = None
        if strategy == "quantile_grid" and (k is None or k < 1):
            raise ValidationError("quantile_grid needs k >= 1")
        if strategy == "fixed":
            c = np.atleast_2d(np.asarray(corners, dtype=np.float64))
            if c.size == 0:
                raise ValidationError("empty rectangle family")
            self.corners = _canonical(c)

    @classmethod
    def pooled_corners(cls, max_corners=POINT_CORNER_CAP):
        return cls("pooled_corners", max_corners=max_corners)

    @classmethod
    def quantile_grid(cls, k, axis_cap=6):
        return cls("quantile_grid", k=k, axis_cap=axis_cap)

    @classmethod
    def fixed(cls, corners):
        return cls("fixed", corners=corners)

    @classmethod
    def from_dict(cls, d):
        s = d.get("strategy")
        if s == "pooled_corners":
            return cls.pooled_corners(int(d.get("max_corners", POINT_CORNER_CAP)))
        if s == "quantile_grid":
            return cls.quantile_grid(int(d["k"]), int(d.get("axis_cap", 6)))
        if s == "fixed":
            return cls.fixed(d["corners"])
        raise ValidationError(f"unknown corner strategy {s!r}")

    def scaled(self, t):
        if self.strategy == "fixed":
            return RectangleFamily.fixed(self.corners * t)
        return self

    def to_dict(self):
        d = {"strategy": self.strategy}
        if self.strategy == "quantile_grid":
            d.update(k=self.k, axis_cap=self.axis_cap)
        if self.strategy == "fixed":
            d["corners"] = self.corners.tolist()
        return d

    def materialize(self, u, v, *, point_cap=None):
        """Corners for data ``u``, ``v`` (arrays with rows as draws)."""
        cap = self.max_corners if point_cap is None else point_cap
        if self.strategy == "fixed":
            if self.corners.shape[1] != u.shape[1]:
                raise ValidationError("corner dimension does not match the data")
            return Corners(points=self.corners)
        pooled = np.vstack([u, v])
        if self.strategy == "pooled_corners":
            axes = tuple(np.unique(pooled[:, j]) for j in range(pooled.shape[1]))
            size = math.prod(len(a) for a in axes)
            if size <= DENSE_GRID_GUARD:
                return Corners(axes=axes)
            pts = _canonical(np.unique(pooled, axis=0))
            note = ""
            if pts.shape[0] > cap:
                note = f"pooled corners thinned from {pts.shape[0]} to {cap}"
                pts = _thin(pts, cap)
            return Corners(points=pts, note=note)
        levels = np.arange(1, self.k + 1) / self.k
        p = pooled.shape[1]
        disc = ks_by_axis(u, v)
        order = sorted(range(p), key=lambda j: (-disc[j], j))
        a = min(p, self.axis_cap)
        while a > 1 and self.k**a > GRID_GUARD:
            a -= 1
        chosen = set(order[:a])
        axes = []
        for j in range(p):
            if j in chosen:
                axes.append(np.unique(np.quantile(pooled[:, j], levels, method="inverted_cdf")))
            else:
                axes.append(np.array([np.inf]))
        return Corners(axes=tuple(axes))


# -- evaluation ----------------------------------------------------------------

def _cells(data, axes):
    """Flat cell index of each row (first corner dominating it), -1 if none."""
    shape = tuple(len(a) for a in axes)
    idx = [np.searchsorted(ax, data[:, j], side="left") for j, ax in enumerate(axes)]
    inside = np.ones(data.shape[0], dtype=bool)
    for i, s in zip(idx, shape):
        inside &= i < s
    flat = np.full(data.shape[0], -1, dtype=np.int64)
    flat[inside] = np.ravel_multi_index(tuple(i[inside] for i in idx), shape)
    return flat, shape


def _cumulate(hist):
    for ax in range(hist.ndim):
        np.cumsum(hist, axis=ax, out=hist)
    return hist


def _grid_cdf(counts, shape, total):
    return _cumulate(counts.reshape(shape).astype(np.float64)) / total


def _boot_gen(batch, b):
    return rngmod.stream(batch.seed, batch.stream_id, _BOOT_TAG, batch.n, b)


def _resample_counts(batch, b):
    """Multiplicity of each row in bootstrap resample ``b`` of ``batch``."""
    idx = _boot_gen(batch, b).integers(0, batch.rows, size=batch.rows)
    return np.bincount(idx, minlength=batch.rows)


def _band_interval(value, dev, alpha, upper=1.0):
    """value -+ the (1 - alpha) quantile of the bootstrap sup deviation.

    Since |max|D_hat| - max|D|| <= max|D_hat - D|, a simultaneous band for the
    corner differences gives an interval for their sup that stays valid when
    several corners nearly tie.
    """
    c = float(np.quantile(dev, 1 - alpha))
    return max(value - c, 0.0), min(value + c, upper)


def _check_pair(u, v, min_rows):
    for b in (u, v):
        if not isinstance(b, SampleBatch):
            raise ValidationError("expected SampleBatch inputs")
    if u.dim != v.dim:
        raise ValidationError(f"dimension mismatch: {u.dim} vs {v.dim}")
    if min(u.rows, v.rows) < min_rows:
        raise ValidationError(f"need at least {min_rows} rows per sample")


class _GridEval:
    def __init__(self, u, v, axes):
        self.axes = axes
        self.cu, self.shape = _cells(u.data, axes)
        self.cv, _ = _cells(v.data, axes)
        self.nu, self.nv = u.rows, v.rows
        size = math.prod(self.shape)
        hu = np.bincount(self.cu[self.cu >= 0], minlength=size)
        hv = np.bincount(self.cv[self.cv >= 0], minlength=size)
        self.diff = _grid_cdf(hu, self.shape, self.nu) - _grid_cdf(hv, self.shape, self.nv)

    def value(self):
        flat = np.abs(self.diff).ravel()
        k = int(np.argmax(flat))
        corner = tuple(float(ax[i]) for ax, i in zip(self.axes, np.unravel_index(k, self.shape)))
        return float(flat[k]), corner

    def bootstrap(self, u, v, resamples):
        size = math.prod(self.shape)
        occ_u, cnt_u = np.unique(self.cu, return_counts=True)
        occ_v, cnt_v = np.unique(self.cv, return_counts=True)
        stat, dev = np.empty(resamples), np.empty(resamples)
        for b in range(resamples):
            # slot 0 collects rows outside the grid
            hist = (self._resampled_hist(u, b, self.cu, occ_u, cnt_u, size) / self.nu
                    - self._resampled_hist(v, b, self.cv, occ_v, cnt_v, size) / self.nv)
            d = _cumulate(hist[1:].reshape(self.shape))
            stat[b] = np.max(np.abs(d))
            dev[b] = np.max(np.abs(d - self.diff))
        return stat, dev

    @staticmethod
    def _resampled_hist(batch, b, cells, occ, cnt, size):
        gen = _boot_gen(batch, b)
        # a multinomial draw costs O(occupied cells), row resampling O(rows)
        if 8 * occ.size <= batch.rows:
            return np.bincount(occ + 1, weights=gen.multinomial(batch.rows, cnt / batch.rows),
                               minlength=size + 1)
        idx = gen.integers(0, batch.rows, size=batch.rows)
        return np.bincount(cells[idx] + 1, minlength=size + 1).astype(np.float64)


class _ListEval:
    """Corner list evaluated with a weighted kernel (indicator or smoothed).

    Repeated rows (atomic data) are collapsed to distinct rows with counts.
    """

    def __init__(self, u, v, corners, sums, matrix):
        self.corners = corners
        self.matrix = matrix
        self.parts = [self._compress(b) for b in (u, v)]
        fu, fv = (sums(rows, w.astype(np.float64), corners) / b.rows
                  for (rows, inv, w), b in zip(self.parts, (u, v)))
        self.diff = fu - fv

    @staticmethod
    def _compress(batch):
        rows, inv, w = np.unique(batch.data, axis=0, return_inverse=True, return_counts=True)
        if 2 * rows.shape[0] > batch.rows:
            return batch.data, None, np.ones(batch.rows)
        return np.ascontiguousarray(rows), inv.ravel(), w

    def value(self):
        a = np.abs(self.diff)
        k = int(np.argmax(a))
        return float(a[k]), tuple(float(x) for x in self.corners[k])

    def _weighted(self, part, counts, top):
        rows, inv, _ = part
        if inv is not None:
            counts = np.stack([np.bincount(inv, weights=c, minlength=rows.shape[0]) for c in counts])
        acc = np.zeros((counts.shape[0], top.shape[0]))
        for lo in range(0, rows.shape[0], BLOCK):
            hi = min(lo + BLOCK, rows.shape[0])
            acc += counts[:, lo:hi] @ self.matrix(rows[lo:hi], top).T
        return acc

    def bootstrap(self, u, v, resamples):
        order = np.sort(np.argsort(-np.abs(self.diff), kind="stable")[:BOOT_TOP])
        top = np.ascontiguousarray(self.corners[order])
        cu = np.stack([_resample_counts(u, b) for b in range(resamples)]).astype(np.float64)
        cv = np.stack([_resample_counts(v, b) for b in range(resamples)]).astype(np.float64)
        d = (self._weighted(self.parts[0], cu, top) / u.rows
             - self._weighted(self.parts[1], cv, top) / v.rows)
        return np.max(np.abs(d), axis=1), np.max(np.abs(d - self.diff[order]), axis=1)


def _sup_estimate(ev, u, v, method, resamples, alpha, note):
    value, corner = ev.value()
    if method == "bootstrap":
        boot, dev = ev.bootstrap(u, v, resamples)
        se = float(np.std(boot, ddof=1))
        lo, hi = _band_interval(value, dev, alpha)
    elif method == "dkw":
        # Hoeffding at each corner, union over corners, for each sample
        k = ev.diff.size
        t = sum(math.sqrt(math.log(4 * k / alpha) / (2 * n)) for n in (u.rows, v.rows))
        lo, hi = max(value - t, 0.0), min(value + t, 1.0)
        se = t / stats.norm.ppf(1 - alpha / 2)
    else:
        raise ValidationError(f"unknown uncertainty method {method!r}")
    return EstimateWithCI(value, se, min(u.rows, v.rows), lo, hi, "empirical_sup",
                          note=note, corner=corner)


def mu_hat(u, v, rects=None, *, method="bootstrap", resamples=200, alpha=0.05, min_rows=1000,
           backend=None):
    """Estimate sup_r |P(U <= r) - P(V <= r)| from two sample batches."""
    _check_pair(u, v, min_rows)
    rects = RectangleFamily.pooled_corners() if rects is None else rects
    corners = rects.materialize(u.data, v.data)
    if corners.count == 0:
        raise ValidationError("empty rectangle family")
    if corners.is_grid:
        ev = _GridEval(u, v, corners.axes)
    else:
        ev = _ListEval(
            u, v, corners.points,
            lambda d, w, c: kernels.indicator_sums(d, w, c, backend),
            lambda d, c: kernels.indicator_matrix(d, c, backend),
        )
    return _sup_estimate(ev, u, v, method, resamples, alpha, corners.note)


def _default_smooth_family(p):
    k = max(2, int(math.floor(4096 ** (1.0 / p) + 1e-9)))
    return RectangleFamily.quantile_grid(k, axis_cap=p)


def smoothed_mu_hat(u, v, eps, rects=None, *, method="bootstrap", resamples=200, alpha=0.05,
                    min_rows=1000, work_guard=4 * 10**9, backend=None):
    """Estimate sup_r |E phi_eps(U, r) - E phi_eps(V, r)|.

    phi_eps(x, r) = P(x + eps Z <= r) is evaluated analytically, so no
    smoothing noise is simulated.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    _check_pair(u, v, min_rows)
    rects = _default_smooth_family(u.dim) if rects is None else rects
    corners = rects.materialize(u.data, v.data, point_cap=POINT_CORNER_CAP)
    pts = np.ascontiguousarray(corners.as_points())
    if pts.shape[0] == 0:
        raise ValidationError("empty rectangle family")
    work = pts.shape[0] * (u.rows + v.rows) * u.dim
    if work > work_guard:
        raise SizeGuardError("smoothed corner work (corners * rows * p)", work, work_guard)
    ev = _ListEval(
        u, v, pts,
        lambda d, w, c: kernels.phi_sums(d, w, c, eps, backend),
        lambda d, c: kernels.phi_matrix(d, c, eps, backend),
    )
    return _sup_estimate(ev, u, v, method, resamples, alpha, corners.note)


# -- third-order ideal metric ---------------------------------------------------

def default_frequency_grid(p, seed=0, directions=32, magnitudes=(0.5, 1.0, 2.0, 4.0)):
    """``directions`` seeded points on the unit l1 sphere times each magnitude."""
    gen = rngmod.stream(seed, 0, rngmod.tag("frequencies"), p)
    g = gen.standard_normal((directions, p))
    g /= np.sum(np.abs(g), axis=1, keepdims=True)
    return np.vstack([m * g for m in magnitudes])


def _trig_features(data, grid):
    """Columns sin(<t,x>) / ||t||_1^3 and cos(<t,x>) / ||t||_1^3."""
    arg = data @ grid.T
    norm3 = np.sum(np.abs(grid), axis=1) ** 3
    return np.hstack([np.sin(arg) / norm3, np.cos(arg) / norm3])


def zeta3_lower_hat(u, v, frequency_grid=None, *, seed=0, resamples=200, alpha=0.05):
    """Lower bound on the third-order ideal metric between the laws of u, v.

    Uses f(x) = sin(<t, x> + theta) / ||t||_1^3 for theta in {0, pi/2}; each
    satisfies |d^3/ds^3 f(x + s h)| <= ||h||_inf^3, so every member is an
    admissible test function.
    """
    _check_pair(u, v, 1)
    grid = default_frequency_grid(u.dim, seed) if frequency_grid is None else frequency_grid
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if grid.shape[1] != u.dim:
        raise ValidationError("frequency vectors must match the data dimension")
    if np.any(np.all(grid == 0, axis=1)):
        raise ValidationError("frequency vectors must be nonzero")
    # features are evaluated once per distinct row
    cu, inv_u = np.unique(u.data, axis=0, return_inverse=True)
    cv, inv_v = np.unique(v.data, axis=0, return_inverse=True)
    inv_u, inv_v = inv_u.ravel(), inv_v.ravel()
    fu = _trig_features(cu, grid)
    fv = _trig_features(cv, grid)
    diff = (np.bincount(inv_u, minlength=cu.shape[0]) / u.rows) @ fu - (
        np.bincount(inv_v, minlength=cv.shape[0]) / v.rows) @ fv
    value = float(np.max(np.abs(diff)))

    def weights(batch, inv, m, b):
        idx = _boot_gen(batch, b).integers(0, batch.rows, size=batch.rows)
        return np.bincount(inv[idx], minlength=m) / batch.rows

    boot, dev = np.empty(resamples), np.empty(resamples)
    for lo in range(0, resamples, 50):
        bs = range(lo, min(lo + 50, resamples))
        wu = np.stack([weights(u, inv_u, cu.shape[0], b) for b in bs])
        wv = np.stack([weights(v, inv_v, cv.shape[0], b) for b in bs])
        d = wu @ fu - wv @ fv
        boot[lo:lo + len(bs)] = np.max(np.abs(d), axis=1)
        dev[lo:lo + len(bs)] = np.max(np.abs(d - diff), axis=1)
    se = float(np.std(boot, ddof=1))
    lo, hi = _band_interval(value, dev, alpha, upper=math.inf)
    return EstimateWithCI(value, se, min(u.rows, v.rows), lo, hi, "test_function_sup")


# -- pseudo-moments ------------------------------------------------------------

def _norm_moment_mc(spec, order, replications, seed, stream_id):
    data = sample(spec, replications, seed, stream_id).data
    m = np.max(np.abs(data), axis=1) ** order
    return float(m.mean()), float(m.std(ddof=1) / math.sqrt(replications))


def pseudo_moment_hat(spec_x, order, replications=10**5, *, seed=0, stream_id=0, alpha=0.05):
    """Pseudo-moment between ``spec_x`` and its matched Gaussian.

    When the two laws are mutually singular this equals E||X||^order +
    E||Y||^order (the X term is exact when coordinates are independent and
    the Y term is Monte Carlo). Otherwise the same sum is returned as an
    upper-bound surrogate, flagged in ``note``.
    """
    if order not in (1, 3):
        raise ValidationError("order must be 1 or 3")
    z = stats.norm.ppf(1 - alpha / 2)
    if isinstance(spec_x, Gaussian):
        return EstimateWithCI(0.0, 0.0, 0, 0.0, 0.0, "plugin_moment", note="identical laws")
    y = gaussian_match(spec_x)
    if not np.any(y.cov.entries):
        law = spec_x.atomic_law()
        if law is not None and law.size == 1 and not np.any(law.points):
            return EstimateWithCI(0.0, 0.0, 0, 0.0, 0.0, "plugin_moment", note="identical laws")
    coords = spec_x.coords()
    if coords is not None:
        law = spec_x.atomic_law()
        x_val = law.norm_moment(order) if law is not None else max_abs_moment(coords, order)
        x_se = 0.0
    else:
        x_val, x_se = _norm_moment_mc(spec_x, order, replications, seed, stream_id)
    y_val, y_se = _norm_moment_mc(y, order, replications, seed, stream_id + 1)
    value = x_val + y_val
    se = math.hypot(x_se, y_se)
    note = "exact_singular" if spec_x.singular_to_gaussian() else "upper_surrogate"
    return EstimateWithCI(value, se, replications, max(value - z * se, 0.0), value + z * se,
                          "plugin_moment", note=note)


# -- rate fits -----------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    slope_se: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r_squared))


def rate_fit(points):
    """Least squares of log(error) on log(n) over (n, error) pairs."""
    pts = list(points)
    if len(pts) < 3:
        raise ValidationError("need at least 3 points")
    n = np.array([float(a) for a, _ in pts])
    e = np.array([float(b) for _, b in pts])
    if np.any(e <= 0) or np.any(n <= 0):
        raise ValidationError("n and error values must be positive")
    res = stats.linregress(np.log(n), np.log(e))
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue**2), float(res.stderr))
