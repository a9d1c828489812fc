"""Symmetric PSD matrix utilities: spectral extremes, sampling factors and the
Gaussian covariance split N(0, S) = N(0, lam I) + N(0, S - lam I)."""
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPSDError, ValidationError

SYM_RTOL = 1e-12
PSD_RTOL = 1e-10
FACTOR_PSD_RTOL = 1e-8
SPLIT_CLAMP_RTOL = 1e-9


def _as_square(entries):
    a = np.array(entries, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"expected a nonempty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    asym = float(np.max(np.abs(a - a.T)))
    big = float(np.max(np.abs(a)))
    if asym > SYM_RTOL * big:
        raise ValidationError(f"matrix is not symmetric: max asymmetry {asym:.3e}")
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """A symmetric PSD matrix with cached spectral data.

    ``min_eig`` is clamped at zero; ``min_diag`` is the smallest diagonal entry
    and ``min_diag_sqrt`` its (clamped) square root. Construction fails with
    NotPSDError when the smallest eigenvalue is below ``-psd_rtol * scale``,
    where scale is the largest absolute eigenvalue (or ``scale`` if given).
    """

    entries: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    min_eig: float
    min_diag: float
    min_diag_sqrt: float
    scale: float

    def __init__(self, entries, *, psd_rtol=PSD_RTOL, scale=None):
        a = _as_square(entries)
        lam = np.linalg.eigvalsh(a)
        sc = float(np.max(np.abs(lam))) if scale is None else float(scale)
        if lam[0] < -psd_rtol * sc:
            raise NotPSDError(
                f"matrix is not PSD: smallest eigenvalue {lam[0]:.3e} (scale {sc:.3e})"
            )
        a.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "min_eig", max(float(lam[0]), 0.0))
        dmin = float(np.min(np.diag(a)))
        object.__setattr__(self, "min_diag", dmin)
        object.__setattr__(self, "min_diag_sqrt", float(np.sqrt(max(dmin, 0.0))))
        object.__setattr__(self, "scale", sc)

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def is_diagonal(self):
        return not np.any(self.entries - np.diag(np.diag(self.entries)))

    def diagonal(self):
        return np.diag(self.entries).copy()

    def to_list(self):
        return self.entries.tolist()

    @classmethod
    def identity(cls, p):
        return cls(np.eye(p))

    @classmethod
    def diag(cls, values):
        return cls(np.diag(np.asarray(values, dtype=np.float64)))

    def __eq__(self, other):
        return isinstance(other, CovarianceSpec) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def as_cov(cov):
    return cov if isinstance(cov, CovarianceSpec) else CovarianceSpec(cov)


def min_eigenvalue(cov):
    """Smallest eigenvalue of a PSD matrix (clamped at 0)."""
    return as_cov(cov).min_eig


def factor_for_sampling(cov):
    """Return F with F @ F.T == cov (to 1e-9 relative, max-norm).

    Cholesky for well-conditioned input, otherwise a spectral factor with
    eigenvalues clamped at zero (rank-deficient input is fine).
    """
    cov = as_cov(cov)
    a = cov.entries
    if cov.eigenvalues[0] < -FACTOR_PSD_RTOL * cov.scale:
        raise NotPSDError(f"matrix is not PSD: smallest eigenvalue {cov.eigenvalues[0]:.3e}")
    amax = float(np.max(np.abs(a)))
    if amax == 0.0:
        return np.zeros_like(a)
    tol = 1e-9 * amax
    if cov.min_eig > 1e-12 * cov.scale:
        try:
            f = np.linalg.cholesky(a)
            if np.max(np.abs(f @ f.T - a)) <= tol:
                return f
        except np.linalg.LinAlgError:
            pass
    lam, vec = np.linalg.eigh(a)
    f = vec * np.sqrt(np.clip(lam, 0.0, None))
    err = float(np.max(np.abs(f @ f.T - a)))
    if err > tol:
        raise NotPSDError(f"spectral factor reconstruction error {err:.3e} exceeds {tol:.3e}")
    return f


def gaussian_split(cov):
    """Split cov into (lam, cov - lam*I) with lam the smallest eigenvalue.

    Remainder eigenvalues in [-1e-9*scale, 0] are treated as zero so the
    remainder always stays sampleable.
    """
    cov = as_cov(cov)
    lam = cov.min_eig
    rem = cov.entries - lam * np.eye(cov.dim)
    return lam, CovarianceSpec(rem, psd_rtol=SPLIT_CLAMP_RTOL, scale=max(cov.scale, 1e-300))
