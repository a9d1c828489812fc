"""Backend selection for the corner-scan kernels.

The compiled extension is used when it imports; otherwise the numpy versions.
Setting ``RECTCLT_PURE_PYTHON=1`` forces the numpy path.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "numpy"
_impl = _pykernels

if not os.environ.get("RECTCLT_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def _arr2(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _check(points, corners):
    points, corners = _arr2(points), _arr2(corners)
    if points.ndim != 2 or corners.ndim != 2 or points.shape[1] != corners.shape[1]:
        raise ValueError(f"shape mismatch: points {points.shape}, corners {corners.shape}")
    return points, corners


def indicator_sums(points, weights, corners, backend=None):
    """out[k] = sum_i weights[i] * 1{points[i] <= corners[k]} (coordinate-wise)."""
    points, corners = _check(points, corners)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    return _pick(backend).indicator_sums(points, weights, corners)


def indicator_matrix(points, corners, backend=None):
    points, corners = _check(points, corners)
    return _pick(backend).indicator_matrix(points, corners)


def phi_sums(points, weights, corners, eps, backend=None):
    """out[k] = sum_i weights[i] * prod_j Phi((corners[k, j] - points[i, j]) / eps)."""
    points, corners = _check(points, corners)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    impl, table = _pick(backend), _value_table(corners)
    if table is None:
        return impl.phi_sums(points, weights, corners, float(eps))
    values, axis, index = table
    block = max(1, _TABLE_ELEMS // values.size)
    return impl.phi_table_sums(points, weights, values, axis, index, float(eps), block)


def phi_matrix(points, corners, eps, backend=None):
    points, corners = _check(points, corners)
    impl, table = _pick(backend), _value_table(corners)
    if table is None:
        return impl.phi_matrix(points, corners, float(eps))
    values, axis, index = table
    return impl.phi_table_matrix(points, values, axis, index, float(eps))


# Size cap (doubles) on the per-block Phi table.
_TABLE_ELEMS = 1 << 20


def _value_table(corners):
    """Distinct corner values per axis, when sharing makes tabulation pay off.

    Returns (values, axis, index) with corners[k, j] == values[index[k, j]]
    and axis[index[k, j]] == j, or None when corners share too few values.
    """
    k, p = corners.shape
    if k < 2:
        return None
    values, axis, index, offset = [], [], np.empty((k, p), dtype=np.int64), 0
    for j in range(p):
        uniq, inv = np.unique(corners[:, j], return_inverse=True)
        values.append(uniq)
        axis.append(np.full(uniq.size, j, dtype=np.int64))
        index[:, j] = inv.ravel() + offset
        offset += uniq.size
    if 4 * offset > k * p:
        return None
    return np.concatenate(values), np.concatenate(axis), index


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "numpy":
        return _pykernels
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {backend!r}")


def compiled_available():
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True
