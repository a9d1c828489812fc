"""Pure-numpy versions of the corner-scan kernels in ``_ckernels.pyx``."""
import numpy as np
from scipy.special import ndtr

# Cap on the size of the (corners x points x dims) temporary.
_BLOCK_ELEMS = 1 << 22


def _blocks(k, n, p):
    step = max(1, _BLOCK_ELEMS // max(1, n * p))
    for start in range(0, k, step):
        yield slice(start, min(k, start + step))


def indicator_matrix(points, corners):
    k, (n, p) = corners.shape[0], points.shape
    out = np.empty((k, n), dtype=np.float64)
    for sl in _blocks(k, n, p):
        out[sl] = np.all(points[None, :, :] <= corners[sl, None, :], axis=2)
    return out


def indicator_sums(points, weights, corners):
    k, (n, p) = corners.shape[0], points.shape
    out = np.empty(k, dtype=np.float64)
    for sl in _blocks(k, n, p):
        inside = np.all(points[None, :, :] <= corners[sl, None, :], axis=2)
        out[sl] = inside @ weights
    return out


def phi_matrix(points, corners, eps):
    k, (n, p) = corners.shape[0], points.shape
    out = np.empty((k, n), dtype=np.float64)
    for sl in _blocks(k, n, p):
        z = (corners[sl, None, :] - points[None, :, :]) / eps
        out[sl] = np.prod(ndtr(z), axis=2)
    return out


def phi_sums(points, weights, corners, eps):
    return phi_matrix(points, corners, eps) @ weights


def phi_table_sums(points, weights, values, axis, index, eps, block):
    k, n = index.shape[0], points.shape[0]
    out = np.zeros(k, dtype=np.float64)
    step = max(1, min(block, _BLOCK_ELEMS // max(1, k)))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        out += phi_table_matrix(points[lo:hi], values, axis, index, eps) @ weights[lo:hi]
    return out


def phi_table_matrix(points, values, axis, index, eps):
    table = ndtr((values[:, None] - points[:, axis].T) / eps)
    out = table[index[:, 0]].copy()
    for j in range(1, index.shape[1]):
        out *= table[index[:, j]]
    return out
