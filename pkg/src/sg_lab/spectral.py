"""Dense symmetric-matrix utilities.

Eigenvalues come from a cyclic Jacobi sweep compiled with numba. Regressor
dimensions in this package are small (a handful up to a few hundred), where
Jacobi is accurate to roundoff and simple to audit.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import InvalidMatrix, SingularMatrix

#: positive-definiteness threshold used by :func:`condition_number`
PD_RTOL = 1e-14


@njit(cache=True)
def _jacobi_eigvals(a, tol, max_sweeps):
    n = a.shape[0]
    a = a.copy()
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if math.sqrt(off) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    if k != p and k != q:
                        akp = a[k, p]
                        akq = a[k, q]
                        a[k, p] = c * akp - s * akq
                        a[p, k] = a[k, p]
                        a[k, q] = s * akp + c * akq
                        a[q, k] = a[k, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
    out = np.empty(n)
    for i in range(n):
        out[i] = a[i, i]
    return out


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidMatrix(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix("matrix has non-finite entries")
    return a


def symmetrize(m) -> np.ndarray:
    """Return the symmetric part ``(m + m.T) / 2`` of a square matrix."""
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidMatrix(f"expected a non-empty square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def eigvalsh(m) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending."""
    a = symmetrize(m)
    if a.shape[0] == 1:
        return a[0].copy()
    scale = float(np.sqrt(np.sum(a * a)))
    if scale == 0.0:
        return np.zeros(a.shape[0])
    w = _jacobi_eigvals(a / scale, 1e-15, 60) * scale
    return np.sort(w)


def eig_extremes(m) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    w = eigvalsh(m)
    return float(w[0]), float(w[-1])


def frob_norm(m) -> float:
    a = _as_matrix(np.atleast_2d(m))
    return float(np.sqrt(np.sum(a * a)))


def spectral_norm(m) -> float:
    """Largest singular value; ``m`` may be rectangular and non-symmetric."""
    a = _as_matrix(m)
    if a.size == 0:
        return 0.0
    # Gram matrix on the smaller side
    gram = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    lam = eig_extremes(gram)[1]
    return math.sqrt(max(lam, 0.0))


def condition_number(m) -> float:
    """``lambda_max / lambda_min`` of a positive-definite matrix."""
    lo, hi = eig_extremes(m)
    if hi <= 0.0 or lo <= PD_RTOL * hi:
        raise SingularMatrix(f"matrix is not positive definite (lambda_min={lo:.3e}, lambda_max={hi:.3e})")
    return hi / lo
