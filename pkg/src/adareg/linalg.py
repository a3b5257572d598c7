"""Dense linear algebra for the tiny matrices that appear in the controller.

Matrices are plain 2-D float64 numpy arrays (row-major). Only two non-trivial
routines are provided: a Cholesky based SPD solve and a cyclic Jacobi
eigensolver for the minimum eigenvalue of a symmetric matrix.
"""
import math

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric

SYM_RTOL = 1e-10


def as_matrix(a, rows=None, cols=None):
    """Coerce ``a`` to a finite 2-D float array, optionally checking its shape."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got array of ndim {m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise DimensionMismatch(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionMismatch(f"expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def inf_norm(a):
    a = np.atleast_2d(a)
    return float(np.max(np.sum(np.abs(a), axis=1))) if a.size else 0.0


def check_symmetric(a, rtol=SYM_RTOL):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {a.shape}")
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > rtol * max(inf_norm(a), 1e-300) and asym > 0.0:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds tolerance")
    return a


def cholesky(a):
    """Lower-triangular L with L @ L.T == a. Rejects non-SPD input."""
    a = check_symmetric(a)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - float(np.dot(L[j, :j], L[j, :j]))
        if not pivot > 0.0:
            raise NotPositiveDefinite(f"Cholesky pivot {j} is {pivot:.6g} <= 0")
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (a[i, j] - float(np.dot(L[i, :j], L[j, :j]))) / L[j, j]
    return L


def cho_solve(L, b):
    """Solve (L L^T) X = B by forward and back substitution."""
    b = as_matrix(b, rows=L.shape[0])
    n, k = b.shape
    y = np.zeros((n, k))
    for i in range(n):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    x = np.zeros((n, k))
    for i in reversed(range(n)):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def spd_solve(a, b):
    """Solve A X = B for symmetric positive-definite A via Cholesky.

    Raises NotSymmetric or NotPositiveDefinite instead of silently falling
    back to a general solver.
    """
    L = cholesky(a)
    return cho_solve(L, b)


def _off_norm(a):
    off = a - np.diag(np.diag(a))
    return math.sqrt(float(np.sum(off * off)))


def jacobi_eigenvalues(a, tol=1e-12, max_sweeps=100):
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps continue until the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||A||_F)``.
    """
    a = check_symmetric(a).copy()
    n = a.shape[0]
    scale = max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        if _off_norm(a) < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def sym_min_eig(a):
    """Minimum eigenvalue of a symmetric matrix (cyclic Jacobi)."""
    return float(jacobi_eigenvalues(a)[0])


def sym_max_eig(a):
    return float(jacobi_eigenvalues(a)[-1])


def rotation(n, p, q, angle):
    """The n x n Givens/Jacobi rotation acting in the (p, q) plane."""
    r = np.eye(n)
    c, s = math.cos(angle), math.sin(angle)
    r[p, p] = r[q, q] = c
    r[p, q] = s
    r[q, p] = -s
    return r
