"""Dense linear algebra kernel.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 (row-major).
The symmetric eigensolver is a cyclic Jacobi method; singular values and the
pseudoinverse are built on top of it.
"""

import math

import numpy as np

MAX_SWEEPS = 100
OFF_DIAG_TOL = 1e-12
SYM_TOL = 1e-10
PINV_TOL = 1e-12


class LinalgError(ValueError):
    pass


class ConvergenceError(LinalgError):
    """Jacobi sweeps exhausted before the off-diagonal mass vanished."""

    def __init__(self, residual, sweeps):
        super().__init__(
            f"Jacobi eigensolver did not converge after {sweeps} sweeps "
            f"(max off-diagonal {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps


def as_matrix(data, name="matrix"):
    """Validate user input and return a 2-D float64 array with finite entries."""
    m = np.array(data, dtype=np.float64, copy=True)
    if m.ndim != 2:
        raise LinalgError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinalgError(f"{name} contains NaN or Inf entries")
    return m


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise LinalgError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def _check_square(m, what):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise LinalgError(f"{what} requires a square matrix, got shape {m.shape}")


def sym_eigen(m):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(values, vectors)`` with eigenvalues sorted descending and the
    matching orthonormal eigenvectors as columns.  The input is symmetrized
    as ``(M + M.T) / 2`` first; asymmetry above ``SYM_TOL`` (relative) is an
    error.
    """
    m = np.asarray(m, dtype=np.float64)
    _check_square(m, "sym_eigen")
    n = m.shape[0]
    fro = float(np.linalg.norm(m))
    if n and np.max(np.abs(m - m.T)) > SYM_TOL * max(1.0, fro):
        raise LinalgError("sym_eigen requires a symmetric matrix")
    a = 0.5 * (m + m.T)
    v = np.eye(n)
    tol = OFF_DIAG_TOL * fro

    def off_max():
        if n < 2:
            return 0.0
        return float(np.max(np.abs(a - np.diag(np.diag(a)))))

    residual = off_max()
    sweeps = 0
    while residual > tol:
        if sweeps == MAX_SWEEPS:
            raise ConvergenceError(residual, sweeps)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol * 1e-3:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweeps += 1
        residual = off_max()

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]


def singular_values(m):
    """Singular values of a square matrix, sorted descending.

    Computed as square roots of the eigenvalues of ``M.T @ M``; eigenvalues
    within ``PINV_TOL * lambda_max`` of zero (either sign) are clamped to 0
    before the square root.
    """
    m = np.asarray(m, dtype=np.float64)
    _check_square(m, "singular_values")
    gram = matmul(m.T, m)
    evals, _ = sym_eigen(gram)
    top = evals[0] if evals.size else 0.0
    evals = np.where(evals <= PINV_TOL * max(top, 0.0), 0.0, evals)
    return np.sort(np.sqrt(evals))[::-1]


def pseudoinverse(m):
    """Moore-Penrose pseudoinverse.

    Symmetric inputs are decomposed directly; anything else goes through the
    eigendecomposition of ``M.T @ M`` (``M+ = (M^T M)+ M^T``).  Eigenvalues at
    or below ``PINV_TOL`` times the largest magnitude are treated as zero.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise LinalgError(f"pseudoinverse requires a 2-D matrix, got shape {m.shape}")
    if m.size == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    symmetric = m.shape[0] == m.shape[1] and np.allclose(m, m.T, rtol=0.0, atol=SYM_TOL * max(1.0, np.abs(m).max()))
    base = m if symmetric else matmul(m.T, m)
    evals, vecs = sym_eigen(base)
    cutoff = PINV_TOL * np.max(np.abs(evals))
    inv = np.zeros_like(evals)
    keep = np.abs(evals) > cutoff
    inv[keep] = 1.0 / evals[keep]
    base_pinv = matmul(vecs * inv, vecs.T)
    return base_pinv if symmetric else matmul(base_pinv, m.T)


def frobenius(m):
    return float(np.sqrt(np.sum(np.square(np.asarray(m, dtype=np.float64)))))


def spectral_norm(m):
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0


def positive_extremes(values, rel_tol=PINV_TOL):
    """Largest value and smallest value above ``rel_tol * max`` (the positive part)."""
    values = np.asarray(values, dtype=np.float64)
    top = float(values.max())
    if top <= 0.0:
        raise LinalgError("no positive values")
    pos = values[values > rel_tol * top]
    return float(pos.min()), top
