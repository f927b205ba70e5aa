"""Dense complex linear algebra helpers (thin wrappers over LAPACK)."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla


class SingularSystemError(np.linalg.LinAlgError):
    """Matrix is singular or numerically rank deficient."""


def lu_solve(A, b, rtol: float = 1e-14):
    """Solve ``A x = b`` by LU with partial pivoting."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"lu_solve needs a square matrix, got shape {A.shape}")
    with warnings.catch_warnings():
        # exact singularity is reported below as SingularSystemError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    d = np.abs(np.diag(lu))
    if d.size and d.min() <= rtol * max(d.max(), np.finfo(float).tiny):
        raise SingularSystemError("zero pivot in LU factorization")
    return sla.lu_solve((lu, piv), b)


def qr_lstsq(A, b, rtol: float = 1e-12):
    """Least-squares solution of ``A x ~ b`` by column-pivoted QR.

    Raises :class:`SingularSystemError` when ``A`` is rank deficient at
    relative tolerance ``rtol``.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    m, n = A.shape
    if m < n:
        raise SingularSystemError(f"underdetermined system ({m} rows < {n} columns)")
    Q, R, perm = sla.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rtol * d[0])) if d.size and d[0] > 0 else 0
    if rank < n:
        raise SingularSystemError(f"rank deficient system (rank {rank} < {n})")
    y = Q.conj().T @ b
    z = sla.solve_triangular(R, y)
    x = np.empty_like(z)
    x[perm] = z
    return x


def cond_estimate(A) -> float:
    """1-norm condition number (exact for the small matrices used here)."""
    A = np.asarray(A)
    if A.shape[0] != A.shape[1]:
        s = np.linalg.svd(A, compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    try:
        return float(np.abs(np.linalg.cond(A, 1)))
    except np.linalg.LinAlgError:
        return float("inf")


def nullspace_2x2(A):
    """Unit vector spanning (approximately) the null space of a 2x2 matrix."""
    A = np.asarray(A, dtype=complex)
    _, s, vh = np.linalg.svd(A)
    if s[-1] > 1e-8 * max(s[0], 1e-300):
        raise SingularSystemError("2x2 matrix has trivial null space")
    return vh[-1].conj()
