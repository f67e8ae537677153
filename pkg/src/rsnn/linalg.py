"""Dense symmetric eigensolver (cyclic Jacobi), Cholesky and the
symmetric-definite generalized eigenproblem ``A v = lambda B v``."""

from dataclasses import dataclass
import math

import numba
import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "Spectrum",
    "NotPositiveDefiniteError",
    "ConvergenceError",
    "sym_eig",
    "sym_eigvals",
    "cholesky",
    "gen_sym_eig",
    "cond_number",
    "svd_jacobi",
]

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 64


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky met a non-positive pivot."""

    def __init__(self, index, value):
        super().__init__(f"matrix is not positive definite: pivot {index} is {value:.6e}")
        self.index = index
        self.value = value


class ConvergenceError(np.linalg.LinAlgError):
    pass


@dataclass
class Spectrum:
    """Ascending eigenvalues with column eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray
    residual_bound: float


@numba.njit(cache=True)
def _jacobi(S, want_vectors, tol, max_sweeps):
    n = S.shape[0]
    A = S.copy()
    Vt = np.eye(n)  # rows are eigenvectors
    normF = math.sqrt(np.sum(A * A))
    sweeps = 0
    off = 0.0
    for sweeps in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * A[i, j] * A[i, j]
        off = math.sqrt(off)
        if off <= tol * normF or sweeps == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                app = A[p, p]
                aqq = A[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # rows p, q of J^T A; by symmetry they are also columns p, q of J^T A J
                for k in range(n):
                    akp = A[p, k]
                    akq = A[q, k]
                    A[p, k] = c * akp - s * akq
                    A[q, k] = s * akp + c * akq
                for k in range(n):
                    A[k, p] = A[p, k]
                    A[k, q] = A[q, k]
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                if want_vectors:
                    for k in range(n):
                        vp = Vt[p, k]
                        vq = Vt[q, k]
                        Vt[p, k] = c * vp - s * vq
                        Vt[q, k] = s * vp + c * vq
    converged = off <= tol * normF
    return np.diag(A).copy(), Vt, converged, sweeps, off


def _prepare(S):
    S = np.array(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    return S


def _run_jacobi(S, want_vectors, tol, max_sweeps):
    if S.shape[0] == 0:
        return np.empty(0), np.empty((0, 0))
    vals, Vt, converged, sweeps, off = _jacobi(S, want_vectors, tol, max_sweeps)
    if not converged:
        raise ConvergenceError(
            f"Jacobi did not converge in {max_sweeps} sweeps: off-diagonal norm {off:.3e}, "
            f"Frobenius norm {np.linalg.norm(S):.3e}"
        )
    order = np.argsort(vals, kind="stable")
    return vals[order], Vt[order].T


def sym_eig(S, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Only the upper triangle of ``S`` is trusted; it is mirrored first.
    """
    S = _prepare(S)
    S = np.triu(S) + np.triu(S, 1).T
    vals, vecs = _run_jacobi(S, True, tol, max_sweeps)
    resid = 0.0
    if vals.size:
        resid = float(np.max(np.linalg.norm(S @ vecs - vecs * vals, axis=0)))
    return Spectrum(vals, vecs, resid)


def sym_eigvals(S, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues only (skips rotation accumulation)."""
    S = _prepare(S)
    S = np.triu(S) + np.triu(S, 1).T
    return _run_jacobi(S, False, tol, max_sweeps)[0]


@numba.njit(cache=True)
def _hestenes(Ct, tol, floor, max_sweeps):
    # one-sided Jacobi on the rows of Ct (= columns of the input matrix);
    # rows with squared norm below floor are numerically zero and left alone
    m = Ct.shape[0]
    r = Ct.shape[1]
    Vt = np.eye(m)
    sweeps = 0
    rotated = 1
    for sweeps in range(max_sweeps):
        rotated = 0
        for p in range(m - 1):
            for q in range(p + 1, m):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(r):
                    alpha += Ct[p, k] * Ct[p, k]
                    beta += Ct[q, k] * Ct[q, k]
                    gamma += Ct[p, k] * Ct[q, k]
                if gamma == 0.0 or alpha <= floor or beta <= floor:
                    continue
                if abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated += 1
                zeta = (beta - alpha) / (2.0 * gamma)
                t = 1.0 / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for k in range(r):
                    a = Ct[p, k]
                    b = Ct[q, k]
                    Ct[p, k] = c * a - s * b
                    Ct[q, k] = s * a + c * b
                for k in range(m):
                    a = Vt[p, k]
                    b = Vt[q, k]
                    Vt[p, k] = c * a - s * b
                    Vt[q, k] = s * a + c * b
        if rotated == 0:
            break
    return Ct, Vt, rotated == 0, sweeps


def svd_jacobi(R, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Singular values (descending) and right singular vectors of ``R``.

    One-sided Jacobi: columns are rotated pairwise until mutually
    orthogonal, then ``sigma_j`` is the norm of column ``j``. Returns
    ``(sigma, V)`` with ``R V = U diag(sigma)`` for orthonormal ``U``.
    Small singular values keep an absolute accuracy of about
    ``eps * sigma_max``, unlike eigenvalues of ``R^T R``.
    """
    R = _prepare_rect(R)
    m = R.shape[1]
    if m == 0:
        return np.empty(0), np.empty((0, 0))
    floor = (m * np.finfo(np.float64).eps * np.linalg.norm(R)) ** 2
    Ct, Vt, converged, sweeps = _hestenes(np.ascontiguousarray(R.T), tol, floor, max_sweeps)
    if not converged:
        raise ConvergenceError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")
    sigma = np.sqrt(np.einsum("ij,ij->i", Ct, Ct))
    order = np.argsort(-sigma, kind="stable")
    return sigma[order], Vt[order].T


def _prepare_rect(R):
    R = np.array(R, dtype=np.float64)
    if R.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError("matrix has non-finite entries")
    return R


def cholesky(B):
    """Lower-triangular ``L`` with ``B = L L^T``.

    Raises :class:`NotPositiveDefiniteError` with the offending pivot.
    """
    B = _prepare(B)
    n = B.shape[0]
    L = np.zeros_like(B)
    for j in range(n):
        row = L[j, :j]
        pivot = B[j, j] - row @ row
        if not pivot > 0.0:
            raise NotPositiveDefiniteError(j, float(pivot))
        ljj = math.sqrt(pivot)
        L[j, j] = ljj
        if j + 1 < n:
            L[j + 1:, j] = (B[j + 1:, j] - L[j + 1:, :j] @ row) / ljj
    return L


def gen_sym_eig(A, B, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Solve ``A v = lambda B v`` with ``B`` symmetric positive definite.

    Reduces to the standard problem ``L^-1 A L^-T q = lambda q`` and
    back-transforms; the returned vectors are B-orthonormal.
    """
    A = _prepare(A)
    A = np.triu(A) + np.triu(A, 1).T
    L = cholesky(B)
    X = solve_triangular(L, A, lower=True)
    C = solve_triangular(L, X.T, lower=True)
    C = 0.5 * (C + C.T)
    vals, Q = _run_jacobi(C, True, tol, max_sweeps)
    V = solve_triangular(L.T, Q, lower=False)
    resid = 0.0
    if vals.size:
        Bs = np.triu(B) + np.triu(B, 1).T
        resid = float(np.max(np.linalg.norm(A @ V - (Bs @ V) * vals, axis=0)))
    return Spectrum(vals, V, resid)


def cond_number(S):
    """``max|lambda| / min|lambda|``; ``inf`` when the smallest is exactly 0."""
    vals = np.abs(sym_eigvals(S))
    if vals.size == 0:
        return 1.0
    lo = vals.min()
    if lo == 0.0:
        return math.inf
    return float(vals.max() / lo)
