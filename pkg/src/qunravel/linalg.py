"""Dense complex linear algebra sized for Hilbert dimensions up to a few thousand.

Vectors are one-dimensional ``complex128`` arrays, matrices square
two-dimensional ones.  All values are treated as immutable after
construction, so they can be shared freely between trajectory workers.

The Hermitian eigensolver is an in-house cyclic Jacobi iteration: the only
matrices that ever reach it are small (2x2 coupling matrices, positivity
checks up to dimension ~64), so robustness and testability beat raw speed.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_vector",
    "as_matrix",
    "dagger",
    "matvec",
    "outer",
    "is_hermitian",
    "hermitian_part",
    "hermitian_deviation",
    "hermitian_eigenvalues",
    "min_eigenvalue",
]

#: relative tolerance used for the Hermitian-matrix invariant
HERMITIAN_RTOL = 1e-12

#: off-diagonal norm target of the Jacobi sweep, relative to the input norm
JACOBI_TOL = 1e-12


def as_vector(values) -> np.ndarray:
    """Coerce ``values`` to a finite complex128 vector."""
    v = np.asarray(values, dtype=complex)
    if v.ndim != 1:
        raise ValueError(f"expected a 1d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v.view(float))):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(values) -> np.ndarray:
    """Coerce ``values`` to a finite square complex128 matrix."""
    m = np.asarray(values, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m.view(float))):
        raise ValueError("matrix has non-finite entries")
    return m


def dagger(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return m.conj().T


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    m = np.asarray(m)
    v = np.asarray(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {v.shape}")
    return m @ v


def outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Outer product ``u v^dagger``, i.e. ``result[i, j] = u[i] * conj(v[j])``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return np.multiply.outer(u, v.conj())


def hermitian_deviation(m: np.ndarray) -> float:
    """Max-norm distance from ``m`` to its Hermitian part, relative to max|m|."""
    m = np.asarray(m)
    scale = float(np.abs(m).max()) if m.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.abs(m - dagger(m)).max()) / scale


def is_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    return hermitian_deviation(m) <= rtol


def hermitian_part(m: np.ndarray) -> np.ndarray:
    """Hermitian symmetrization ``(m + m^dagger) / 2``."""
    return 0.5 * (m + dagger(m))


def _jacobi_eigh(a: np.ndarray, tol: float, max_sweeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a Hermitian matrix.

    Returns ``(eigenvalues, vectors)`` with eigenvalues ascending and
    ``vectors.conj().T @ a @ vectors`` diagonal.
    """
    n = a.shape[0]
    A = a.astype(complex, copy=True)
    V = np.eye(n, dtype=complex)
    scale = float(np.linalg.norm(A))
    if scale == 0.0 or n == 1:
        vals = np.real(np.diag(A)).copy()
        order = np.argsort(vals, kind="stable")
        return vals[order], V[:, order]

    target = tol * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                beta = abs(apq)
                if beta <= 1e-3 * target / n:
                    continue
                phase = apq / beta
                theta = 0.5 * np.arctan2(2.0 * beta, A[p, p].real - A[q, q].real)
                c = np.cos(theta)
                s = np.sin(theta)
                # column update A <- A R with the plane rotation R
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p + s * np.conj(phase) * col_q
                A[:, q] = -s * phase * col_p + c * col_q
                # row update A <- R^dagger A
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p + s * phase * row_q
                A[q, :] = -s * np.conj(phase) * row_p + c * row_q
                # accumulate eigenvectors V <- V R
                vcol_p = V[:, p].copy()
                vcol_q = V[:, q].copy()
                V[:, p] = c * vcol_p + s * np.conj(phase) * vcol_q
                V[:, q] = -s * phase * vcol_p + c * vcol_q
    else:
        raise RuntimeError(f"Jacobi sweep did not converge in {max_sweeps} sweeps")

    vals = np.real(np.diag(A)).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def hermitian_eigenvalues(
    m: np.ndarray,
    with_vectors: bool = False,
    rtol: float = HERMITIAN_RTOL,
    max_sweeps: int = 100,
):
    """Eigenvalues (ascending) of a Hermitian matrix, optionally with vectors.

    Raises ``ValueError`` when ``m`` is not Hermitian within ``rtol``.  The
    matrix is symmetrized before diagonalizing so roundoff-level asymmetry
    cannot leak imaginary parts into the spectrum.
    """
    m = as_matrix(m)
    if hermitian_deviation(m) > rtol:
        raise ValueError("matrix is not Hermitian within tolerance")
    vals, vecs = _jacobi_eigh(hermitian_part(m), JACOBI_TOL, max_sweeps)
    if with_vectors:
        return vals, vecs
    return vals


def min_eigenvalue(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> float:
    """Smallest eigenvalue of a Hermitian matrix."""
    return float(hermitian_eigenvalues(m, rtol=rtol)[0])
