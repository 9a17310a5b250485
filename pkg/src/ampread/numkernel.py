"""Dense real linear-algebra primitives shared by the rest of the package.

Everything here works on float64 numpy arrays. The SVD and QR calls are
backed by LAPACK through numpy; the thin wrappers add a deterministic sign
convention and explicit failure modes.
"""

from __future__ import annotations

import numpy as np


class NumericalError(ArithmeticError):
    """Raised when a numerical routine cannot produce a valid result."""


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    return A


def svd(A, full: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular value decomposition ``A = X @ diag(s) @ Yt``.

    Singular values come back non-increasing. Each left singular vector is
    flipped so that its largest-magnitude entry is non-negative, and the
    matching row of ``Yt`` is flipped with it, which makes the factors
    reproducible run to run.

    Parameters
    ----------
    A : array_like, shape (m, n)
    full : bool
        If True, ``X`` is m x m and ``Yt`` is n x n. Otherwise the thin
        factors (m x k, k x n with k = min(m, n)) are returned.
    """
    A = _as_matrix(A)
    try:
        X, s, Yt = np.linalg.svd(A, full_matrices=full)
    except np.linalg.LinAlgError as exc:
        # LAPACK gesdd does not expose its sweep count; report the shape instead.
        raise NumericalError(f"SVD did not converge for {A.shape} matrix "
                             f"(LAPACK iteration cap reached): {exc}") from exc
    if X.size:
        idx = np.argmax(np.abs(X), axis=0)
        signs = np.sign(X[idx, np.arange(X.shape[1])])
        signs[signs == 0] = 1.0
        X = X * signs
        k = min(len(s), Yt.shape[0])
        Yt = Yt.copy()
        Yt[:k] *= signs[:k, None]
    return X, s, Yt


def cholesky(R) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == R``.

    Raises NumericalError naming the first non-positive pivot.
    """
    R = _as_matrix(R)
    n = R.shape[0]
    if R.shape != (n, n):
        raise ValueError(f"cholesky needs a square matrix, got {R.shape}")
    if not np.allclose(R, R.T, atol=1e-12, rtol=0.0):
        raise ValueError("cholesky needs a symmetric matrix")
    L = np.zeros_like(R)
    for j in range(n):
        pivot = R[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > 0.0:
            raise NumericalError(
                f"matrix is not positive definite: pivot {j} equals {pivot:.3e}")
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (R[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def complete_to_unitary(B, tol: float = 1e-10) -> np.ndarray:
    """Extend orthonormal columns ``B`` (M x K) to an M x M orthogonal matrix.

    The first K columns of the result are ``B``. The remaining columns come
    from Gram-Schmidt on the canonical basis vectors e_0, e_1, ... in index
    order, skipping any vector already (numerically) in the span.
    """
    B = _as_matrix(B)
    M, K = B.shape
    if K > M:
        raise ValueError(f"cannot have {K} orthonormal columns in dimension {M}")
    gram_dev = np.max(np.abs(B.T @ B - np.eye(K))) if K else 0.0
    if gram_dev > tol:
        raise ValueError(f"columns are not orthonormal (max Gram deviation {gram_dev:.3e})")
    Q = np.empty((M, M))
    Q[:, :K] = B
    filled = K
    for j in range(M):
        if filled == M:
            break
        v = np.zeros(M)
        v[j] = 1.0
        # two passes of classical Gram-Schmidt
        for _ in range(2):
            v -= Q[:, :filled] @ (Q[:, :filled].T @ v)
        nrm = np.linalg.norm(v)
        if nrm < 1e-6:
            continue
        Q[:, filled] = v / nrm
        filled += 1
    if filled != M:
        raise NumericalError(f"orthogonal completion stalled at {filled} of {M} columns")
    return Q


def haar_random_orthogonal(M: int, seed: int) -> np.ndarray:
    """Haar-distributed M x M real orthogonal matrix, reproducible from ``seed``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((M, M))
    Q, R = np.linalg.qr(Z)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def is_orthogonal(Q, atol: float = 1e-10) -> bool:
    Q = np.asarray(Q)
    return Q.ndim == 2 and Q.shape[0] == Q.shape[1] and \
        np.allclose(Q.T @ Q, np.eye(Q.shape[0]), atol=atol, rtol=0.0)
