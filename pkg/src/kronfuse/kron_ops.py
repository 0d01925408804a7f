"""Factor-space linear algebra for Kronecker-structured pairwise systems.

Conventions: score matrices are N x M (drugs x side effects), ``vec`` stacks
columns, and the pairwise kernel is ``K = K_S kron K_D``. Then
``(K_S kron K_D) vec(C) = vec(K_D C K_S^T)`` and the eigenvalue attached to
entry ``(i, j)`` of a spectral grid is ``lam_D[i] * lam_S[j]``. No NM x NM
matrix is ever formed here.
"""

from dataclasses import dataclass

import numpy as np

EIG_CLAMP = 1e-12


class KronOpsError(ValueError):
    pass


@dataclass(frozen=True)
class EigenSystem:
    """Orthonormal eigenvectors (columns) and ascending eigenvalues."""

    vectors: np.ndarray
    values: np.ndarray

    @property
    def size(self):
        return self.values.shape[0]

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def _check_symmetric(K, tol=1e-10):
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise KronOpsError(f"expected a square matrix, got shape {K.shape}")
    scale = max(1.0, float(np.abs(K).max(initial=0.0)))
    if np.abs(K - K.T).max(initial=0.0) > tol * scale:
        raise KronOpsError("matrix is not symmetric")
    return K


def sym_eig(K):
    K = _check_symmetric(K)
    values, vectors = np.linalg.eigh(0.5 * (K + K.T))
    return EigenSystem(vectors, values)


def kron_apply(K_S, K_D, C):
    """``K_D @ C @ K_S.T``, i.e. ``(K_S kron K_D) vec(C)`` unvectorized."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or K_D.shape != (C.shape[0], C.shape[0]) or K_S.shape != (C.shape[1], C.shape[1]):
        raise KronOpsError(
            f"dimension mismatch: K_D {K_D.shape}, C {C.shape}, K_S {K_S.shape}"
        )
    return K_D @ C @ K_S.T


def to_spectral(eig_D, eig_S, R):
    """Coordinates of ``vec(R)`` in the ``V_S kron V_D`` eigenbasis, as N x M."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (eig_D.size, eig_S.size):
        raise KronOpsError(f"expected {(eig_D.size, eig_S.size)} matrix, got {R.shape}")
    return eig_D.vectors.T @ R @ eig_S.vectors


def from_spectral(eig_D, eig_S, X):
    return eig_D.vectors @ X @ eig_S.vectors.T


def filter_solve(eig_D, eig_S, grid, R):
    """Apply the spectral filter ``grid``: ``V_D (grid * (V_D^T R V_S)) V_S^T``."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape != (eig_D.size, eig_S.size):
        raise KronOpsError(f"grid shape {grid.shape} does not match {(eig_D.size, eig_S.size)}")
    return from_spectral(eig_D, eig_S, grid * to_spectral(eig_D, eig_S, R))


def eigen_grid(eig_D, eig_S):
    """Outer product of clamped eigenvalues: the spectrum of ``K_S kron K_D``."""
    lam_D = np.where(np.abs(eig_D.values) < EIG_CLAMP, 0.0, eig_D.values)
    lam_S = np.where(np.abs(eig_S.values) < EIG_CLAMP, 0.0, eig_S.values)
    return np.outer(lam_D, lam_S)


def kronrls_filter(eig_D, eig_S, lam):
    """Shrinkage factors ``L / (L + lam)`` over the eigenvalue-product grid."""
    if lam <= 0:
        raise KronOpsError(f"lambda must be positive, got {lam}")
    prod = eigen_grid(eig_D, eig_S)
    return prod / (prod + lam)


def consensus_filter(eig_A, eig_B, sigma):
    """Factors ``1 / (1 + sigma - sigma * u)`` inverting ``(1+sigma) I - sigma A kron B``.

    Rows follow ``B`` (drug side), columns follow ``A`` (side-effect side).
    """
    if sigma < 0:
        raise KronOpsError(f"sigma must be nonnegative, got {sigma}")
    u = np.outer(eig_B.values, eig_A.values)
    denom = 1.0 + sigma - sigma * u
    if denom.min() <= 1e-12:
        raise KronOpsError(f"consensus system is singular (min denominator {denom.min():.3e})")
    return 1.0 / denom


def normalized_affinity(K):
    """``H^{-1/2} K H^{-1/2}`` with ``H`` the diagonal of row sums of ``K``."""
    K = np.asarray(K, dtype=np.float64)
    degree = K.sum(axis=1)
    bad = np.flatnonzero(degree <= 0)
    if bad.size:
        raise KronOpsError(f"nonpositive degree {degree[bad[0]]:.3e} in row {bad[0]}")
    s = 1.0 / np.sqrt(degree)
    A = K * s[:, None] * s[None, :]
    return 0.5 * (A + A.T)


def laplacian_quadratic(F_hat, A, B):
    """``vec(F)^T (I - A kron B) vec(F)`` evaluated in factor space."""
    return float(np.sum(F_hat * F_hat) - np.sum(F_hat * (B @ F_hat @ A.T)))
