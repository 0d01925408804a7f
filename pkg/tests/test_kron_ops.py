import numpy as np
import pytest

from kronfuse.kron_ops import (
    KronOpsError,
    consensus_filter,
    eigen_grid,
    filter_solve,
    kron_apply,
    kronrls_filter,
    laplacian_quadratic,
    normalized_affinity,
    sym_eig,
)

from conftest import random_psd


def vec(X):
    return X.reshape(-1, order="F")


def unvec(x, n, m):
    return x.reshape((n, m), order="F")


def test_sym_eig_basic_cases(rng):
    np.testing.assert_allclose(sym_eig(np.eye(4)).values, 1.0)
    np.testing.assert_allclose(sym_eig(np.diag([5.0, 2.0])).values, [2.0, 5.0])
    A = rng.standard_normal((8, 8))
    K = A + A.T
    e = sym_eig(K)
    assert np.abs(e.reconstruct() - K).max() <= 1e-8 * max(1, np.abs(K).max())
    assert np.abs(e.vectors.T @ e.vectors - np.eye(8)).max() <= 1e-10


def test_sym_eig_rejects_nonsymmetric():
    with pytest.raises(KronOpsError, match="not symmetric"):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_kron_apply_matches_explicit_kronecker(rng):
    for _ in range(100):
        n, m = rng.integers(1, 5, size=2)
        K_D = rng.standard_normal((n, n))
        K_S = rng.standard_normal((m, m))
        C = rng.standard_normal((n, m))
        dense = unvec(np.kron(K_S, K_D) @ vec(C), n, m)
        assert np.abs(kron_apply(K_S, K_D, C) - dense).max() <= 1e-10


def test_kron_apply_dimension_mismatch():
    with pytest.raises(KronOpsError):
        kron_apply(np.eye(3), np.eye(2), np.zeros((3, 2)))


def test_unit_filter_is_identity(rng):
    for n, m in [(2, 3), (5, 4), (7, 7)]:
        eD, eS = sym_eig(random_psd(rng, n)), sym_eig(random_psd(rng, m))
        R = rng.standard_normal((n, m))
        assert np.abs(filter_solve(eD, eS, np.ones((n, m)), R) - R).max() <= 1e-10


def test_grid_orientation_against_dense_spectrum(rng):
    n, m = 4, 3
    K_D, K_S = random_psd(rng, n), random_psd(rng, m)
    eD, eS = sym_eig(K_D), sym_eig(K_S)
    # grid[i, j] is the eigenvalue of K_S kron K_D for eigenvector v_S[:, j] kron v_D[:, i]
    K = np.kron(K_S, K_D)
    grid = eigen_grid(eD, eS)
    for i in range(n):
        for j in range(m):
            x = np.kron(eS.vectors[:, j], eD.vectors[:, i])
            np.testing.assert_allclose(K @ x, grid[i, j] * x, atol=1e-10)


def test_kronrls_filter_matches_dense_inverse(rng):
    n, m, lam = 6, 5, 2.0
    K_D, K_S = random_psd(rng, n), random_psd(rng, m)
    R = rng.standard_normal((n, m))
    K = np.kron(K_S, K_D)
    dense = unvec(K @ np.linalg.solve(K + lam * np.eye(n * m), vec(R)), n, m)
    eD, eS = sym_eig(K_D), sym_eig(K_S)
    got = filter_solve(eD, eS, kronrls_filter(eD, eS, lam), R)
    assert np.abs(got - dense).max() <= 1e-10


def test_kronrls_filter_range_and_shrinkage(rng):
    eD, eS = sym_eig(random_psd(rng, 5)), sym_eig(random_psd(rng, 4))
    g1, g2 = kronrls_filter(eD, eS, 0.5), kronrls_filter(eD, eS, 3.0)
    assert g1.min() >= 0 and g1.max() < 1
    assert np.all(g2 <= g1)
    with pytest.raises(KronOpsError):
        kronrls_filter(eD, eS, 0.0)


def test_eigen_grid_clamps_tiny_values():
    eD = sym_eig(np.diag([1e-14, 2.0]))
    eS = sym_eig(np.diag([3.0, 1.0]))
    grid = eigen_grid(eD, eS)
    assert grid[0].tolist() == [0.0, 0.0]


def test_consensus_filter_trivial_entries(rng):
    eA, eB = sym_eig(np.eye(3)), sym_eig(np.eye(2))
    np.testing.assert_array_equal(consensus_filter(eA, eB, 0.0), 1.0)
    np.testing.assert_allclose(consensus_filter(eA, eB, 0.5), 1.0)


def test_consensus_filter_matches_dense_solve(rng):
    for n, m in [(3, 4), (6, 5), (8, 8)]:
        A = normalized_affinity(np.abs(random_psd(rng, m)) + np.eye(m))
        B = normalized_affinity(np.abs(random_psd(rng, n)) + np.eye(n))
        sigma = 0.7
        R = rng.standard_normal((n, m))
        dense = np.linalg.solve((1 + sigma) * np.eye(n * m) - sigma * np.kron(A, B), vec(R))
        eA, eB = sym_eig(A), sym_eig(B)
        got = filter_solve(eB, eA, consensus_filter(eA, eB, sigma), R)
        assert np.abs(got - unvec(dense, n, m)).max() <= 1e-8


def test_consensus_filter_rejects_singular_system():
    e = sym_eig(np.diag([1.0, 2.0]))
    with pytest.raises(KronOpsError, match="singular"):
        consensus_filter(e, e, 1.0)
    with pytest.raises(KronOpsError):
        consensus_filter(e, e, -0.1)


def test_normalized_affinity_cases(rng):
    np.testing.assert_allclose(normalized_affinity(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(normalized_affinity(np.ones((3, 3))), np.full((3, 3), 1 / 3))
    for _ in range(20):
        X = rng.random((7, 7))
        A = normalized_affinity(X + X.T)
        # power iteration oracle for the spectral radius
        x = rng.random(7)
        for _ in range(500):
            x = A @ x
            x /= np.linalg.norm(x)
        assert x @ A @ x <= 1 + 1e-10


def test_normalized_affinity_names_bad_row():
    K = np.array([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(KronOpsError, match="row 1"):
        normalized_affinity(K)


def test_laplacian_quadratic_matches_dense_and_is_nonnegative(rng):
    n, m = 5, 4
    A = normalized_affinity(rng.random((m, m)) + rng.random((m, m)).T)
    B = normalized_affinity(rng.random((n, n)) + rng.random((n, n)).T)
    L = np.eye(n * m) - np.kron(A, B)
    for _ in range(20):
        X = rng.standard_normal((n, m))
        q = laplacian_quadratic(X, A, B)
        assert q == pytest.approx(vec(X) @ L @ vec(X), rel=1e-10, abs=1e-12)
        assert q >= -1e-8
