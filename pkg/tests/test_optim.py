import itertools

import numpy as np
import pytest

from kronfuse.optim import SimplexQP, SimplexQPError, kkt_residual, project_simplex, solve_simplex_qp


def simplex_grid(V, step=0.01):
    k = int(round(1 / step))
    for c in itertools.product(range(k + 1), repeat=V - 1):
        if sum(c) <= k:
            yield np.array([*c, k - sum(c)], dtype=float) / k


def random_qp(rng, V, ridge=0.5):
    X = rng.standard_normal((V, V + 1))
    return SimplexQP(X @ X.T / 2 + ridge * np.eye(V), rng.standard_normal(V) * 2)


def test_uniform_for_identity():
    w = solve_simplex_qp(SimplexQP(np.eye(3), np.zeros(3)))
    np.testing.assert_allclose(w, np.full(3, 1 / 3), atol=1e-10)


def test_single_view():
    np.testing.assert_array_equal(solve_simplex_qp(SimplexQP(np.eye(1) * 3, [2.0])), [1.0])


def test_grid_oracle(rng):
    grid = np.array(list(simplex_grid(3)))
    for _ in range(20):
        qp = random_qp(rng, 3)
        w = solve_simplex_qp(qp)
        best = min(qp.objective(g) for g in grid)
        assert qp.objective(w) <= best + 1e-4
        assert abs(w.sum() - 1) <= 1e-10 and w.min() >= 0
        assert kkt_residual(qp, w) <= 1e-10


def test_matches_exhaustive_face_enumeration(rng):
    # exact minimizer: best feasible stationary point over all faces
    for _ in range(20):
        V = 5
        qp = random_qp(rng, V, ridge=0.1)
        best = np.inf
        for r in range(1, V + 1):
            for face in itertools.combinations(range(V), r):
                idx = list(face)
                M = np.zeros((r + 1, r + 1))
                M[:r, :r] = 2 * qp.G[np.ix_(idx, idx)]
                M[:r, r] = -1
                M[r, :r] = 1
                sol = np.linalg.solve(M, np.r_[qp.h[idx], 1.0])[:r]
                if sol.min() >= -1e-12:
                    w = np.zeros(V)
                    w[idx] = sol
                    best = min(best, qp.objective(w))
        w = solve_simplex_qp(qp)
        assert qp.objective(w) == pytest.approx(best, abs=1e-10)


def test_descent_from_warm_start(rng):
    for _ in range(20):
        qp = random_qp(rng, 6)
        w0 = project_simplex(rng.random(6))
        assert qp.objective(solve_simplex_qp(qp, w0)) <= qp.objective(w0) + 1e-12


def test_permutation_equivariance(rng):
    for _ in range(10):
        qp = random_qp(rng, 5)
        p = rng.permutation(5)
        w = solve_simplex_qp(qp)
        wp = solve_simplex_qp(SimplexQP(qp.G[np.ix_(p, p)], qp.h[p]))
        np.testing.assert_allclose(wp, w[p], atol=1e-8)


def test_project_simplex_properties(rng):
    for _ in range(50):
        v = rng.standard_normal(7) * 3
        w = project_simplex(v)
        assert abs(w.sum() - 1) <= 1e-12 and w.min() >= 0
        # projection optimality: <v - w, u - w> <= 0 for vertices u
        for k in range(7):
            u = np.eye(7)[k]
            assert (v - w) @ (u - w) <= 1e-10
    np.testing.assert_allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])


def test_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        SimplexQP(np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2))


def test_degenerate_convexity_warns_and_solves(caplog):
    qp = SimplexQP(np.zeros((3, 3)), np.array([1.0, 3.0, 2.0]))
    with caplog.at_level("WARNING"):
        w = solve_simplex_qp(qp)
    assert "ridge" in caplog.text
    np.testing.assert_allclose(w, [0, 1, 0], atol=1e-8)


def test_iteration_cap_raises_with_best_iterate(rng):
    qp = random_qp(rng, 8, ridge=1e-3)
    with pytest.raises(SimplexQPError) as info:
        solve_simplex_qp(qp, tol=1e-300, max_iter=2)
    best = info.value.best
    assert best is not None and abs(best.sum() - 1) <= 1e-12
