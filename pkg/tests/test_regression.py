import numpy as np
import pytest

from dporl.regression import GramAccumulator, gram, spd_solve, weighted_ridge


def gauss_jordan_inverse(M):
    """Plain Gauss-Jordan elimination with partial pivoting."""
    n = M.shape[0]
    aug = np.hstack([M.astype(float), np.eye(n)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def test_solve_scaled_identity():
    acc = GramAccumulator(2 * np.eye(3), np.full(3, 4.0), 1.0, 1.0)
    np.testing.assert_allclose(spd_solve(acc, acc.b), [2.0, 2.0, 2.0])


def test_solve_rank_one_update():
    e1 = np.eye(4)[0]
    acc = GramAccumulator(np.eye(4) + np.outer(e1, e1), e1, 1.0, 1.0)
    np.testing.assert_allclose(spd_solve(acc, e1), 0.5 * e1, atol=1e-15)


def test_solve_matches_dense_oracle():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(10, 10))
    M = B @ B.T + np.eye(10)
    rhs = rng.normal(size=10)
    acc = GramAccumulator(M, rhs, 1.0, 1.0)
    np.testing.assert_allclose(spd_solve(acc, rhs), gauss_jordan_inverse(M) @ rhs, atol=1e-8)
    X = rng.normal(size=(5, 10))
    expected = np.einsum("ij,jk,ik->i", X, gauss_jordan_inverse(M), X)
    np.testing.assert_allclose(acc.inverse_quadratic(X), expected, rtol=1e-8)


def test_solve_multiple_right_hand_sides():
    M = np.diag([1.0, 2.0, 4.0])
    acc = GramAccumulator(M, np.zeros(3), 1.0, 1.0)
    np.testing.assert_allclose(spd_solve(acc, np.eye(3)), np.diag([1.0, 0.5, 0.25]))


def test_asymmetric_gram_rejected():
    M = np.eye(3)
    M[0, 1] = 1e-3
    with pytest.raises(ValueError):
        GramAccumulator(M, np.zeros(3), 1.0, 1.0)


def test_noise_pushing_below_floor_is_clamped():
    M = np.eye(2) - np.diag([3.0, 0.0])  # eigenvalue -2 after noise
    acc = GramAccumulator(M, np.ones(2), 1.0, 1.0).condition()
    assert acc.clamped
    assert acc.min_eigenvalue == pytest.approx(1.0)


def test_ridge_without_data():
    w, acc = weighted_ridge(np.zeros((0, 3)), np.zeros(0), None, 1.0)
    assert (w == 0).all() and not acc.clamped


def test_ridge_single_sample():
    w, _ = weighted_ridge(np.array([[1.0, 0.0]]), np.array([1.0]), None, 1.0)
    np.testing.assert_allclose(w, [0.5, 0.0])


def test_weighted_ridge_matches_normal_equations():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 4))
    y = rng.normal(size=50)
    sig2 = rng.uniform(1, 9, size=50)
    lam = 0.7
    w, _ = weighted_ridge(X, y, sig2, lam)
    W = np.diag(1 / sig2)
    oracle = gauss_jordan_inverse(X.T @ W @ X + lam * np.eye(4)) @ (X.T @ W @ y)
    np.testing.assert_allclose(w, oracle, atol=1e-8)


def test_gram_adds_noise_matrix():
    X = np.array([[1.0, 2.0]])
    N = np.array([[0.5, 0.1], [0.1, 0.2]])
    np.testing.assert_allclose(gram(X, None, 2.0, N), np.outer(X[0], X[0]) + 2 * np.eye(2) + N)


def test_ridge_rejects_bad_lambda():
    with pytest.raises(ValueError):
        weighted_ridge(np.zeros((1, 2)), np.zeros(1), None, 0.0)
