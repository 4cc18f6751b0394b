import numpy as np
import pytest
import scipy.sparse as sp

from sbmrom.errors import InvalidInputError, SingularSystemError
from sbmrom.solver_backend import SparseFactor, dense_solve, sparse_solve, sym_eig


def test_sparse_identity():
    b = np.array([1.0, -2.0, 3.0])
    x = sparse_solve(sp.eye(3, format="csr"), b)
    np.testing.assert_allclose(x, b)


def test_sparse_hand_elimination():
    a = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    x = sparse_solve(a, np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [0.2, 0.6], atol=1e-14)


def test_sparse_random_spd_residual():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(100, 100))
    a = sp.csr_matrix(m @ m.T + 100.0 * np.eye(100))
    b = rng.normal(size=100)
    x = sparse_solve(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_sparse_singular_reports():
    a = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularSystemError):
        sparse_solve(a, np.array([1.0, 1.0]))


def test_sparse_factor_reuse():
    a = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    f = SparseFactor(a)
    for b in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        np.testing.assert_allclose(a @ f.solve(b), b, atol=1e-14)


def test_sym_eig_diagonal():
    w, q = sym_eig(np.diag([1.0, 5.0, 3.0]))
    np.testing.assert_allclose(w, [5.0, 3.0, 1.0])


def test_sym_eig_two_by_two():
    w, _ = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(w, [3.0, 1.0], atol=1e-14)


def test_sym_eig_rank_one():
    v = np.array([1.0, -2.0, 0.5])
    w, q = sym_eig(np.outer(v, v))
    assert w[0] == pytest.approx(v @ v)
    np.testing.assert_allclose(w[1:], 0.0, atol=1e-14)
    # residual and orthogonality contracts
    c = np.outer(v, v)
    assert np.abs(c @ q - q * w[None, :]).max() <= 1e-10 * np.abs(c).max()
    np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-10)


def test_sym_eig_rejects_asymmetric_and_nonfinite():
    with pytest.raises(InvalidInputError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        sym_eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_dense_solve_and_singularity():
    a = np.array([[2.0, 0.0], [0.0, 4.0]])
    np.testing.assert_allclose(dense_solve(a, np.array([2.0, 8.0])), [1.0, 2.0])
    with pytest.raises(SingularSystemError):
        dense_solve(np.zeros((2, 2)), np.ones(2))


def test_deterministic_solves():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(60, 60))
    a = sp.csr_matrix(m @ m.T + 50 * np.eye(60))
    b = rng.normal(size=60)
    x1 = sparse_solve(a, b)
    x2 = sparse_solve(a.copy(), b.copy())
    assert np.array_equal(x1, x2)
