import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slqspec.exceptions import InvalidInputError
from slqspec.linalg import (TridiagonalMatrix, axpy, dot, norm, read_dense_matrix,
                            read_eigenvalues, sym_eig_dense, sym_tridiag_eig_firstrow,
                            write_dense_matrix, write_eigenvalues)

from conftest import random_symmetric


def test_identity_and_diagonal():
    np.testing.assert_array_equal(sym_eig_dense(np.eye(3)).eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(sym_eig_dense(np.diag([3.0, 1.0, 2.0])).eigenvalues, [3, 2, 1])


def test_dense_reconstruction():
    A = random_symmetric(50, 0)
    dec = sym_eig_dense(A)
    Q, lam = dec.eigenvectors, dec.eigenvalues
    assert np.max(np.abs((Q * lam) @ Q.T - A)) <= 1e-10 * (1 + np.max(np.abs(A)))
    assert np.all(np.diff(lam) <= 0)


def test_dense_rejects_nonfinite():
    A = np.eye(2)
    A[0, 1] = np.nan
    with pytest.raises(InvalidInputError):
        sym_eig_dense(A)


def test_tridiag_scalar_and_2x2():
    dec = sym_tridiag_eig_firstrow(TridiagonalMatrix([2.0], []))
    assert dec.eigenvalues.tolist() == [2.0]
    assert dec.first_row_sq.tolist() == [1.0]
    dec = sym_tridiag_eig_firstrow(TridiagonalMatrix([0.0, 0.0], [1.0]))
    np.testing.assert_allclose(dec.eigenvalues, [1.0, -1.0], atol=1e-15)
    np.testing.assert_allclose(dec.first_row_sq, [0.5, 0.5], atol=1e-15)


def _check_against_dense(diag, off):
    T = TridiagonalMatrix(diag, off)
    fast = sym_tridiag_eig_firstrow(T)
    ref = sym_eig_dense(T.to_dense())
    np.testing.assert_allclose(fast.eigenvalues, ref.eigenvalues, rtol=0, atol=1e-10)
    np.testing.assert_allclose(fast.first_row_sq, ref.eigenvectors[0] ** 2, rtol=0, atol=1e-9)
    assert abs(fast.first_row_sq.sum() - 1.0) <= 1e-10


def test_tridiag_matches_dense_30():
    rng = np.random.default_rng(3)
    _check_against_dense(rng.standard_normal(30), np.abs(rng.standard_normal(29)) + 0.1)


def test_tridiag_handles_tiny_offdiagonals():
    rng = np.random.default_rng(4)
    off = np.abs(rng.standard_normal(19))
    off[[3, 11]] = 1e-300
    _check_against_dense(rng.standard_normal(20), off)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 25), st.integers(0, 2**31 - 1))
def test_tridiag_property(m, seed):
    rng = np.random.default_rng(seed)
    _check_against_dense(rng.standard_normal(m) * 3, rng.standard_normal(m - 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_dense_trace_and_order(n, seed):
    A = random_symmetric(n, seed) * 10
    lam = sym_eig_dense(A).eigenvalues
    assert np.all(np.diff(lam) <= 0)
    assert abs(lam.sum() - np.trace(A)) <= 1e-9 * n * (1 + np.max(np.abs(A)))


def test_vector_primitives():
    assert dot([1, 0], [0, 1]) == 0
    assert norm([3, 4]) == 5
    np.testing.assert_array_equal(axpy(2, [1, 2], [1, 1]), [3, 5])
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal(1000), rng.standard_normal(1000)
    assert dot(u, v) == dot(u, v)
    assert dot(u, v) == dot(u[::-1], v[::-1])  # correctly rounded, so order free
    with pytest.raises(InvalidInputError):
        dot([1, 2], [1, 2, 3])


def test_matrix_and_eigenvalue_files(tmp_path):
    A = random_symmetric(6, 1)
    write_dense_matrix(tmp_path / "a.txt", A)
    np.testing.assert_array_equal(read_dense_matrix(tmp_path / "a.txt"), A)
    lam = sym_eig_dense(A).eigenvalues
    write_eigenvalues(tmp_path / "e.txt", lam)
    np.testing.assert_array_equal(read_eigenvalues(tmp_path / "e.txt"), lam)
    (tmp_path / "bad.txt").write_text("3\n1 2 3\n")
    with pytest.raises(InvalidInputError):
        read_dense_matrix(tmp_path / "bad.txt")
