import numpy as np
import pytest

from hybridbf.embedding import hermitian_basis, hermitian_coordinates, hermitian_embedding, hermitian_from_coordinates
from hybridbf.errors import ContractError


def rand_herm(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A + A.conj().T


def test_identity():
    np.testing.assert_array_equal(hermitian_embedding(np.eye(3)), np.eye(6))


def test_pauli_y_eigenvalues():
    E = hermitian_embedding(np.array([[0, 1j], [-1j, 0]]))
    assert np.allclose(E, E.T)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(E)), [-1, -1, 1, 1], atol=1e-14)


def test_eigenvalues_doubled(rng):
    H = rand_herm(rng, 5)
    lam = np.linalg.eigvalsh(H)
    np.testing.assert_allclose(np.linalg.eigvalsh(hermitian_embedding(H)), np.sort(np.repeat(lam, 2)), atol=1e-12)
    assert np.trace(hermitian_embedding(H)) == pytest.approx(2 * np.trace(H).real)


def test_trace_identity(rng):
    for _ in range(100):
        n = int(rng.integers(1, 6))
        A, X = rand_herm(rng, n), rand_herm(rng, n)
        lhs = np.trace(A @ X).real
        rhs = 0.5 * np.trace(hermitian_embedding(A) @ hermitian_embedding(X))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_rejects_non_hermitian_and_non_square():
    with pytest.raises(ContractError):
        hermitian_embedding(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ContractError):
        hermitian_embedding(np.zeros((2, 3)))


def test_basis_coordinates_roundtrip(rng):
    n = 4
    basis = hermitian_basis(n)
    assert basis.shape == (16, 4, 4)
    assert not basis.flags.writeable
    X = rand_herm(rng, n)
    A = rand_herm(rng, n)
    x = np.real(np.einsum("kij,ji->k", basis.conj(), X)) / np.real(np.einsum("kij,kji->k", basis.conj(), basis))
    np.testing.assert_allclose(hermitian_from_coordinates(x, n), X, atol=1e-12)
    assert hermitian_coordinates(A, n) @ x == pytest.approx(np.trace(A @ X).real, rel=1e-12)
