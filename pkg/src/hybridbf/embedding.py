"""Real-symmetric embedding of Hermitian matrices.

``emb(H) = [[Re H, -Im H], [Im H, Re H]]`` is real symmetric, has the
eigenvalues of ``H`` each with doubled multiplicity, and turns Hermitian
traces into real ones: ``tr{A X} = 1/2 tr{emb(A) emb(X)}``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ContractError

__all__ = ["hermitian_embedding", "hermitian_basis", "hermitian_coordinates", "hermitian_from_coordinates"]

HERMITIAN_TOL = 1e-10


def hermitian_embedding(H, tol=HERMITIAN_TOL):
    """Map an ``n x n`` Hermitian matrix to a ``2n x 2n`` real symmetric one.

    Raises
    ------
    ContractError
        If ``H`` is not square or not Hermitian within ``tol`` (relative to
        ``max(1, max|H|)``).
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {H.shape}")
    H = H.astype(complex, copy=False)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if H.size and np.max(np.abs(H - H.conj().T)) > tol * scale:
        raise ContractError("matrix is not Hermitian")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


@lru_cache(maxsize=32)
def hermitian_basis(n):
    """Orthogonal real basis of the ``n x n`` Hermitian matrices.

    Order: ``n`` diagonal units, then for each ``i < j`` the symmetric real
    pair and the antisymmetric imaginary pair.  Returns ``(n*n, n, n)``.
    """
    basis = np.zeros((n * n, n, n), dtype=complex)
    for i in range(n):
        basis[i, i, i] = 1.0
    k = n
    for i in range(n):
        for j in range(i + 1, n):
            basis[k, i, j] = basis[k, j, i] = 1.0
            basis[k + 1, i, j] = 1j
            basis[k + 1, j, i] = -1j
            k += 2
    basis.setflags(write=False)
    return basis


def hermitian_coordinates(A, n=None):
    """Coefficients ``c`` such that ``tr{A X} = c @ x`` for ``X = sum x_k E_k``.

    ``A`` need not be Hermitian; only its Hermitian part contributes to the
    real part of the trace, which is what is returned.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0] if n is None else n
    basis = hermitian_basis(n)
    return np.real(np.einsum("ij,kji->k", A, basis))


def hermitian_from_coordinates(x, n):
    return np.tensordot(np.asarray(x, dtype=float), hermitian_basis(n), axes=1)
