"""Symmetric-matrix packing and small PSD linear algebra helpers.

Symmetric matrices are packed as the upper triangle in column-major order
with off-diagonal entries scaled by sqrt(2), making the packing an isometry
for the trace inner product: <A, B> = svec(A) . svec(B).
"""

import numpy as np


def triangle_indices(n):
    """(i, j) pairs of the upper triangle, column-major order."""
    return [(i, j) for j in range(n) for i in range(j + 1)]


def triangle_size(n):
    return n * (n + 1) // 2


def svec(mat):
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    out = np.empty(triangle_size(n))
    for k, (i, j) in enumerate(triangle_indices(n)):
        out[k] = mat[i, j] if i == j else np.sqrt(2.0) * 0.5 * (mat[i, j] + mat[j, i])
    return out


def smat(vec):
    vec = np.asarray(vec, dtype=float)
    n = int((np.sqrt(8 * vec.size + 1) - 1) / 2)
    out = np.zeros((n, n))
    for k, (i, j) in enumerate(triangle_indices(n)):
        if i == j:
            out[i, j] = vec[k]
        else:
            out[i, j] = out[j, i] = vec[k] / np.sqrt(2.0)
    return out


def expand_matrix(n):
    """Map from packed coordinates to the full column-major flattening.

    Returns E of shape (n*n, triangle_size(n)) with vec_F(M) = E @ svec(M).
    """
    E = np.zeros((n * n, triangle_size(n)))
    for k, (i, j) in enumerate(triangle_indices(n)):
        if i == j:
            E[i + j * n, k] = 1.0
        else:
            E[i + j * n, k] = E[j + i * n, k] = 1.0 / np.sqrt(2.0)
    return E


def pack_matrix(n):
    """Map from the full column-major flattening to packed coordinates,
    symmetrizing: svec(sym(M)) = P @ vec_F(M)."""
    P = np.zeros((triangle_size(n), n * n))
    for k, (i, j) in enumerate(triangle_indices(n)):
        if i == j:
            P[k, i + j * n] = 1.0
        else:
            P[k, i + j * n] = P[k, j + i * n] = np.sqrt(2.0) * 0.5
    return P


def psd_factor(mat, floor=-1e-9):
    """Factor a PSD matrix as L @ L.T via an eigendecomposition.

    Raises ValueError when the smallest eigenvalue is below ``floor``;
    eigenvalues in [floor, 0) are clipped to zero.
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals.min() < floor:
        raise ValueError(
            f"matrix is not positive semidefinite (min eigenvalue {vals.min():.3e})")
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)
