"""Linear-algebra contracts used by the rest of the pipeline.

Sparse direct solves are delegated to SuperLU through scipy; the dense
symmetric eigensolver and the dense LU are numpy/LAPACK.  Everything here
is deterministic for fixed input.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInputError, SingularSystemError


class SparseFactor:
    """Reusable LU factorization handle for multiple right-hand sides."""

    def __init__(self, matrix):
        mat = sp.csc_matrix(matrix)
        if mat.shape[0] != mat.shape[1]:
            raise InvalidInputError(f"matrix is not square: {mat.shape}")
        try:
            self._lu = spla.splu(mat)
        except RuntimeError as exc:  # SuperLU reports singular factors this way
            raise SingularSystemError(f"sparse factorization failed: {exc}") from exc

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("sparse solve produced non-finite entries")
        return x


def sparse_solve(matrix, b):
    """Direct solve of a sparse square system."""
    return SparseFactor(matrix).solve(b)


def sym_eig(c):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    The input must be symmetric to 1e-12 relative; it is explicitly
    symmetrized before factorization.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InvalidInputError(f"matrix is not square: {c.shape}")
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("matrix has non-finite entries")
    scale = np.abs(c).max()
    if scale > 0.0 and np.abs(c - c.T).max() > 1e-12 * scale:
        raise InvalidInputError("matrix is not symmetric within 1e-12 relative")
    w, q = np.linalg.eigh(0.5 * (c + c.T))
    order = np.argsort(w)[::-1]
    return w[order], q[:, order]


def dense_solve(a, b):
    """Dense LU solve with partial pivoting."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    try:
        with warnings.catch_warnings():
            # zero pivots are re-raised as structured errors below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(a)
    except (ValueError, scipy.linalg.LinAlgError) as exc:
        raise SingularSystemError(f"dense factorization failed: {exc}") from exc
    # LAPACK getrf reports exact zero pivots through the factor diagonal
    diag = np.abs(np.diag(lu))
    if diag.min() == 0.0:
        raise SingularSystemError(
            f"dense factorization hit a zero pivot at index {int(np.argmin(diag))}"
        )
    x = scipy.linalg.lu_solve((lu, piv), b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("dense solve produced non-finite entries")
    return x
