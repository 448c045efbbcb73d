"""Dense kernels used by the pipeline.

Column-pivoted Householder QR, LU with partial pivoting, a symmetric
eigensolver (Householder tridiagonalisation + implicit QL) and the unitary
3D discrete Fourier transform. The O(n^3) loops live in :mod:`._core`.
"""
from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import ConvergenceError, SingularMatrixError, ValidationError

PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class QrcpResult:
    Q: np.ndarray
    R: np.ndarray
    perm: np.ndarray


@dataclass(frozen=True)
class LuFactors:
    lu: np.ndarray
    piv: np.ndarray
    bad_pivot: int  # -1 when every pivot cleared the tolerance
    tol: float

    @property
    def singular(self):
        return self.bad_pivot >= 0


def _as_matrix(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or min(A.shape) < 1:
        raise ValidationError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    return A


def qrcp(A, max_rank=None, backend=None):
    """QR with greedy column pivoting, ``A[:, perm] = Q @ R``.

    ``max_rank`` stops after that many Householder steps; ``perm`` still
    lists every column, the first ``max_rank`` in selection order.
    """
    A = _as_matrix(A)
    m, n = A.shape
    k = min(m, n) if max_rank is None else int(max_rank)
    at = np.ascontiguousarray(A.T).copy()
    Q, R, perm = _core.get_backend(backend).qrcp(at, k)
    return QrcpResult(Q=Q, R=R, perm=perm)


def lu_factor(A, backend=None):
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValidationError(f"LU needs a square matrix, got {A.shape}")
    norm_inf = np.abs(A).sum(axis=1).max()
    tol = PIVOT_RTOL * norm_inf
    lu = np.ascontiguousarray(A).copy()
    piv, bad = _core.get_backend(backend).lu_factor(lu, tol)
    return LuFactors(lu=lu, piv=piv, bad_pivot=int(bad), tol=tol)


def lu_solve(A, B, backend=None):
    """Solve ``A X = B``; ``A`` may be a matrix or a :class:`LuFactors`."""
    f = A if isinstance(A, LuFactors) else lu_factor(A, backend=backend)
    if f.singular:
        raise SingularMatrixError(
            f"matrix is singular to working precision at pivot {f.bad_pivot}",
            pivot_index=f.bad_pivot,
            pivot_value=float(f.lu[f.bad_pivot, f.bad_pivot]),
        )
    B = np.asarray(B, dtype=float)
    vec = B.ndim == 1
    B2 = np.ascontiguousarray(B.reshape(B.shape[0], -1))
    if B2.shape[0] != f.lu.shape[0]:
        raise ValidationError(f"right-hand side has {B2.shape[0]} rows, expected {f.lu.shape[0]}")
    X = _core.get_backend(backend).lu_solve(f.lu, f.piv, B2)
    return X[:, 0] if vec else X


def lu_invert(A, backend=None):
    A = _as_matrix(A)
    return lu_solve(A, np.eye(A.shape[0]), backend=backend)


def sym_eig(A, vectors=True, backend=None, max_iter=60):
    """Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.

    Returns ``(w, V)`` or just ``w`` when ``vectors`` is false. The input is
    symmetrised; asymmetry above 1e-8 relative is rejected.
    """
    A = _as_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValidationError(f"sym_eig needs a square matrix, got {A.shape}")
    fro = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-8 * fro:
        raise ValidationError("matrix is not symmetric within 1e-8 relative")
    k = _core.get_backend(backend)
    a = np.ascontiguousarray(0.5 * (A + A.T))
    d, e = k.tridiagonalize(a, bool(vectors))
    z = np.ascontiguousarray(a.T) if vectors else np.zeros((n, 0))
    info = k.tridiagonal_ql(d, e, z, bool(vectors), int(max_iter))
    if info >= 0:
        raise ConvergenceError(f"QL iteration did not converge for eigenvalue {info}")
    order = np.argsort(d, kind="stable")
    w = d[order]
    if not vectors:
        return w
    return w, np.ascontiguousarray(z[order].T)


def dft(x, dims, inverse=False):
    """Unitary 3D DFT over grid ``dims``; columns of a 2-D ``x`` are separate fields.

    Grid points are flattened in C order, matching :class:`~lowrank_gw.model.Grid`.
    """
    x = np.asarray(x)
    dims = tuple(int(d) for d in dims)
    nr = int(np.prod(dims))
    if x.shape[0] != nr:
        raise ValidationError(f"array has {x.shape[0]} rows, grid has {nr} points")
    cols = x.shape[1:]
    xs = x.reshape(dims + cols)
    op = np.fft.ifftn if inverse else np.fft.fftn
    return op(xs, axes=(0, 1, 2), norm="ortho").reshape((nr,) + cols)
