"""Interpolative separable density fitting of orbital-pair matrices.

The pair matrix ``M`` (grid points x pairs, column ``i + N1*j`` holding
``psi_a[:, i] * psi_b[:, j]``) is approximated as ``P @ C`` where ``C`` is
``M`` restricted to a set of interpolation points and ``P`` is the least
squares auxiliary basis. The fit uses the separable structure of ``M C^T``
and ``C C^T`` and never forms ``M``.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import GuardError, SingularMatrixError, ValidationError
from .linalg import lu_solve, qrcp, sym_eig
from .model import pair_products

PAIR_SETS = ("vc", "vn", "nn")
MATERIALIZE_MAX = 2**26
PINV_RTOL = 1e-12


@dataclass(frozen=True)
class IsdfDecomposition:
    label: str
    k_mu: float
    n_mu: int
    point_indices: np.ndarray
    P: np.ndarray


def pair_set(es, label):
    """Wavefunction factors ``(psi_a, psi_b)`` for a pair-set label."""
    if label == "vc":
        return es.psi_v, es.psi_c
    if label == "vn":
        return es.psi_v, es.psi
    if label == "nn":
        return es.psi, es.psi
    raise ValidationError(f"unknown pair set {label!r}; expected one of {PAIR_SETS}")


def num_aux(k_mu, n1, n2):
    """``round(k_mu * sqrt(n1 * n2))``; callers clamp to the grid size."""
    if not k_mu > 0:
        raise ValidationError(f"ISDF coefficient must be positive, got {k_mu!r}")
    return int(math.floor(k_mu * math.sqrt(n1 * n2) + 0.5))


def clamp_aux(n_mu, n_r, n_pairs=None):
    upper = n_r if n_pairs is None else min(n_r, n_pairs)
    return max(1, min(int(n_mu), upper))


def select_interpolation_points(psi_a, psi_b, n_mu, method="qrcp_direct", seed=0):
    """Pick ``n_mu`` grid points by QRCP of the transposed pair matrix.

    ``qrcp_sketched`` first compresses the pair rows with a seeded Gaussian
    sketch of ``2 * n_mu`` rows. Indices come back sorted.
    """
    psi_a = np.asarray(psi_a, dtype=float)
    psi_b = np.asarray(psi_b, dtype=float)
    n_r = psi_a.shape[0]
    n_mu = int(n_mu)
    if n_mu > n_r:
        raise ValidationError(f"cannot select {n_mu} points from a {n_r}-point grid")
    if n_mu < 1:
        raise ValidationError("need at least one interpolation point")
    Z = pair_products(psi_a, psi_b).T
    if method == "qrcp_sketched":
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((2 * n_mu, Z.shape[0])) @ Z
    elif method != "qrcp_direct":
        raise ValidationError(f"unknown point selector {method!r}")
    res = qrcp(Z, max_rank=n_mu)
    return np.sort(res.perm[:n_mu])


def _gram_solve(G, rhs):
    """Solve ``G X = rhs`` for the symmetric PSD Gram matrix, pseudo-inverse on failure."""
    try:
        return lu_solve(G, rhs)
    except SingularMatrixError:
        pass
    w, U = sym_eig(G)
    keep = w > PINV_RTOL * max(abs(w[-1]), abs(w[0]))
    if not np.any(keep):
        raise SingularMatrixError("ISDF Gram matrix is numerically zero")
    Uk = U[:, keep]
    return Uk @ ((Uk.T @ rhs) / w[keep][:, None])


def fit_auxiliary_basis(psi_a, psi_b, point_indices, label="vc", k_mu=float("nan")):
    psi_a = np.asarray(psi_a, dtype=float)
    psi_b = np.asarray(psi_b, dtype=float)
    idx = np.asarray(point_indices, dtype=np.intp)
    n_r = psi_a.shape[0]
    if idx.ndim != 1 or idx.size == 0:
        raise ValidationError("point_indices must be a non-empty 1-D array")
    if idx.min() < 0 or idx.max() >= n_r:
        raise ValidationError("interpolation point outside the grid")
    if np.unique(idx).size != idx.size:
        raise ValidationError("interpolation points must be distinct")
    A = psi_a @ psi_a[idx].T
    B = psi_b @ psi_b[idx].T
    G = A[idx] * B[idx]
    P = _gram_solve(0.5 * (G + G.T), (A * B).T).T
    return IsdfDecomposition(label=label, k_mu=k_mu, n_mu=idx.size, point_indices=idx, P=P)


def decompose(es, label, k_mu, method="qrcp_direct", seed=0):
    """Points plus auxiliary basis for one of the ``vc``/``vn``/``nn`` pair sets."""
    psi_a, psi_b = pair_set(es, label)
    n_pairs = psi_a.shape[1] * psi_b.shape[1]
    n_mu = clamp_aux(num_aux(k_mu, psi_a.shape[1], psi_b.shape[1]), es.grid.n_r, n_pairs)
    idx = select_interpolation_points(psi_a, psi_b, n_mu, method=method, seed=seed)
    return fit_auxiliary_basis(psi_a, psi_b, idx, label=label, k_mu=k_mu)


def _guard(n_r, n1, n2):
    if n_r * n1 * n2 > MATERIALIZE_MAX:
        raise GuardError(f"pair matrix of {n_r}x{n1 * n2} exceeds the 2^26-entry guard")


def isdf_reconstruction_error(psi_a, psi_b, dec):
    """Relative Frobenius error ``||M - P C|| / ||M||``."""
    psi_a = np.asarray(psi_a, dtype=float)
    psi_b = np.asarray(psi_b, dtype=float)
    _guard(psi_a.shape[0], psi_a.shape[1], psi_b.shape[1])
    M = pair_products(psi_a, psi_b)
    C = M[dec.point_indices]
    return float(np.linalg.norm(M - dec.P @ C) / np.linalg.norm(M))


def singular_value_report(psi_a, psi_b, max_terms=None):
    """Descending singular values of the pair matrix via its smaller Gram matrix."""
    psi_a = np.asarray(psi_a, dtype=float)
    psi_b = np.asarray(psi_b, dtype=float)
    _guard(psi_a.shape[0], psi_a.shape[1], psi_b.shape[1])
    M = pair_products(psi_a, psi_b)
    gram = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    w = sym_eig(gram, vectors=False)
    s = np.sqrt(np.clip(w, 0.0, None))[::-1]
    return s if max_terms is None else s[: int(max_terms)]
