"""Low-rank inverse dielectric matrix via the Woodbury identity.

With the pair matrix fitted as ``M ~ P C`` the polarizability is
``chi = 2 P T P^T`` where ``T = C Omega^{-1} C^T`` (dV-weighted), so
``eps = I - 2 V P T P^T`` is the identity plus a rank-``N_mu`` update and

    eps^{-1} = I + V P K P^T,    K = (T^{-1}/2 - P^T V P)^{-1}.

``K`` is formed as ``(I - 2 T B)^{-1} (2 T)`` with ``B = P^T V P``, the same
matrix without ever inverting ``T``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardError, SingularMatrixError, ValidationError
from .linalg import lu_factor, lu_invert, lu_solve
from .model import apply_coulomb, dense_coulomb, omega_diagonal, pair_products

DENSE_ORACLE_MAX_NR = 1024


def _sym(A):
    return 0.5 * (A + A.T)


def smw_inverse(A, U, W):
    """``(A + U W^T)^{-1}`` by the Woodbury identity."""
    A = np.asarray(A, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n = A.shape[0]
    if U.shape[0] != n or W.shape != U.shape:
        raise ValidationError(f"U and W must both be {n} x k, got {U.shape} and {W.shape}")
    Ainv = lu_invert(A)
    AiU = Ainv @ U
    inner = np.eye(U.shape[1]) + W.T @ AiU
    f = lu_factor(inner)
    if f.singular:
        raise SingularMatrixError(
            "Woodbury capacitance matrix is singular",
            pivot_index=f.bad_pivot,
            pivot_value=float(f.lu[f.bad_pivot, f.bad_pivot]),
        )
    return Ainv - AiU @ lu_solve(f, W.T @ Ainv)


@dataclass(frozen=True)
class EpsilonInverseLowRank:
    P: np.ndarray
    K: np.ndarray
    V: object = field(repr=False)
    VP: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.K.shape != (self.P.shape[1],) * 2:
            raise ValidationError(f"K is {self.K.shape}, P has {self.P.shape[1]} columns")
        if self.VP is None:
            object.__setattr__(self, "VP", apply_coulomb(self.V, self.P))

    @property
    def n_mu(self):
        return self.P.shape[1]


def coulomb_gram(P, V, VP=None):
    """``P^T V P``, symmetrised."""
    VP = apply_coulomb(V, P) if VP is None else VP
    return _sym(P.T @ VP)


def assemble_K(T, P, V, VP=None):
    """Middle matrix of the low-rank ``eps^{-1}``; returns ``(K, VP)``.

    ``T`` may be a :class:`~lowrank_gw.contour.CoupledCoefficients` or a bare
    matrix. A singular ``I - 2 T B`` raises :class:`SingularMatrixError`.
    """
    T = np.asarray(getattr(T, "T", T), dtype=float)
    n_mu = P.shape[1]
    if T.shape != (n_mu, n_mu):
        raise ValidationError(f"T is {T.shape}, expected {(n_mu, n_mu)}")
    VP = apply_coulomb(V, P) if VP is None else VP
    B = coulomb_gram(P, V, VP)
    T2 = 2.0 * _sym(T)
    f = lu_factor(np.eye(n_mu) - T2 @ B)
    if f.singular:
        raise SingularMatrixError(
            f"middle matrix singular at pivot {f.bad_pivot}",
            pivot_index=f.bad_pivot,
            pivot_value=float(f.lu[f.bad_pivot, f.bad_pivot]),
        )
    return _sym(lu_solve(f, T2)), VP


def epsilon_inverse_lowrank(T, P, V):
    K, VP = assemble_K(T, P, V)
    return EpsilonInverseLowRank(P=P, K=K, V=V, VP=VP)


def epsilon_inverse_apply(E, X):
    """``eps^{-1} X = X + V P K P^T X``."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] != E.P.shape[0]:
        raise ValidationError(f"operand has {X.shape[0]} rows, expected {E.P.shape[0]}")
    return X + E.VP @ (E.K @ (E.P.T @ X))


def epsilon_apply(es, V, P, T, X):
    """``eps X = X - 2 V P T P^T X`` for the fitted polarizability, matrix free."""
    X = np.asarray(X, dtype=float)
    return X - 2.0 * apply_coulomb(V, P @ (np.asarray(getattr(T, "T", T)) @ (P.T @ X)))


def epsilon_inverse_dense(E):
    """Materialise the low-rank ``eps^{-1}`` (validation only)."""
    n_r = E.P.shape[0]
    if n_r > DENSE_ORACLE_MAX_NR:
        raise GuardError(f"dense eps^-1 refused for N_r={n_r} > {DENSE_ORACLE_MAX_NR}")
    return np.eye(n_r) + E.VP @ E.K @ E.P.T


@dataclass(frozen=True)
class DenseDielectric:
    chi: np.ndarray
    epsilon: np.ndarray
    epsilon_inv: np.ndarray


def polarizability_dense(es, dec=None):
    """``chi = 2 M_w Omega^{-1} M_w^T`` from the fitted (``dec``) or exact pair matrix."""
    n_r = es.grid.n_r
    if n_r > DENSE_ORACLE_MAX_NR:
        raise GuardError(f"dense chi refused for N_r={n_r} > {DENSE_ORACLE_MAX_NR}")
    M = pair_products(es.psi_v, es.psi_c)
    if dec is not None:
        M = dec.P @ M[dec.point_indices]
    M = M * np.sqrt(es.grid.dV)
    omega = omega_diagonal(es.energies, es.n_v, es.n_c)
    return _sym(2.0 * (M / omega) @ M.T)


def epsilon_dense_oracle(es, V, dec=None):
    """Dense ``chi``, ``eps = I - V chi`` and its LU inverse.

    ``dec`` selects the ISDF-fitted pair matrix; ``None`` uses the exact one.
    """
    chi = polarizability_dense(es, dec)
    Vd = dense_coulomb(V)
    eps = np.eye(chi.shape[0]) - Vd @ chi
    return DenseDielectric(chi=chi, epsilon=eps, epsilon_inv=lu_invert(eps))
