"""Static COHSEX self-energies and quasiparticle energies.

Three evaluation paths share the same Hadamard-form contractions:

* ``lowrank``: screened interactions projected through the low-rank
  ``eps^{-1} = I + V P K P^T``; cubic in system size.
* ``isdf_conventional``: dense ``chi`` from the fitted pair matrix and a dense
  LU inverse of ``eps``; same ISDF error, quartic-plus-N_r^3 cost.
* ``bruteforce``: exact pair matrix, dense inverse and explicit pair sums.

Every quadratic form ``f^T W g`` is an integral over the grid and carries a
factor ``dV``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardError, ValidationError
from .linalg import sym_eig
from .model import apply_coulomb, dense_coulomb, pair_products
from .smw import epsilon_dense_oracle, polarizability_dense

BRUTEFORCE_MAX_NR = 512
IMAG_TOL = 1e-12
PIPELINES = ("lowrank", "isdf_conventional", "bruteforce")


@dataclass(frozen=True)
class SelfEnergies:
    sigma_sex_x: np.ndarray
    sigma_x: np.ndarray
    sigma_coh: np.ndarray
    pipeline_tag: str
    sigma_total: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.pipeline_tag not in PIPELINES:
            raise ValidationError(f"unknown pipeline tag {self.pipeline_tag!r}")
        parts = [np.asarray(_real_part(a), dtype=float) for a in (self.sigma_sex_x, self.sigma_x, self.sigma_coh)]
        if len({p.shape for p in parts}) != 1:
            raise ValidationError("self-energy components differ in length")
        if not all(np.all(np.isfinite(p)) for p in parts):
            raise ValidationError("non-finite self-energy")
        for name, p in zip(("sigma_sex_x", "sigma_x", "sigma_coh"), parts):
            p.setflags(write=False)
            object.__setattr__(self, name, p)
        total = parts[0] + parts[1] + parts[2]
        total.setflags(write=False)
        object.__setattr__(self, "sigma_total", total)


@dataclass(frozen=True)
class QuasiparticleEnergies:
    eps_gw: np.ndarray


@dataclass(frozen=True)
class ScreenedProjections:
    W_vn: np.ndarray
    W_nn: np.ndarray
    V_vn: np.ndarray


def _real_part(a):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        resid = float(np.max(np.abs(a.imag), initial=0.0))
        if resid > IMAG_TOL * max(1.0, float(np.max(np.abs(a.real), initial=0.0))):
            raise ValidationError(f"imaginary residue {resid:.2e} in a real self-energy")
        return a.real
    return a


def _sym(A):
    return 0.5 * (A + A.T)


def project_screened_interactions(E, dec_vn, dec_nn, V):
    """``W_vn``, ``W_nn`` through ``V P_vc K P_vc^T V`` and the bare ``V_vn``."""
    n_r = E.P.shape[0]
    if dec_vn.P.shape[0] != n_r or dec_nn.P.shape[0] != n_r:
        raise ValidationError("decompositions were built on different grids")
    G_vn = dec_vn.P.T @ E.VP
    G_nn = dec_nn.P.T @ E.VP
    V_vn = dec_vn.P.T @ apply_coulomb(V, dec_vn.P)
    return ScreenedProjections(
        W_vn=_sym(G_vn @ E.K @ G_vn.T),
        W_nn=_sym(G_nn @ E.K @ G_nn.T),
        V_vn=_sym(V_vn),
    )


def hadamard_diagonal(W, Psi, Psi_mask):
    """``diag(Psi^T (W * (Psi_mask Psi_mask^T)) Psi)`` without forming pair columns."""
    H = W * (Psi_mask @ Psi_mask.T)
    return np.einsum("mn,mn->n", Psi, H @ Psi)


def _sigma_from_projections(es, proj, idx_vn, idx_nn, tag, flip_sex_x=False):
    dV = es.grid.dV
    Pvn = es.psi[idx_vn]
    Pnn = es.psi[idx_nn]
    occ = Pvn[:, : es.n_v]
    sex_x = -dV * hadamard_diagonal(proj.W_vn, Pvn, occ)
    if flip_sex_x:  # mutation hook for the validation suite
        sex_x = -sex_x
    x = -dV * hadamard_diagonal(proj.V_vn, Pvn, occ)
    coh = 0.5 * dV * hadamard_diagonal(proj.W_nn, Pnn, Pnn)
    return SelfEnergies(sigma_sex_x=sex_x, sigma_x=x, sigma_coh=coh, pipeline_tag=tag)


def self_energies_lowrank(es, proj, dec_vn, dec_nn, flip_sex_x=False):
    """Self-energies from the projected low-rank screened interactions."""
    for dec in (dec_vn, dec_nn):
        if dec.P.shape[1] != dec.point_indices.size:
            raise ValidationError("decomposition P and point set disagree")
    if proj.W_vn.shape[0] != dec_vn.n_mu or proj.W_nn.shape[0] != dec_nn.n_mu:
        raise ValidationError("projections do not match the decompositions")
    return _sigma_from_projections(
        es, proj, dec_vn.point_indices, dec_nn.point_indices, "lowrank", flip_sex_x
    )


def self_energies_isdf_conventional(es, V, dec_vc, dec_vn, dec_nn):
    """Dense ``chi`` from fitted pairs, LU inverse of ``eps``, then the same contractions."""
    dense = epsilon_dense_oracle(es, V, dec_vc)
    Vd = dense_coulomb(V)
    WV = (dense.epsilon_inv - np.eye(Vd.shape[0])) @ Vd
    proj = ScreenedProjections(
        W_vn=_sym(dec_vn.P.T @ WV @ dec_vn.P),
        W_nn=_sym(dec_nn.P.T @ WV @ dec_nn.P),
        V_vn=_sym(dec_vn.P.T @ Vd @ dec_vn.P),
    )
    return _sigma_from_projections(
        es, proj, dec_vn.point_indices, dec_nn.point_indices, "isdf_conventional"
    )


def _pair_quadratic(es, op, n, partners):
    """``dV * sum_k m_k^T op m_k`` over pairs ``m_k = psi_n * psi_k``."""
    m = es.psi[:, partners] * es.psi[:, n : n + 1]
    return es.grid.dV * float(np.einsum("rk,rk->", m, op @ m))


def self_energies_bruteforce(es, V):
    """Exact pairs, dense ``eps^{-1}`` and explicit pair sums; no ISDF anywhere."""
    if es.grid.n_r > BRUTEFORCE_MAX_NR:
        raise GuardError(f"brute force refused for N_r={es.grid.n_r} > {BRUTEFORCE_MAX_NR}")
    dense = epsilon_dense_oracle(es, V, None)
    Vd = dense_coulomb(V)
    WV = _sym((dense.epsilon_inv - np.eye(Vd.shape[0])) @ Vd)
    occ = np.arange(es.n_v)
    every = np.arange(es.n_bands)
    nb = es.n_bands
    sex_x = np.array([-_pair_quadratic(es, WV, n, occ) for n in range(nb)])
    x = np.array([-_pair_quadratic(es, Vd, n, occ) for n in range(nb)])
    coh = np.array([0.5 * _pair_quadratic(es, WV, n, every) for n in range(nb)])
    return SelfEnergies(sigma_sex_x=sex_x, sigma_x=x, sigma_coh=coh, pipeline_tag="bruteforce")


def quasiparticle_energies(es, sig):
    total = np.asarray(sig.sigma_total)
    if total.shape != es.energies.shape:
        raise ValidationError(f"{total.shape[0]} self-energies for {es.n_bands} bands")
    return QuasiparticleEnergies(eps_gw=es.energies + total - es.vxc)


@dataclass(frozen=True)
class BoundReport:
    observed: np.ndarray
    bound: np.ndarray
    slack: np.ndarray
    ok: np.ndarray
    dX_norm: float
    dM_rel: float
    sqrtV_defect: float
    floor: float = 0.0

    @property
    def all_ok(self):
        return bool(np.all(self.ok))


def coulomb_sqrt(V):
    """Symmetric PSD square root of the dense Coulomb matrix and its defect."""
    Vd = dense_coulomb(V)
    w, U = sym_eig(Vd)
    root = _sym((U * np.sqrt(np.clip(w, 0.0, None))) @ U.T)
    defect = float(np.linalg.norm(root @ root - Vd) / max(np.linalg.norm(Vd), 1e-300))
    return root, defect


def isdf_error_bound_check(
    es, V, dec_vc, dec_vn, dec_nn, sigma_isdf=None, sigma_exact=None, slack_factor=0.1, roundoff=1e-12
):
    """Per-band ISDF error against its first-order bound.

    bound(n) = ||dX||_2 tr(A_nn) + 3/2 |tr dA_nn| where ``A_nn`` is the
    Coulomb Gram matrix of the pairs ``psi_n * psi_k`` over every band k and
    ``X = -V^{1/2} chi V^{1/2}``. The slack ``slack_factor * ||dM_vc||_F/||M_vc||_F * bound``
    stands in for the higher-order remainder. Both sides are compared above
    a roundoff floor of ``roundoff * max|Sigma_exact|``.
    """
    if es.grid.n_r > BRUTEFORCE_MAX_NR:
        raise GuardError(f"bound check refused for N_r={es.grid.n_r} > {BRUTEFORCE_MAX_NR}")
    if sigma_isdf is None:
        sigma_isdf = self_energies_isdf_conventional(es, V, dec_vc, dec_vn, dec_nn)
    if sigma_exact is None:
        sigma_exact = self_energies_bruteforce(es, V)
    observed = np.abs(sigma_isdf.sigma_total - sigma_exact.sigma_total)

    root, sqrt_defect = coulomb_sqrt(V)
    X = -root @ polarizability_dense(es, None) @ root
    X_fit = -root @ polarizability_dense(es, dec_vc) @ root
    dX = sym_eig(_sym(X_fit - X), vectors=False)
    dX_norm = float(np.max(np.abs(dX)))

    M = pair_products(es.psi_v, es.psi_c)
    dM_rel = float(np.linalg.norm(dec_vc.P @ M[dec_vc.point_indices] - M) / np.linalg.norm(M))

    Vd = dense_coulomb(V)
    dV = es.grid.dV
    idx = dec_nn.point_indices
    trA = np.empty(es.n_bands)
    dtrA = np.empty(es.n_bands)
    for n in range(es.n_bands):
        m = es.psi * es.psi[:, n : n + 1]
        m_fit = dec_nn.P @ m[idx]
        trA[n] = dV * np.einsum("rk,rk->", m, Vd @ m)
        dtrA[n] = dV * np.einsum("rk,rk->", m_fit, Vd @ m_fit) - trA[n]
    bound = dX_norm * trA + 1.5 * np.abs(dtrA)
    slack = slack_factor * dM_rel * bound
    floor = roundoff * float(np.max(np.abs(sigma_exact.sigma_total)))
    return BoundReport(
        observed=observed,
        bound=bound,
        slack=slack,
        ok=observed <= bound + slack + floor,
        dX_norm=dX_norm,
        dM_rel=dM_rel,
        sqrtV_defect=sqrt_defect,
        floor=floor,
    )
