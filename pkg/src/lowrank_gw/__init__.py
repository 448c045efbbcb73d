"""Low-rank inversion of the dielectric matrix for static COHSEX G0W0.

ISDF fits the orbital-pair matrix as ``P C``; the coupled coefficients
``C Omega^{-1} C^T`` come from an elliptic contour quadrature; the Woodbury
identity then gives ``eps^{-1} = I + V P K P^T`` in cubic time.
"""
from ._core import BACKEND
from .contour import (
    ContourSpec,
    CoupledCoefficients,
    cauchy_error_bound,
    coupled_coefficients_contour,
    coupled_coefficients_direct,
    elliptic_params,
    jacobi_complex,
    jacobi_sn_cn_dn,
)
from .errors import (
    ContourDegeneracyError,
    ConvergenceError,
    FormatError,
    GuardError,
    LowRankGWError,
    PreconditionError,
    SingularMatrixError,
    StageError,
    ValidationError,
)
from .gw import (
    QuasiparticleEnergies,
    SelfEnergies,
    isdf_error_bound_check,
    project_screened_interactions,
    quasiparticle_energies,
    self_energies_bruteforce,
    self_energies_isdf_conventional,
    self_energies_lowrank,
)
from .isdf import (
    IsdfDecomposition,
    decompose,
    fit_auxiliary_basis,
    isdf_reconstruction_error,
    num_aux,
    select_interpolation_points,
    singular_value_report,
)
from .linalg import LuFactors, QrcpResult, dft, lu_invert, lu_solve, qrcp, sym_eig
from .model import (
    CoulombOperator,
    ElectronicStructure,
    Grid,
    apply_coulomb,
    build_coulomb,
    build_synthetic_system,
    dense_coulomb,
    load_system,
    omega_diagonal,
    save_system,
)
from .smw import (
    EpsilonInverseLowRank,
    assemble_K,
    epsilon_dense_oracle,
    epsilon_inverse_apply,
    epsilon_inverse_lowrank,
    smw_inverse,
)

__version__ = "0.1.0"
