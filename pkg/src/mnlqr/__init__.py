"""Optimal control of linear systems with multiplicative noise and finite-sample certificates.

The core objects are :class:`SystemModel`, :func:`solve_riccati`,
:func:`solve_lyapunov`, :func:`estimate_covariance` and :func:`compute_bounds`.
"""
__version__ = "0.1.0"

from .bounds import BoundReport, ConstantsTable, compute_bounds, compute_constants
from .covariance import (
    CovarianceEstimate,
    RelativeBand,
    confidence_radius,
    estimate_covariance,
    sample_covariance,
    tightest_band,
)
from .errors import (
    BoundViolationError,
    InvalidInputError,
    MnlqrError,
    NotConvergedError,
    NotMSSError,
    SingularMatrixError,
    SolverDefectError,
)
from .lyapunov import closed_loop_cost, lyap_inverse_norm, solve_lyapunov
from .riccati import RiccatiSolution, mss_spectral_radius, riccati_residual, solve_riccati
from .system import SystemModel, kron_quadratic, lifted_operator_matrix, sigma_bar

__all__ = [
    "BoundReport", "BoundViolationError", "ConstantsTable", "CovarianceEstimate",
    "InvalidInputError", "MnlqrError", "NotConvergedError", "NotMSSError", "RelativeBand",
    "RiccatiSolution", "SingularMatrixError", "SolverDefectError", "SystemModel",
    "closed_loop_cost", "compute_bounds", "compute_constants", "confidence_radius",
    "estimate_covariance", "kron_quadratic", "lifted_operator_matrix", "lyap_inverse_norm",
    "mss_spectral_radius", "riccati_residual", "sample_covariance", "sigma_bar",
    "solve_lyapunov", "solve_riccati", "tightest_band",
]
