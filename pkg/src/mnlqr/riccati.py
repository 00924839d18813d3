"""Stochastic Riccati equation: residual, value-iteration solver, MSS radius."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NotConvergedError, SingularMatrixError, SolverDefectError
from .system import SystemModel, lifted_operator_matrix, spectral_norm, symmetrize

DEFAULT_TOL = 1e-11
DEFAULT_MAX_ITER = 200_000
MAX_CONDITION = 1e14


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    iterations: int
    residual: float
    mss_radius: float


def _sb(system: SystemModel, Sigma_bar):
    return system.Sigma_bar if Sigma_bar is None else np.asarray(Sigma_bar, dtype=float)


def _riccati_terms(P, system: SystemModel, Sb):
    """Return ``F(P)``, ``H(P)`` and the gain ``-(R + G(P))^{-1} H(P)``."""
    F = system.F(P, Sb)
    H = system.H(P, Sb)
    RG = symmetrize(system.R + system.G(P, Sb))
    ev = np.linalg.eigvalsh(RG)
    if ev[0] <= 0 or ev[-1] / ev[0] > MAX_CONDITION:
        raise SingularMatrixError(
            f"R + G(P) is singular or ill-conditioned (eigenvalues in [{ev[0]:.3e}, {ev[-1]:.3e}])"
        )
    K = -sla.solve(RG, H, assume_a="pos")
    return F, H, K


def riccati_gain(P, system: SystemModel, Sigma_bar=None) -> np.ndarray:
    return _riccati_terms(P, system, _sb(system, Sigma_bar))[2]


def riccati_step(P, system: SystemModel, Sigma_bar=None) -> np.ndarray:
    """One value-iteration step ``Q + F(P) - H(P)^T (R + G(P))^{-1} H(P)``."""
    F, H, K = _riccati_terms(P, system, _sb(system, Sigma_bar))
    return symmetrize(system.Q + F + H.T @ K)


def riccati_residual(P, system: SystemModel, Sigma_bar=None) -> np.ndarray:
    """``ric(P) = P - Q - F(P) + H(P)^T (R + G(P))^{-1} H(P)``; zero at the solution."""
    P = np.asarray(P, dtype=float)
    return symmetrize(P) - riccati_step(P, system, Sigma_bar)


def mss_spectral_radius(system: SystemModel, Sigma_bar, K) -> float:
    """Spectral radius of ``P -> L_K^T (Sigma_bar kron P) L_K`` with ``L_K = A + B K``.

    Values below one certify mean-square stability of ``u = K x``.
    """
    L = system.closed_loop_blocks(K)
    T = lifted_operator_matrix(L, _sb(system, Sigma_bar), L)
    return float(np.abs(np.linalg.eigvals(T)).max())


def solve_riccati(
    system: SystemModel,
    Sigma_bar=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RiccatiSolution:
    """Solve the stochastic Riccati equation by value iteration from ``P = Q``.

    The iteration stops at the first iterate with
    ``||ric(P)|| <= tol * max(1, ||P||)``. Since ``ric(P_k) = P_k - P_{k+1}``
    the residual costs nothing extra.

    Raises
    ------
    NotConvergedError
        ``max_iter`` reached, or the iterates blew up. The system is then
        presumed not mean-square stabilizable under ``Sigma_bar``.
    SolverDefectError
        The converged gain is not mean-square stabilizing.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    if max_iter < 1:
        raise InvalidInputError("max_iter must be positive")
    Sb = _sb(system, Sigma_bar)
    P = system.Q.copy()
    residual = np.inf
    for it in range(max_iter + 1):
        F, H, K = _riccati_terms(P, system, Sb)
        P_next = symmetrize(system.Q + F + H.T @ K)
        residual = spectral_norm(P - P_next)
        scale = max(1.0, spectral_norm(P))
        if not np.isfinite(residual) or scale > 1e150:
            raise NotConvergedError(
                f"Riccati iterates diverged after {it} steps", iterations=it, residual=residual
            )
        if residual <= tol * scale:
            break
        if it == max_iter:
            raise NotConvergedError(
                f"Riccati iteration did not converge in {max_iter} steps "
                f"(residual {residual:.3e}); system presumed not mean-square stabilizable",
                iterations=it,
                residual=residual,
            )
        P = P_next
    radius = mss_spectral_radius(system, Sb, K)
    if radius >= 1.0:
        raise SolverDefectError(
            f"converged Riccati gain is not mean-square stabilizing (radius {radius:.6f})"
        )
    return RiccatiSolution(P=P, K=K, iterations=it, residual=residual, mss_radius=radius)
