"""Stochastic Lyapunov equations, exact closed-loop costs and operator norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotMSSError
from .system import (
    SystemModel,
    as_blocks,
    block_transpose,
    is_symmetric,
    kron_quadratic,
    lifted_operator_matrix,
    spectral_norm,
    symmetrize,
)


@dataclass(frozen=True, eq=False)
class LyapunovSolution:
    X: np.ndarray
    kind: str  # "primal" or "adjoint"
    spectral_radius_of_generator: float


def _generator(system: SystemModel, Sigma_bar, K, adjoint: bool) -> np.ndarray:
    L = system.closed_loop_blocks(K)
    if adjoint:
        L = block_transpose(L)
    Sb = system.Sigma_bar if Sigma_bar is None else Sigma_bar
    return lifted_operator_matrix(L, Sb, L)


def lyapunov_operator(system: SystemModel, Sigma_bar, K, X, adjoint: bool = False) -> np.ndarray:
    """Apply ``X - L^T (Sb kron X) L`` (or the ``#`` form when ``adjoint``)."""
    L = system.closed_loop_blocks(K)
    if adjoint:
        L = block_transpose(L)
    Sb = system.Sigma_bar if Sigma_bar is None else Sigma_bar
    return np.asarray(X, dtype=float) - kron_quadratic(L, Sb, X, L)


def solve_lyapunov(
    system: SystemModel,
    Sigma_bar,
    K,
    rhs,
    adjoint: bool = False,
    symmetrize_result: bool = True,
) -> LyapunovSolution:
    """Solve ``X - L_K^T (Sb kron X) L_K = rhs`` by a dense vectorized solve.

    With ``adjoint=True`` the block-transposed closed loop ``L_K^#`` is used,
    i.e. ``X - sum_ij Sb[i, j] L_i X L_j^T = rhs`` (state second moments).

    Raises
    ------
    NotMSSError
        When the generator has spectral radius >= 1.
    """
    rhs = np.atleast_2d(np.asarray(rhs, dtype=float))
    n = system.n_x
    if rhs.shape != (n, n):
        raise DimensionError(f"rhs must be {n}x{n}, got {rhs.shape}")
    T = _generator(system, Sigma_bar, K, adjoint)
    radius = float(np.abs(np.linalg.eigvals(T)).max())
    if radius >= 1.0:
        raise NotMSSError(
            f"closed loop is not mean-square stable (spectral radius {radius:.6f})", radius=radius
        )
    X = np.linalg.solve(np.eye(n * n) - T, rhs.ravel()).reshape(n, n)
    if symmetrize_result and is_symmetric(rhs):
        X = symmetrize(X)
    return LyapunovSolution(X=X, kind="adjoint" if adjoint else "primal",
                            spectral_radius_of_generator=radius)


def closed_loop_cost_matrix(system: SystemModel, Sigma_bar, K) -> np.ndarray:
    """``P_K`` with ``x0^T P_K x0 = E sum_k x_k^T (Q + K^T R K) x_k`` under ``u = K x``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    return solve_lyapunov(system, Sigma_bar, K, system.Q + K.T @ system.R @ K).X


def closed_loop_cost(system: SystemModel, Sigma_bar, K, x0) -> float:
    """Exact infinite-horizon expected cost of ``u = K x`` from ``x0``.

    Raises ``NotMSSError`` when the cost is infinite.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    P_K = closed_loop_cost_matrix(system, Sigma_bar, K)
    return float(x0 @ P_K @ x0)


def lyap_inverse_norm(system: SystemModel, Sigma_bar, K, adjoint: bool = False) -> float:
    """Operator norm of the inverse Lyapunov map, evaluated as ``||L^{-1}(I)||``.

    Exact for these positive maps, so no sampling over the unit ball is needed.
    """
    return spectral_norm(solve_lyapunov(system, Sigma_bar, K, np.eye(system.n_x), adjoint).X)


def operator_norm_positive(M, Sigma_bar) -> float:
    """``||M^T (Sb kron I) M||``, the operator norm of ``P -> M^T (Sb kron P) M``."""
    M = as_blocks(M)
    return spectral_norm(kron_quadratic(M, Sigma_bar, np.eye(M.shape[1]), M))


def neumann_solve(system: SystemModel, Sigma_bar, K, rhs, adjoint: bool = False,
                  tol: float = 1e-12, max_terms: int = 100_000) -> np.ndarray:
    """Sum ``rhs + T(rhs) + T^2(rhs) + ...`` until the terms fall below ``tol``.

    Cross-check for ``solve_lyapunov``; not used on the main path.
    """
    L = system.closed_loop_blocks(K)
    if adjoint:
        L = block_transpose(L)
    Sb = system.Sigma_bar if Sigma_bar is None else Sigma_bar
    term = np.asarray(rhs, dtype=float)
    total = term.copy()
    scale = max(1.0, spectral_norm(term))
    for _ in range(max_terms):
        term = kron_quadratic(L, Sb, term, L)
        total += term
        if spectral_norm(term) <= tol * scale:
            return total
    raise NotMSSError("Neumann series did not converge")
