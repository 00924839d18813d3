"""Sample covariance, sub-Gaussian confidence radius and relative PSD bands."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularMatrixError
from .system import is_symmetric, spectral_norm, symmetrize

DEFAULT_BETA = 0.05
DEFAULT_EPSILON = 0.25
DEFAULT_SIGMA_SQ = 1.0


@dataclass(frozen=True)
class RelativeBand:
    """Extreme eigenvalues of ``Sigma^{-1/2} (Sigma_hat - Sigma) Sigma^{-1/2}``."""

    delta_lower: float
    delta_upper: float

    @property
    def sigma_m(self) -> float:
        return max(abs(self.delta_lower), abs(self.delta_upper))


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    Sigma_hat: np.ndarray
    sample_count: int
    t_sig: float
    beta: float
    epsilon: float
    sigma_sq: float


def sample_covariance(samples) -> np.ndarray:
    """Zero-mean sample covariance ``(1/N) sum_i w_i w_i^T`` of an ``(N, n_w)`` array."""
    W = np.asarray(samples, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.ndim != 2 or W.shape[0] < 1:
        raise InvalidInputError("need at least one sample")
    return symmetrize(W.T @ W / W.shape[0])


def q_value(beta: float, epsilon: float, n_w: int) -> float:
    return n_w * math.log1p(1.0 / epsilon) + math.log(2.0 / beta)


def confidence_radius(beta: float, epsilon: float, n_w: int, N: int,
                      sigma_sq: float = DEFAULT_SIGMA_SQ) -> float:
    """Radius ``t`` with ``-t Sigma <= Sigma_hat - Sigma <= t Sigma`` w.p. ``1 - beta``.

    ``t = sigma^2 / (1 - 2 eps) * (sqrt(32 q / N) + 2 q / N)`` with
    ``q = n_w log(1 + 1/eps) + log(2/beta)``.
    """
    if not 0.0 < beta < 1.0:
        raise InvalidInputError(f"beta must lie in (0, 1), got {beta}")
    if not 0.0 < epsilon < 0.5:
        raise InvalidInputError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    if sigma_sq < 1.0:
        raise InvalidInputError(f"sigma_sq must be >= 1, got {sigma_sq}")
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    if n_w < 1:
        raise InvalidInputError(f"n_w must be >= 1, got {n_w}")
    q = q_value(beta, epsilon, n_w)
    return sigma_sq / (1.0 - 2.0 * epsilon) * (math.sqrt(32.0 * q / N) + 2.0 * q / N)


def inverse_sqrt_psd(Sigma) -> np.ndarray:
    Sigma = symmetrize(np.atleast_2d(np.asarray(Sigma, dtype=float)))
    ev, V = np.linalg.eigh(Sigma)
    floor = 1e-14 * max(spectral_norm(Sigma), np.finfo(float).tiny)
    if ev.min() <= floor:
        raise SingularMatrixError(
            f"Sigma is numerically singular (smallest eigenvalue {ev.min():.3e})"
        )
    return (V / np.sqrt(ev)) @ V.T


def tightest_band(Sigma, Sigma_hat) -> RelativeBand:
    """Tightest ``(delta, delta_bar)`` with ``delta Sigma <= Sigma_hat - Sigma <= delta_bar Sigma``."""
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    Sigma_hat = np.atleast_2d(np.asarray(Sigma_hat, dtype=float))
    if Sigma.shape != Sigma_hat.shape:
        raise InvalidInputError(f"shape mismatch {Sigma.shape} vs {Sigma_hat.shape}")
    if not (is_symmetric(Sigma) and is_symmetric(Sigma_hat)):
        raise InvalidInputError("covariances must be symmetric")
    S = inverse_sqrt_psd(Sigma)
    W = symmetrize(S @ (Sigma_hat - Sigma) @ S)
    ev = np.linalg.eigvalsh(W)
    return RelativeBand(float(ev[0]), float(ev[-1]))


def estimate_covariance(samples, beta: float = DEFAULT_BETA, epsilon: float = DEFAULT_EPSILON,
                        sigma_sq: float = DEFAULT_SIGMA_SQ) -> CovarianceEstimate:
    W = np.asarray(samples, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    Sigma_hat = sample_covariance(W)
    N, n_w = W.shape
    t = confidence_radius(beta, epsilon, n_w, N, sigma_sq)
    return CovarianceEstimate(Sigma_hat, N, t, beta, epsilon, sigma_sq)
