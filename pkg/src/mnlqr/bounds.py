"""Sensitivity constants at the nominal solution and certified perturbation bounds.

The chain is: covariance band ``sigma_m`` -> Riccati perturbation ``eps_P``
-> gain perturbation ``eps_K`` -> suboptimality of the empirical gain on the
true system. Each link has a validity gate; a failed gate yields ``None``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidInputError, NotMSSError
from .lyapunov import lyap_inverse_norm, operator_norm_positive
from .riccati import RiccatiSolution
from .system import SystemModel, block_transpose, kron_quadratic, spectral_norm, stack


@dataclass(frozen=True)
class ConstantsTable:
    kappa_A: float
    kappa_B: float
    kappa_AB: float
    kappa_L: float
    kappa_LB: float
    kappa_Bc: float
    kappa_S: float
    eta_A: float
    eta_B: float
    eta_AB: float
    eta_L: float
    eta_LB: float
    eta_LBc: float
    eta_LBc_table: float  # ||A^#|| ||B^#|| ||Sigma_bar||, reported only
    eta_BR: float
    eta_Lyap: float
    eta_Lyaph: float
    mu_P_star: float
    mu_R: float
    norm_K_star: float
    norm_P_star: float

    def as_row(self) -> dict:
        return asdict(self)


def compute_constants(system: SystemModel, nominal: RiccatiSolution, Sigma_bar=None) -> ConstantsTable:
    """Evaluate every sensitivity and offset constant at ``(P*, K*)``."""
    Sb = system.Sigma_bar if Sigma_bar is None else np.asarray(Sigma_bar, dtype=float)
    P, K = nominal.P, nominal.K
    A, B = system.A_blocks, system.B_blocks
    L = system.closed_loop_blocks(K)
    try:
        eta_lyap = 1.0 / lyap_inverse_norm(system, Sb, K)
        eta_lyaph = 1.0 / lyap_inverse_norm(system, Sb, K, adjoint=True)
    except NotMSSError as exc:
        raise NotMSSError(f"nominal gain is not mean-square stabilizing: {exc}", exc.radius) from exc

    nA, nB, nL = spectral_norm(stack(A)), spectral_norm(stack(B)), spectral_norm(stack(L))
    nB_sharp = spectral_norm(stack(block_transpose(B)))
    nL_sharp = spectral_norm(stack(block_transpose(L)))
    nA_sharp = spectral_norm(stack(block_transpose(A)))
    nSb = spectral_norm(Sb)
    nP = spectral_norm(P)
    Bm = stack(B)
    S = Bm @ np.linalg.solve(system.R, Bm.T)

    return ConstantsTable(
        kappa_A=operator_norm_positive(A, Sb),
        kappa_B=operator_norm_positive(B, Sb),
        kappa_AB=nA * nB * nSb,
        kappa_L=operator_norm_positive(L, Sb),
        kappa_LB=nL * nB * nSb,
        kappa_Bc=operator_norm_positive(block_transpose(B), Sb),
        kappa_S=nL**2 * spectral_norm(S) * nSb**2,
        eta_A=spectral_norm(system.F(P, Sb)),
        eta_B=spectral_norm(system.G(P, Sb)),
        eta_AB=nA * nB * nSb * nP,
        eta_L=spectral_norm(kron_quadratic(L, Sb, P, L)),
        eta_LB=nL * nB * nSb * nP,
        eta_LBc=nL_sharp * nB_sharp * nSb,
        eta_LBc_table=nA_sharp * nB_sharp * nSb,
        eta_BR=spectral_norm(system.G(P, Sb) + system.R),
        eta_Lyap=eta_lyap,
        eta_Lyaph=eta_lyaph,
        mu_P_star=float(np.linalg.eigvalsh(P)[0]),
        mu_R=float(np.linalg.eigvalsh(system.R)[0]),
        norm_K_star=spectral_norm(K),
        norm_P_star=nP,
    )


class EpsPBound(NamedTuple):
    eps_P: Optional[float]
    ricpcond_ok: bool
    mu_P_ok: bool
    threshold: float

    @property
    def valid(self) -> bool:
        return self.eps_P is not None


def ricpcond_threshold(c: ConstantsTable) -> float:
    """Largest ``sigma_m`` for which the Riccati bound's quadratic has a real root.

    Algebraically equal to
    ``(2 eta_A kappa_S + kappa_A eta_Lyap - 2 sqrt(eta_A kappa_S (eta_A kappa_S + kappa_A eta_Lyap))) / kappa_A^2``
    but written as ``eta_Lyap^2 / (sqrt(u + v) + sqrt(u))^2`` with
    ``u = eta_A kappa_S``, ``v = kappa_A eta_Lyap``, which has no cancellation
    and covers ``kappa_A = 0`` and ``kappa_S = 0`` as limits.
    """
    u = c.eta_A * c.kappa_S
    v = c.kappa_A * c.eta_Lyap
    denom = (math.sqrt(u + v) + math.sqrt(u)) ** 2
    return math.inf if denom == 0.0 else c.eta_Lyap**2 / denom


def eps_P_bound(c: ConstantsTable, sigma_m: float) -> EpsPBound:
    """Bound on ``||P_hat - P*||`` for a covariance band of relative size ``sigma_m``.

    Evaluates the smaller root of ``kappa_S e^2 - (eta_Lyap - kappa_A s) e + eta_A s = 0``
    in the rationalized form ``2 eta_A s / (b + sqrt(b^2 - 4 eta_A kappa_S s))``.
    """
    if sigma_m < 0 or not math.isfinite(sigma_m):
        raise InvalidInputError(f"sigma_m must be a nonnegative finite number, got {sigma_m}")
    thr = ricpcond_threshold(c)
    cond_ok = sigma_m <= thr
    if not cond_ok:
        return EpsPBound(None, False, False, thr)
    b = c.eta_Lyap - c.kappa_A * sigma_m
    disc = max(b * b - 4.0 * c.eta_A * c.kappa_S * sigma_m, 0.0)
    denom = b + math.sqrt(disc)
    if denom <= 0.0:
        return EpsPBound(None, False, False, thr)
    eps = 2.0 * c.eta_A * sigma_m / denom
    mu_ok = eps <= c.mu_P_star
    return EpsPBound(eps if mu_ok else None, True, mu_ok, thr)


def eps_K_bound(c: ConstantsTable, eps_P: float, sigma_m: float) -> float:
    """``(1/mu_R) [(1 + s) eps_P kappa_K + s eta_K]`` with
    ``kappa_K = kappa_B ||K*|| + kappa_AB`` and ``eta_K = eta_B ||K*|| + eta_AB``."""
    kappa_K = c.kappa_B * c.norm_K_star + c.kappa_AB
    eta_K = c.eta_B * c.norm_K_star + c.eta_AB
    return ((1.0 + sigma_m) * eps_P * kappa_K + sigma_m * eta_K) / c.mu_R


def stab_threshold(c: ConstantsTable) -> float:
    return c.eta_Lyaph / (c.eta_LBc + math.sqrt(c.eta_LBc**2 + c.kappa_Bc * c.eta_Lyaph))


class SuboptBound(NamedTuple):
    bound: Optional[float]
    stab_ok: bool


def subopt_bound(c: ConstantsTable, eps_K: float, x0_norm: float, n_bar: int) -> SuboptBound:
    """Bound on ``J_hat(x0) - J*(x0)``; ``None`` when the stability gate fails."""
    if eps_K < 0:
        raise InvalidInputError("eps_K must be nonnegative")
    if not eps_K < stab_threshold(c):
        return SuboptBound(None, False)
    growth = 2.0 * c.eta_LBc * eps_K + c.kappa_Bc * eps_K**2
    denom = c.eta_Lyaph - growth
    assert denom > 0.0, "stability gate admitted a non-positive denominator"
    bound = n_bar * eps_K**2 * c.eta_BR * x0_norm**2 / c.eta_Lyaph * (1.0 + growth / denom)
    return SuboptBound(bound, True)


def mss_margin_from_bound(c: ConstantsTable, eps_K: float) -> bool:
    """True when ``(2 eta_LBc eps_K + kappa_Bc eps_K^2) / eta_Lyaph < 1``.

    In that case every gain within ``eps_K`` of ``K*`` is mean-square
    stabilizing on the true system.
    """
    return (2.0 * c.eta_LBc * eps_K + c.kappa_Bc * eps_K**2) / c.eta_Lyaph < 1.0


def lyapunov_radius(c: ConstantsTable, dK_norm: float, X_norm: float) -> Optional[float]:
    """Radius ``eps_X`` bounding the perturbation of the state second moment."""
    growth = 2.0 * c.eta_LBc * dK_norm + c.kappa_Bc * dK_norm**2
    denom = c.eta_Lyaph - growth
    if denom <= 0:
        return None
    return growth / denom * X_norm


def fixed_point_h(c: ConstantsTable, eps: float, sigma_m: float) -> float:
    """``(sigma_m (eta_A + kappa_A eps) + kappa_S eps^2) / eta_Lyap``."""
    return (sigma_m * (c.eta_A + c.kappa_A * eps) + c.kappa_S * eps**2) / c.eta_Lyap


def gradient_difference_bound(c: ConstantsTable, eps_P: float, sigma_m: float,
                              u_norm: float, x_norm: float) -> float:
    return (((1 + sigma_m) * eps_P * c.kappa_B + sigma_m * c.eta_B) * u_norm
            + ((1 + sigma_m) * eps_P * c.kappa_AB + sigma_m * c.eta_AB) * x_norm)


@dataclass(frozen=True)
class BoundReport:
    sigma_m: float
    eps_P: Optional[float]
    cond_ricpcond_ok: bool
    cond_muP_ok: bool
    eps_K: Optional[float]
    cond_stab_ok: bool
    mss_gate_ok: bool
    subopt_bound: Optional[float]
    n_bar: int
    x0_norm: Optional[float]

    @property
    def valid(self) -> bool:
        return self.eps_P is not None and self.subopt_bound is not None

    def as_row(self) -> dict:
        return asdict(self)


def compute_bounds(c: ConstantsTable, sigma_m: float, n_bar: int,
                   x0_norm: Optional[float] = None) -> BoundReport:
    """Run the full chain at ``sigma_m``. ``x0_norm=None`` uses ``||x0|| = 1``
    for the gate but leaves ``subopt_bound`` unset."""
    ep = eps_P_bound(c, sigma_m)
    eps_K = None
    stab_ok = False
    mss_ok = False
    sub = None
    if ep.eps_P is not None:
        eps_K = eps_K_bound(c, ep.eps_P, sigma_m)
        sb = subopt_bound(c, eps_K, 1.0 if x0_norm is None else x0_norm, n_bar)
        stab_ok = sb.stab_ok
        mss_ok = mss_margin_from_bound(c, eps_K)
        if x0_norm is not None:
            sub = sb.bound
    return BoundReport(
        sigma_m=float(sigma_m),
        eps_P=ep.eps_P,
        cond_ricpcond_ok=ep.ricpcond_ok,
        cond_muP_ok=ep.mu_P_ok,
        eps_K=eps_K,
        cond_stab_ok=stab_ok,
        mss_gate_ok=mss_ok,
        subopt_bound=sub,
        n_bar=int(n_bar),
        x0_norm=None if x0_norm is None else float(x0_norm),
    )
