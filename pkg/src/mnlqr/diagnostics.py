"""Numerical checks of the fixed-point identities behind the perturbation bounds.

These are not needed to compute a bound; they re-derive the intermediate
quantities two ways (from differences of Riccati/Lyapunov evaluations and from
closed-form simplifications) so that a bad constant or a sign slip shows up as
a failed identity rather than as a silently loose bound.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .bounds import ConstantsTable, fixed_point_h, lyapunov_radius, mss_margin_from_bound
from .covariance import tightest_band
from .errors import InvalidInputError, NotMSSError
from .lyapunov import closed_loop_cost, closed_loop_cost_matrix, lyapunov_operator, solve_lyapunov
from .riccati import RiccatiSolution, riccati_residual
from .system import SystemModel, block_transpose, kron_quadratic, spectral_norm, stack

IDENTITY_RTOL = 1e-8
SYMMETRY_TOL = 1e-10
RESIDUAL_CHECK = 1e-8


def _rel_close(a, b, rtol, floor):
    """``||a - b|| <= rtol * max(||b||, floor)``; the floor absorbs the roundoff of
    forming ``a`` as a difference of O(1) quantities when ``b`` is tiny."""
    diff = spectral_norm(a - b)
    ref = max(spectral_norm(b), floor)
    return diff / ref, diff <= rtol * ref


@dataclass(frozen=True)
class RiccatiFixedPointReport:
    dP_norm: float
    sigma_m: Optional[float]
    fixed_point_residual: float
    fixed_point_ok: bool
    closed_loop_form_rel: float
    rz_rel_diff: float
    rz_ok: bool
    rd_rel_diff: float
    rd_ok: bool
    phi_norm: float
    h_value: Optional[float]
    h_ok: Optional[bool]
    symmetry_error: float
    symmetry_ok: bool

    @property
    def passed(self) -> bool:
        return (self.fixed_point_ok and self.rz_ok and self.rd_ok and self.symmetry_ok
                and self.h_ok is not False)

    def as_row(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def _check_solution(sol: RiccatiSolution, system, Sb, name):
    res = spectral_norm(riccati_residual(sol.P, system, Sb))
    if res > RESIDUAL_CHECK * max(1.0, spectral_norm(sol.P)):
        raise InvalidInputError(f"{name} does not solve its Riccati equation (residual {res:.3e})")


def riccati_fixedpoint_diagnostics(
    system: SystemModel,
    Sigma_bar,
    Sigma_bar_hat,
    nominal: RiccatiSolution,
    perturbed: RiccatiSolution,
    constants: Optional[ConstantsTable] = None,
    sigma_m: Optional[float] = None,
) -> RiccatiFixedPointReport:
    """Check the Riccati perturbation fixed-point identity and its bound.

    With ``dP = P_hat - P*`` and ``L`` the nominal closed loop,

    * ``Rz(dP) = ric(P* + dP, Sb) - ric(P*, Sb) - L(dP)``
      equals ``Lm^T dPb (I + S Pb + S dPb)^{-1} S dPb Lm``;
    * ``Rd(dP) = ric(P_hat, Sb) - ric(P_hat, Sb_hat)``
      equals ``Am^T Yh^{-T} dPhb (Yh + Eh)^{-1} Am``;
    * ``dP = L^{-1}(Rd - Rz)``, evaluated with the closed forms;
    * ``||L^{-1}(Rd - Rz)|| <= h(||dP||, sigma_m)`` when ``||dP|| <= mu_P*``.

    Here ``Pb = Sb kron P*``, ``dPb = Sb kron dP``, ``Phb = Sb kron P_hat``,
    ``dPhb = (Sb_hat - Sb) kron P_hat``, ``S = Bm R^{-1} Bm^T``,
    ``Yh = I + S Phb`` and ``Eh = S dPhb``.
    """
    Sb = system.Sigma_bar if Sigma_bar is None else np.asarray(Sigma_bar, dtype=float)
    Sbh = np.asarray(Sigma_bar_hat, dtype=float)
    _check_solution(nominal, system, Sb, "nominal")
    _check_solution(perturbed, system, Sbh, "perturbed")

    P, Ph, K = nominal.P, perturbed.P, nominal.K
    dP = Ph - P
    Am, Bm = system.Am, system.Bm
    Lm = stack(system.closed_loop_blocks(K))
    S = Bm @ np.linalg.solve(system.R, Bm.T)
    I = np.eye(S.shape[0])
    scale = max(1.0, spectral_norm(P))

    Pb = np.kron(Sb, P)
    dPb = np.kron(Sb, dP)
    Y = I + S @ Pb
    closed_loop_rel = spectral_norm(Lm - np.linalg.solve(Y, Am)) / max(1.0, spectral_norm(Lm))

    rz_def = (riccati_residual(Ph, system, Sb) - riccati_residual(P, system, Sb)
              - lyapunov_operator(system, Sb, K, dP))
    rz_simp = Lm.T @ dPb @ np.linalg.solve(Y + S @ dPb, S @ dPb @ Lm)

    Phb = np.kron(Sb, Ph)
    dPhb = np.kron(Sbh - Sb, Ph)
    Yh = I + S @ Phb
    Eh = S @ dPhb
    rd_def = riccati_residual(Ph, system, Sb) - riccati_residual(Ph, system, Sbh)
    rd_simp = np.linalg.solve(Yh, Am).T @ dPhb @ np.linalg.solve(Yh + Eh, Am)

    floor = 1e-6 * scale
    rz_rel, rz_ok = _rel_close(rz_def, rz_simp, IDENTITY_RTOL, floor)
    rd_rel, rd_ok = _rel_close(rd_def, rd_simp, IDENTITY_RTOL, floor)

    phi = solve_lyapunov(system, Sb, K, rd_simp - rz_simp, symmetrize_result=False).X
    fp_res = spectral_norm(phi - dP)
    phi_norm = spectral_norm(phi)
    sym_err = spectral_norm(phi - phi.T)

    if sigma_m is None:
        n_w = system.n_w
        sigma_m = tightest_band(Sb[1:, 1:], Sbh[1:, 1:]).sigma_m if n_w else 0.0
    h_value = h_ok = None
    dP_norm = spectral_norm(dP)
    if constants is not None and dP_norm <= constants.mu_P_star:
        h_value = fixed_point_h(constants, dP_norm, sigma_m)
        h_ok = phi_norm <= h_value * (1 + 1e-12) + 1e-15

    return RiccatiFixedPointReport(
        dP_norm=dP_norm,
        sigma_m=sigma_m,
        fixed_point_residual=fp_res,
        fixed_point_ok=fp_res <= IDENTITY_RTOL * max(1.0, dP_norm),
        closed_loop_form_rel=closed_loop_rel,
        rz_rel_diff=rz_rel,
        rz_ok=rz_ok,
        rd_rel_diff=rd_rel,
        rd_ok=rd_ok,
        phi_norm=phi_norm,
        h_value=h_value,
        h_ok=h_ok,
        symmetry_error=sym_err,
        symmetry_ok=sym_err <= SYMMETRY_TOL * max(1.0, phi_norm),
    )


@dataclass(frozen=True)
class LyapunovFixedPointReport:
    dK_norm: float
    khat_mss: bool
    gate_ok: bool
    counterexample: bool
    dX_norm: Optional[float] = None
    X_norm: Optional[float] = None
    fixed_point_residual: Optional[float] = None
    fixed_point_ok: Optional[bool] = None
    eps_X: Optional[float] = None
    eps_X_ok: Optional[bool] = None
    cost_difference: Optional[float] = None
    trace_form: Optional[float] = None
    linear_term: Optional[float] = None
    trace_rel_diff: Optional[float] = None
    trace_ok: Optional[bool] = None
    trace_bound: Optional[float] = None
    trace_bound_ok: Optional[bool] = None

    @property
    def passed(self) -> bool:
        if self.counterexample:
            return False
        if not self.khat_mss:
            return True
        return bool(self.fixed_point_ok and self.trace_ok and self.trace_bound_ok
                    and self.eps_X_ok is not False)

    def as_row(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def second_moment_fixed_point_map(system: SystemModel, Sigma_bar, K_star, K_hat, X_star, dX):
    """``Lh*^{-1}`` of the three coupling terms between ``L*^#`` and ``(B dK)^#``,
    evaluated at ``X* + dX``; its fixed point is the second-moment perturbation."""
    dK = np.asarray(K_hat, dtype=float) - np.asarray(K_star, dtype=float)
    Ls = block_transpose(system.closed_loop_blocks(K_star))
    BdK = block_transpose(system.B_blocks @ dK)
    X = X_star + dX
    coupling = (kron_quadratic(Ls, Sigma_bar, X, BdK) + kron_quadratic(BdK, Sigma_bar, X, Ls)
                + kron_quadratic(BdK, Sigma_bar, X, BdK))
    return solve_lyapunov(system, Sigma_bar, K_star, coupling, adjoint=True,
                          symmetrize_result=False).X


def lyapunov_fixedpoint_diagnostics(
    system: SystemModel,
    Sigma_bar,
    nominal: RiccatiSolution,
    K_hat,
    x0,
    constants: Optional[ConstantsTable] = None,
) -> LyapunovFixedPointReport:
    """Check the second-moment perturbation identity and the exact cost-difference formula.

    ``X*`` and ``X_hat`` solve the adjoint Lyapunov equations with right-hand
    side ``x0 x0^T`` for ``K*`` and ``K_hat``. Verified: ``dX = X_hat - X*``
    is a fixed point of ``second_moment_fixed_point_map``; ``||dX||`` obeys the
    Lyapunov radius when the stability gate holds; and
    ``J(K_hat) - J(K*) = tr[dK^T (R + G(P*)) dK X_hat] <= n_bar ||dK||^2 eta_BR ||X_hat||``,
    up to a first-order term that is reported as ``linear_term`` and vanishes
    at the exact optimum.
    """
    Sb = system.Sigma_bar if Sigma_bar is None else np.asarray(Sigma_bar, dtype=float)
    x0 = np.asarray(x0, dtype=float).ravel()
    K_star = nominal.K
    K_hat = np.atleast_2d(np.asarray(K_hat, dtype=float))
    dK = K_hat - K_star
    dK_norm = spectral_norm(dK)
    gate = constants is not None and mss_margin_from_bound(constants, dK_norm)

    rhs = np.outer(x0, x0)
    X_star = solve_lyapunov(system, Sb, K_star, rhs, adjoint=True).X
    try:
        X_hat = solve_lyapunov(system, Sb, K_hat, rhs, adjoint=True).X
    except NotMSSError:
        return LyapunovFixedPointReport(dK_norm=dK_norm, khat_mss=False, gate_ok=gate,
                                        counterexample=gate)
    dX = X_hat - X_star
    psi = second_moment_fixed_point_map(system, Sb, K_star, K_hat, X_star, dX)
    dX_norm = spectral_norm(dX)
    X_norm = spectral_norm(X_star)
    fp_res = spectral_norm(psi - dX)

    eps_X = eps_X_ok = None
    if constants is not None and gate:
        eps_X = lyapunov_radius(constants, dK_norm, X_norm)
        eps_X_ok = eps_X is not None and dX_norm <= eps_X

    cost_hat = closed_loop_cost(system, Sb, K_hat, x0)
    cost_star = closed_loop_cost(system, Sb, K_star, x0)
    diff = cost_hat - cost_star
    M = system.R + system.G(nominal.P, Sb)
    trace_form = float(np.trace(dK.T @ M @ dK @ X_hat))
    # The quadratic form is exact only at the exact optimum. Around a gain
    # solved to finite tolerance the exact difference also carries
    # 2 tr[dK^T ((R + G) K* + H) X_hat], evaluated at the cost matrix of K*.
    P_K = closed_loop_cost_matrix(system, Sb, K_star)
    M_K = system.R + system.G(P_K, Sb)
    stationarity = M_K @ K_star + system.H(P_K, Sb)
    linear_term = float(2.0 * np.trace(dK.T @ stationarity @ X_hat))
    exact_form = float(np.trace(dK.T @ M_K @ dK @ X_hat)) + linear_term
    floor = 1e-6 * max(1.0, abs(cost_star))
    ref = max(abs(exact_form), floor)
    trace_rel = abs(diff - exact_form) / ref
    n_bar = min(system.n_x, system.n_u)
    trace_bound = n_bar * dK_norm**2 * spectral_norm(M) * spectral_norm(X_hat)

    return LyapunovFixedPointReport(
        dK_norm=dK_norm,
        khat_mss=True,
        gate_ok=gate,
        counterexample=False,
        dX_norm=dX_norm,
        X_norm=X_norm,
        fixed_point_residual=fp_res,
        fixed_point_ok=fp_res <= IDENTITY_RTOL * max(1.0, dX_norm),
        eps_X=eps_X,
        eps_X_ok=eps_X_ok,
        cost_difference=diff,
        trace_form=trace_form,
        linear_term=linear_term,
        trace_rel_diff=trace_rel,
        trace_ok=trace_rel <= IDENTITY_RTOL,
        trace_bound=trace_bound,
        trace_bound_ok=trace_form <= trace_bound * (1 + 1e-12),
    )


@dataclass(frozen=True)
class MatrixIdentityReport:
    skipped: bool
    push_through_error: float = float("nan")
    push_through_ok: bool = False
    hyp_ii: Optional[bool] = None
    concl_ii: Optional[bool] = None
    hyp_iii: Optional[bool] = None
    concl_iii: Optional[bool] = None
    note: str = ""

    @property
    def passed(self) -> bool:
        if self.skipped:
            return True
        return (self.push_through_ok
                and (not self.hyp_ii or bool(self.concl_ii))
                and (not self.hyp_iii or bool(self.concl_iii)))


def _psd(X, tol) -> bool:
    X = 0.5 * (X + X.T)
    return bool(np.linalg.eigvalsh(X)[0] >= -tol)


def matrix_identity_checks(M, N, tol: float = 1e-10) -> MatrixIdentityReport:
    """For symmetric ``M``, ``N`` with ``I + M N`` invertible verify:

    (i)   ``(I + MN)^{-1} M = M (I + NM)^{-1}``;
    (ii)  ``MN(N^+ + M)NM >= 0``  implies  ``(I + MN)^{-1} M <= M``;
    (iii) ``MN(2N^+ + M)NM >= 0`` implies ``(I + MN)^{-1} M (I + NM)^{-1} <= M``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    N = np.atleast_2d(np.asarray(N, dtype=float))
    n = M.shape[0]
    I = np.eye(n)
    IMN = I + M @ N
    if np.linalg.cond(IMN) > 1e12:
        return MatrixIdentityReport(skipped=True, note="I + MN is near-singular")
    INM = I + N @ M
    left = np.linalg.solve(IMN, M)
    right = np.linalg.solve(INM.T, M.T).T
    scale = max(1.0, spectral_norm(M))
    err = spectral_norm(left - right)
    Np = np.linalg.pinv(N)
    psd_tol = tol * max(1.0, spectral_norm(M) ** 3 * max(1.0, spectral_norm(N)) ** 2)
    MN = M @ N
    hyp_ii = _psd(MN @ (Np + M) @ MN.T, psd_tol)
    hyp_iii = _psd(MN @ (2 * Np + M) @ MN.T, psd_tol)
    concl_ii = _psd(M - left, tol * scale)
    concl_iii = _psd(M - left @ np.linalg.inv(INM), tol * scale)
    return MatrixIdentityReport(
        skipped=False,
        push_through_error=err,
        push_through_ok=err <= tol * scale,
        hyp_ii=hyp_ii,
        concl_ii=concl_ii,
        hyp_iii=hyp_iii,
        concl_iii=concl_iii,
    )
