"""The diagnostic suite behind ``mnlqr check``: identities, norm equalities and bound soundness on one system."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .covariance import tightest_band
from .diagnostics import (
    lyapunov_fixedpoint_diagnostics,
    matrix_identity_checks,
    riccati_fixedpoint_diagnostics,
)
from .errors import MnlqrError
from .harness import Nominal, evaluate_estimate, sampled_covariance, trial_rng
from .lyapunov import lyap_inverse_norm, neumann_solve, operator_norm_positive, solve_lyapunov
from .riccati import DEFAULT_MAX_ITER, DEFAULT_TOL, riccati_residual, solve_riccati
from .system import SystemModel, block_transpose, kron_quadratic, sigma_bar, spectral_norm


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: Optional[float] = None
    detail: str = ""

    def as_row(self) -> dict:
        return {"check": self.name, "passed": self.passed, "value": self.value, "detail": self.detail}


def random_unit_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random symmetric matrix with spectral norm in ``(0, 1]``."""
    X = rng.standard_normal((n, n))
    X = X + X.T
    return X / spectral_norm(X) * rng.uniform(0.1, 1.0)


def norm_probe_margins(system: SystemModel, Sigma_bar, K, rng: np.random.Generator,
                       n_probes: int = 100) -> dict:
    """Smallest ``claimed_norm - ||op(X)||`` over random ``||X|| <= 1`` probes.

    Covers the positive kernels ``A``, ``B``, ``B^#``, ``L`` and the primal
    and adjoint inverse Lyapunov maps; a negative margin refutes ``||op|| = ||op(I)||``.
    """
    n = system.n_x
    A, B = system.A_blocks, system.B_blocks
    L = system.closed_loop_blocks(K)
    kernels = {"A": A, "B": B, "B_sharp": block_transpose(B), "L": L}
    claims = {name: operator_norm_positive(M, Sigma_bar) for name, M in kernels.items()}
    inv_claim = lyap_inverse_norm(system, Sigma_bar, K)
    inv_claim_adj = lyap_inverse_norm(system, Sigma_bar, K, adjoint=True)
    margins = {name: np.inf for name in [*kernels, "lyap_inv", "lyap_inv_adjoint"]}
    for _ in range(n_probes):
        for name, M in kernels.items():
            X = random_unit_symmetric(rng, M.shape[1])
            got = spectral_norm(kron_quadratic(M, Sigma_bar, X, M))
            margins[name] = min(margins[name], claims[name] - got)
        X = random_unit_symmetric(rng, n)
        got = spectral_norm(solve_lyapunov(system, Sigma_bar, K, X).X)
        margins["lyap_inv"] = min(margins["lyap_inv"], inv_claim - got)
        got = spectral_norm(solve_lyapunov(system, Sigma_bar, K, X, adjoint=True).X)
        margins["lyap_inv_adjoint"] = min(margins["lyap_inv_adjoint"], inv_claim_adj - got)
    return margins


def _run(name: str, fn: Callable[[], CheckResult]) -> CheckResult:
    try:
        return fn()
    except MnlqrError as exc:
        return CheckResult(name, False, None, f"{type(exc).__name__}: {exc}")


def run_checks(system: SystemModel, seed: int = 0, x0=None, n_perturbed: int = 5,
               n_probes: int = 100, sample_sizes=(1000, 10_000, 100_000),
               tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> list:
    """Run every diagnostic on ``system``; raises only if the nominal problem is unsolvable."""
    nominal = Nominal.build(system, x0, tol, max_iter)
    sol, c = nominal.solution, nominal.constants
    Sb = system.Sigma_bar
    rng = np.random.default_rng(seed)
    out = []

    res = spectral_norm(riccati_residual(sol.P, system))
    out.append(CheckResult("riccati_residual", res <= 1e-8 * max(1.0, spectral_norm(sol.P)), res))
    out.append(CheckResult("nominal_mss", sol.mss_radius < 1.0, sol.mss_radius))

    def neumann():
        rhs = system.Q + sol.K.T @ system.R @ sol.K
        err = spectral_norm(neumann_solve(system, Sb, sol.K, rhs) - sol.P)
        return CheckResult("lyapunov_neumann_vs_dense", err <= 1e-8 * max(1.0, spectral_norm(sol.P)), err)
    out.append(_run("lyapunov_neumann_vs_dense", neumann))

    margins = norm_probe_margins(system, Sb, sol.K, rng, n_probes)
    for name, m in margins.items():
        out.append(CheckResult(f"norm_probe_{name}", m >= -1e-10, m))

    # perturbed covariances: sampled estimates at increasing sample sizes
    for i in range(n_perturbed):
        N = sample_sizes[i % len(sample_sizes)]
        Sigma_hat = sampled_covariance(trial_rng(seed, i), system.Sigma, N)
        label = f"N={N},draw={i}"

        def riccati_fp():
            Sbh = sigma_bar(Sigma_hat)
            emp = solve_riccati(system, Sbh, tol=tol, max_iter=max_iter)
            rep = riccati_fixedpoint_diagnostics(system, Sb, Sbh, sol, emp, c,
                                                 tightest_band(system.Sigma, Sigma_hat).sigma_m)
            return CheckResult("riccati_fixed_point", rep.passed, rep.fixed_point_residual, label)

        def lyapunov_fp():
            emp = solve_riccati(system, sigma_bar(Sigma_hat), tol=tol, max_iter=max_iter)
            rep = lyapunov_fixedpoint_diagnostics(system, Sb, sol, emp.K, nominal.x0, c)
            return CheckResult("lyapunov_fixed_point", rep.passed, rep.fixed_point_residual, label)

        def soundness():
            rec = evaluate_estimate(nominal, Sigma_hat, N, i, tol=tol, max_iter=max_iter)
            return CheckResult("bound_soundness", not rec.any_violation, rec.actual_subopt,
                               f"{label},valid={rec.valid}")

        out.append(_run("riccati_fixed_point", riccati_fp))
        out.append(_run("lyapunov_fixed_point", lyapunov_fp))
        out.append(_run("bound_soundness", soundness))

    # push-through identity on the matrices that appear in the Riccati map
    Bm = system.Bm
    S = Bm @ np.linalg.solve(system.R, Bm.T)
    P_bar = np.kron(Sb, sol.P)
    rep = matrix_identity_checks(S, P_bar)
    out.append(CheckResult("matrix_identities", rep.passed, rep.push_through_error, rep.note))
    return out
