import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from mnlqr.errors import InvalidInputError, NotConvergedError
from mnlqr.instances import random_spd
from mnlqr.lyapunov import closed_loop_cost
from mnlqr.riccati import (
    mss_spectral_radius,
    riccati_gain,
    riccati_residual,
    riccati_step,
    solve_riccati,
)
from mnlqr.system import SystemModel, block_transpose, kron_quadratic, sigma_bar

from conftest import SCALAR_K, SCALAR_P, SCALAR_RHO


def classical_dare_recursion(A, B, Q, R, tol=1e-14, max_iter=100_000):
    """Textbook Riccati difference equation iterated to its fixed point."""
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P, 2) <= tol * np.linalg.norm(P, 2):
            return P_next
        P = P_next
    raise RuntimeError("reference recursion did not converge")


def deterministic_system(rng, n_x, n_u, n_w):
    A = np.zeros((n_w + 1, n_x, n_x))
    B = np.zeros((n_w + 1, n_x, n_u))
    A[0] = rng.standard_normal((n_x, n_x))
    A[0] *= rng.uniform(0.5, 1.3) / np.abs(np.linalg.eigvals(A[0])).max()
    B[0] = rng.standard_normal((n_x, n_u))
    return SystemModel(A, B, random_spd(rng, n_x), random_spd(rng, n_u), random_spd(rng, n_w))


# -- residual ---------------------------------------------------------------------

def test_residual_static_noise_free(zero_sys):
    np.testing.assert_array_equal(riccati_residual(zero_sys.Q, zero_sys), np.zeros((2, 2)))


def test_residual_at_scalar_root(scalar):
    assert abs(riccati_residual([[1.144893]], scalar)[0, 0]) <= 1e-5


def test_residual_hand_evaluation(scalar):
    assert riccati_residual([[1.0]], scalar)[0, 0] == pytest.approx(-0.135, abs=1e-14)


def test_step_is_identity_minus_residual(scalar):
    P = np.array([[0.7]])
    np.testing.assert_allclose(riccati_step(P, scalar), P - riccati_residual(P, scalar), atol=1e-15)


# -- solver ----------------------------------------------------------------------

def test_solve_zero_dynamics(zero_sys):
    sol = solve_riccati(zero_sys)
    np.testing.assert_allclose(sol.P, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(sol.K, np.zeros((1, 2)), atol=1e-14)
    assert sol.mss_radius == 0.0


def test_solve_scalar_closed_form(scalar):
    sol = solve_riccati(scalar)
    assert sol.P[0, 0] == pytest.approx(SCALAR_P, abs=1e-10)
    assert sol.K[0, 0] == pytest.approx(SCALAR_K, abs=1e-10)
    assert sol.P[0, 0] == pytest.approx(1.144893, abs=1e-5)
    assert sol.K[0, 0] == pytest.approx(-0.266893, abs=1e-5)
    assert sol.residual <= 1e-11 * max(1, SCALAR_P)


@pytest.mark.parametrize("seed", range(8))
def test_solve_matches_deterministic_oracles(seed):
    rng = np.random.default_rng(seed)
    n_x, n_u, n_w = rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 3)
    system = deterministic_system(rng, n_x, n_u, n_w)
    sol = solve_riccati(system)
    A, B = system.A_blocks[0], system.B_blocks[0]
    P_rec = classical_dare_recursion(A, B, system.Q, system.R)
    P_are = sla.solve_discrete_are(A, B, system.Q, system.R)
    scale = np.linalg.norm(P_rec, 2)
    assert np.linalg.norm(sol.P - P_rec, 2) <= 1e-8 * scale
    assert np.linalg.norm(sol.P - P_are, 2) <= 1e-8 * scale
    K_ref = -np.linalg.solve(system.R + B.T @ P_rec @ B, B.T @ P_rec @ A)
    assert np.linalg.norm(sol.K - K_ref, 2) <= 1e-8 * max(1, np.linalg.norm(K_ref, 2))


def test_solution_invariants(random_instances):
    for system, sol in random_instances:
        assert np.linalg.eigvalsh(sol.P - system.Q)[0] >= -1e-10
        assert sol.mss_radius < 1.0
        assert np.linalg.norm(riccati_residual(sol.P, system), 2) <= 1e-8 * np.linalg.norm(sol.P, 2)


def test_value_iterates_are_monotone(random_instances):
    for system, _ in random_instances:
        P = system.Q.copy()
        for _ in range(200):
            P_next = riccati_step(P, system)
            assert np.linalg.eigvalsh(P_next - P)[0] >= -1e-10
            P = P_next


def test_value_equals_closed_loop_cost(random_instances, rng):
    for system, sol in random_instances:
        for _ in range(10):
            x0 = rng.standard_normal(system.n_x)
            exact = closed_loop_cost(system, system.Sigma_bar, sol.K, x0)
            assert exact == pytest.approx(float(x0 @ sol.P @ x0), rel=1e-8)


def test_gain_is_stationary_point(random_instances, rng):
    """Gradient of u'(R+G)u + 2u'Hx (halved) vanishes at u = Kx."""
    for system, sol in random_instances:
        G, H = system.G(sol.P), system.H(sol.P)
        for _ in range(10):
            x = rng.standard_normal(system.n_x)
            grad = (system.R + G) @ (sol.K @ x) + H @ x
            assert np.linalg.norm(grad) <= 1e-8 * np.linalg.norm(x)


def test_gain_helper_matches_solution(scalar):
    sol = solve_riccati(scalar)
    np.testing.assert_allclose(riccati_gain(sol.P, scalar), sol.K, atol=1e-15)


def test_unstabilizable_raises():
    # B = 0 and |A0| > 1: nothing can stabilize it
    system = SystemModel([[[1.2]], [[0.0]]], [[[0.0]], [[0.0]]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(NotConvergedError) as info:
        solve_riccati(system, max_iter=500)
    assert info.value.residual is not None


def test_noise_can_destroy_stabilizability():
    # deterministic part stabilizable, but large input noise defeats any gain
    system = SystemModel([[[2.0]], [[0.0]]], [[[1.0]], [[3.0]]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(NotConvergedError):
        solve_riccati(system, max_iter=2000)


def test_solver_rejects_bad_parameters(scalar):
    with pytest.raises(InvalidInputError):
        solve_riccati(scalar, tol=0)
    with pytest.raises(InvalidInputError):
        solve_riccati(scalar, max_iter=0)


def test_max_iter_too_small_reports_residual(scalar):
    with pytest.raises(NotConvergedError) as info:
        solve_riccati(scalar, max_iter=2)
    assert info.value.iterations == 2
    assert info.value.residual > 0


def test_explicit_sigma_bar_overrides(scalar):
    sol = solve_riccati(scalar, sigma_bar([[0.0]]))
    # no noise: P^2 - 0.25 P - 1 = 0 after simplification with A = 0.5, B = 1
    P = (0.25 + np.sqrt(0.25**2 + 4)) / 2
    assert sol.P[0, 0] == pytest.approx(P, abs=1e-10)


# -- MSS radius --------------------------------------------------------------------

def test_radius_zero_blocks(zero_sys):
    assert mss_spectral_radius(zero_sys, zero_sys.Sigma_bar, np.zeros((1, 2))) == 0.0


def test_radius_scalar_closed_loop(scalar):
    rho = mss_spectral_radius(scalar, scalar.Sigma_bar, [[SCALAR_K]])
    assert rho == pytest.approx(SCALAR_RHO, rel=1e-12)
    # with the gain rounded to six digits
    rho6 = mss_spectral_radius(scalar, scalar.Sigma_bar, [[-0.266893]])
    assert rho6 == pytest.approx(0.064339, abs=1e-6)


def test_radius_scalar_open_loop_unstable():
    system = SystemModel([[[1.1]], [[0.0]]], [[[1.0]], [[0.0]]], [[1.0]], [[1.0]], [[1.0]])
    assert mss_spectral_radius(system, system.Sigma_bar, [[0.0]]) == pytest.approx(1.21, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_radius_below_one_iff_second_moment_decays(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    A = rng.standard_normal((2, n, n)) * rng.uniform(0.1, 0.8)
    system = SystemModel(A, rng.standard_normal((2, n, 1)), np.eye(n), np.eye(1), [[1.0]])
    rho = mss_spectral_radius(system, system.Sigma_bar, np.zeros((1, n)))
    X = np.eye(n)
    L = system.closed_loop_blocks(np.zeros((1, n)))
    Ls = block_transpose(L)
    for _ in range(400):
        X = kron_quadratic(Ls, system.Sigma_bar, X, Ls)
    growth = np.trace(X) ** (1 / 400)
    if abs(rho - 1) > 0.05:
        assert (rho < 1) == (growth < 1)
