import math

import numpy as np
import pytest

from mnlqr.instances import random_stabilizable_system, scalar_canonical_system, zero_dynamics_system

# Positive root of 0.99 P^2 - 0.26 P - 1 = 0, the scalar canonical Riccati equation.
SCALAR_P = (0.26 + math.sqrt(0.26**2 + 4 * 0.99)) / (2 * 0.99)
SCALAR_K = -0.5 * SCALAR_P / (1 + SCALAR_P)
SCALAR_RHO = (0.5 + SCALAR_K) ** 2 + 0.1**2


@pytest.fixture
def scalar():
    return scalar_canonical_system()


@pytest.fixture
def zero_sys():
    return zero_dynamics_system()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def random_instances():
    """Six small stabilizable systems with their nominal solutions."""
    rng = np.random.default_rng(2024)
    dims = [(2, 1, 1), (3, 2, 2), (3, 1, 2), (4, 2, 3), (2, 2, 1), (4, 3, 2)]
    return [random_stabilizable_system(rng, *d) for d in dims]


def random_psd(rng, n, rank=None):
    G = rng.standard_normal((n, rank or n))
    return G @ G.T


def random_symmetric(rng, n):
    X = rng.standard_normal((n, n))
    return X + X.T


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
