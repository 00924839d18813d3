"""Reference and randomly generated systems used by tests, ``check`` and sweeps."""
from __future__ import annotations

import numpy as np

from .errors import MnlqrError
from .riccati import RiccatiSolution, solve_riccati
from .system import SystemModel


def scalar_canonical_system(Sigma: float = 1.0) -> SystemModel:
    """``A0 = 0.5, A1 = 0.1, B0 = 1, B1 = 0, Q = R = 1``.

    Its Riccati solution is the positive root of ``0.99 P^2 - 0.26 P - 1 = 0``
    when ``Sigma = 1``.
    """
    return SystemModel(
        A_blocks=[[[0.5]], [[0.1]]],
        B_blocks=[[[1.0]], [[0.0]]],
        Q=[[1.0]],
        R=[[1.0]],
        Sigma=[[Sigma]],
    )


def zero_dynamics_system(n_x: int = 2, n_u: int = 1, n_w: int = 1) -> SystemModel:
    return SystemModel(
        A_blocks=np.zeros((n_w + 1, n_x, n_x)),
        B_blocks=np.zeros((n_w + 1, n_x, n_u)),
        Q=np.eye(n_x),
        R=np.eye(n_u),
        Sigma=np.eye(n_w),
    )


def random_spd(rng: np.random.Generator, n: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (V * rng.uniform(lo, hi, n)) @ V.T


def random_system(
    rng: np.random.Generator,
    n_x: int,
    n_u: int,
    n_w: int,
    radius: float = 0.9,
    noise_scale: float = 0.1,
) -> SystemModel:
    """Random system whose nominal ``A0`` has the given spectral radius and whose
    noise blocks have spectral norms about ``noise_scale``."""
    A0 = rng.standard_normal((n_x, n_x))
    A0 *= radius / max(np.abs(np.linalg.eigvals(A0)).max(), 1e-12)
    B0 = rng.standard_normal((n_x, n_u))
    Ai = rng.standard_normal((n_w, n_x, n_x))
    Bi = rng.standard_normal((n_w, n_x, n_u))
    Ai *= noise_scale / np.linalg.norm(Ai, 2, axis=(1, 2))[:, None, None]
    Bi *= noise_scale / np.linalg.norm(Bi, 2, axis=(1, 2))[:, None, None]
    return SystemModel(
        A_blocks=np.concatenate([A0[None], Ai]),
        B_blocks=np.concatenate([B0[None], Bi]),
        Q=random_spd(rng, n_x, 0.5, 2.0),
        R=random_spd(rng, n_u, 0.5, 2.0),
        Sigma=random_spd(rng, n_w, 0.5, 2.0),
    )


def random_stabilizable_system(
    rng: np.random.Generator,
    n_x: int,
    n_u: int,
    n_w: int,
    max_tries: int = 100,
    **kwargs,
) -> tuple[SystemModel, RiccatiSolution]:
    """Draw random systems until the Riccati solve succeeds; return both."""
    for _ in range(max_tries):
        system = random_system(rng, n_x, n_u, n_w, **kwargs)
        try:
            return system, solve_riccati(system, max_iter=20_000)
        except MnlqrError:
            continue
    raise RuntimeError("no mean-square stabilizable system found")
