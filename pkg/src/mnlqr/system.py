"""Multiplicative-noise linear systems and their lifted matrix operators.

A system is described by

    x_{k+1} = A(w_k) x_k + B(w_k) u_k,
    A(w) = A_0 + sum_i w_i A_i,   B(w) = B_0 + sum_i w_i B_i,

with E[w] = 0 and E[w w^T] = Sigma. Stacked matrices are stored as 3-D
arrays of shape ``(n_w + 1, rows, cols)``; ``stack`` assembles the tall
block column and ``block_transpose`` gives the ``#`` variant.

Every second-moment operator used downstream has the form

    P -> M_left^T (Sigma_bar kron P) M_right
       = sum_ij Sigma_bar[i, j] M_left[i]^T P M_right[j]

and is evaluated by that block sum, never by forming the Kronecker product.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidSystemError

DEFAULT_RTOL = 1e-10


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def is_symmetric(X: np.ndarray, rtol: float = 1e-12) -> bool:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        return False
    scale = max(1.0, np.abs(X).max(initial=0.0))
    return bool(np.abs(X - X.T).max(initial=0.0) <= rtol * scale)


def spectral_norm(X: np.ndarray) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return 0.0
    return float(np.linalg.norm(X, 2))


def sigma_bar(Sigma) -> np.ndarray:
    """Augment a noise covariance with the deterministic channel.

    Returns the ``(n_w + 1)``-square block diagonal matrix ``diag(1, Sigma)``.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1] or Sigma.shape[0] < 1:
        raise DimensionError(f"Sigma must be a non-empty square matrix, got shape {Sigma.shape}")
    if not is_symmetric(Sigma):
        raise InvalidSystemError("Sigma is not symmetric")
    n_w = Sigma.shape[0]
    out = np.zeros((n_w + 1, n_w + 1))
    out[0, 0] = 1.0
    out[1:, 1:] = symmetrize(Sigma)
    return out


def as_blocks(blocks) -> np.ndarray:
    """Coerce a sequence of equally-shaped matrices to a ``(k, r, c)`` array."""
    arr = np.asarray(blocks, dtype=float)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise DimensionError(f"expected a sequence of matrices, got array of shape {arr.shape}")
    return arr


def stack(blocks) -> np.ndarray:
    """Vertical stack ``[M_0; M_1; ...]`` as one tall matrix."""
    b = as_blocks(blocks)
    return b.reshape(-1, b.shape[2])


def block_transpose(blocks) -> np.ndarray:
    """Blocks of ``M^#``: the same stack built from transposed blocks."""
    return as_blocks(blocks).transpose(0, 2, 1)


def _check_kernel_dims(M_left: np.ndarray, Sb: np.ndarray, M_right: np.ndarray) -> None:
    if Sb.ndim != 2 or Sb.shape[0] != Sb.shape[1]:
        raise DimensionError(f"Sigma_bar must be square, got {Sb.shape}")
    k = Sb.shape[0]
    if M_left.shape[0] != k or M_right.shape[0] != k:
        raise DimensionError(
            f"block counts {M_left.shape[0]}, {M_right.shape[0]} do not match Sigma_bar dimension {k}"
        )
    if M_left.shape[1] != M_right.shape[1]:
        raise DimensionError(
            f"block row dimensions differ: {M_left.shape[1]} vs {M_right.shape[1]}"
        )


def kron_quadratic(M_left, Sb, P, M_right=None) -> np.ndarray:
    """Evaluate ``M_left^T (Sb kron P) M_right`` as a block sum.

    Parameters
    ----------
    M_left, M_right : array_like, shape (k, n, p) / (k, n, q)
        Stacked matrices given as blocks. ``M_right`` defaults to ``M_left``.
    Sb : array_like, shape (k, k)
        Augmented covariance.
    P : array_like, shape (n, n)

    Returns
    -------
    ndarray, shape (p, q)
        Symmetrized when both sides are the same stack and ``P`` is symmetric.
    """
    Ml = as_blocks(M_left)
    same = M_right is None or M_right is M_left
    Mr = Ml if same else as_blocks(M_right)
    if not same and Mr.shape == Ml.shape and np.array_equal(Mr, Ml):
        same = True
    Sb = np.asarray(Sb, dtype=float)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    _check_kernel_dims(Ml, Sb, Mr)
    n = Ml.shape[1]
    if P.shape != (n, n):
        raise DimensionError(f"P must be {n}x{n}, got {P.shape}")
    # sum_j Sb[i, j] P M_right[j] for every i, then contract with M_left[i]^T
    PM = np.einsum("ij,ab,jbl->ial", Sb, P, Mr)
    out = np.einsum("iak,ial->kl", Ml, PM)
    if same and is_symmetric(P):
        out = symmetrize(out)
    return out


def lifted_operator_matrix(M_left, Sb, M_right=None) -> np.ndarray:
    """Matrix ``T`` with ``T @ P.ravel() == kron_quadratic(M_left, Sb, P, M_right).ravel()``.

    Built column by column from the images of the canonical basis matrices
    (row-major vectorization).
    """
    Ml = as_blocks(M_left)
    Mr = Ml if M_right is None else as_blocks(M_right)
    Sb = np.asarray(Sb, dtype=float)
    _check_kernel_dims(Ml, Sb, Mr)
    n = Ml.shape[1]
    basis = np.eye(n * n).reshape(n * n, n, n)
    images = np.einsum("ij,iak,eab,jbl->ekl", Sb, Ml, basis, Mr)
    return images.reshape(n * n, -1).T


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Multiplicative-noise system together with its quadratic cost weights."""

    A_blocks: np.ndarray
    B_blocks: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Sigma: np.ndarray
    Sigma_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = as_blocks(self.A_blocks).copy()
        B = as_blocks(self.B_blocks).copy()
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))

        n_w = Sigma.shape[0]
        n_x = A.shape[1]
        if A.shape != (n_w + 1, n_x, n_x):
            raise DimensionError(
                f"A blocks must have shape ({n_w + 1}, {n_x}, {n_x}), got {A.shape}"
            )
        if B.shape[:2] != (n_w + 1, n_x):
            raise DimensionError(
                f"B blocks must have shape ({n_w + 1}, {n_x}, n_u), got {B.shape}"
            )
        n_u = B.shape[2]
        if Q.shape != (n_x, n_x):
            raise DimensionError(f"Q must be {n_x}x{n_x}, got {Q.shape}")
        if R.shape != (n_u, n_u):
            raise DimensionError(f"R must be {n_u}x{n_u}, got {R.shape}")
        for name, M in (("Q", Q), ("R", R)):
            if not is_symmetric(M):
                raise InvalidSystemError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(symmetrize(M)).min() <= 0:
                raise InvalidSystemError(f"{name} must be positive definite")
        Sb = sigma_bar(Sigma)
        if np.linalg.eigvalsh(Sb).min() < -DEFAULT_RTOL * max(1.0, spectral_norm(Sb)):
            raise InvalidSystemError("Sigma must be positive semidefinite")

        values = {"A_blocks": A, "B_blocks": B, "Q": symmetrize(Q), "R": symmetrize(R),
                  "Sigma": symmetrize(Sigma), "Sigma_bar": Sb}
        for name, value in values.items():
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_x(self) -> int:
        return self.A_blocks.shape[1]

    @property
    def n_u(self) -> int:
        return self.B_blocks.shape[2]

    @property
    def n_w(self) -> int:
        return self.A_blocks.shape[0] - 1

    @property
    def Am(self) -> np.ndarray:
        return stack(self.A_blocks)

    @property
    def Bm(self) -> np.ndarray:
        return stack(self.B_blocks)

    def closed_loop_blocks(self, K) -> np.ndarray:
        """Blocks of ``L_K = A + B K``."""
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K.shape != (self.n_u, self.n_x):
            raise DimensionError(f"K must be {self.n_u}x{self.n_x}, got {K.shape}")
        return self.A_blocks + self.B_blocks @ K

    def with_sigma(self, Sigma) -> "SystemModel":
        return SystemModel(self.A_blocks, self.B_blocks, self.Q, self.R, Sigma)

    # the three operators entering the Riccati equation
    def F(self, P, Sb=None) -> np.ndarray:
        return kron_quadratic(self.A_blocks, self._sb(Sb), P, self.A_blocks)

    def G(self, P, Sb=None) -> np.ndarray:
        return kron_quadratic(self.B_blocks, self._sb(Sb), P, self.B_blocks)

    def H(self, P, Sb=None) -> np.ndarray:
        return kron_quadratic(self.B_blocks, self._sb(Sb), P, self.A_blocks)

    def _sb(self, Sb):
        return self.Sigma_bar if Sb is None else np.asarray(Sb, dtype=float)
