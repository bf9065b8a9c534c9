"""Eigenvalue utilities and regularizer construction.

Builds the indicator-gated diagonal stabilizer for the discrete dynamics, the
Gershgorin diagonal shifts that keep the solve matrices invertible away from
critical points, and the Gauss-Newton metric S = J^T J + lambda_k I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError


@dataclass(frozen=True)
class BlockEigs:
    """Extreme eigenvalues of the player blocks: min of H_xx, max of H_yy."""

    lambda_x: float
    lambda_y: float


@dataclass
class RegularizerParams:
    """Constants for the stabilizer and the Gershgorin shifts.

    ``b_x > 1/2`` and ``b_y < -1/2`` gate the diagonal stabilizer;
    ``lambda0`` is the Gershgorin floor and ``delta0`` the criticality gate on
    ``||omega||`` below which all shifts vanish.  ``beta_literal_sign`` adds
    the raw (negative) ``b_y`` to the bottom block instead of its magnitude.
    """

    b_x: float = 1.0
    b_y: float = -1.0
    lambda0: float = 5.0
    delta0: float = 5e-5
    beta_literal_sign: bool = False

    def __post_init__(self):
        if not self.b_x > 0.5:
            raise ValueError(f"b_x must be > 1/2, got {self.b_x}")
        if not self.b_y < -0.5:
            raise ValueError(f"b_y must be < -1/2, got {self.b_y}")
        if not self.lambda0 > 0.0:
            raise ValueError(f"lambda0 must be > 0, got {self.lambda0}")
        if not self.delta0 > 0.0:
            raise ValueError(f"delta0 must be > 0, got {self.delta0}")


def _sym_extreme_eig(block: np.ndarray, largest: bool) -> float:
    # eigenvalue of a 1x1 block is its entry; otherwise dense symmetric solve
    if block.shape[0] == 1:
        return float(block[0, 0])
    w = np.linalg.eigvalsh(0.5 * (block + block.T))
    return float(w[-1] if largest else w[0])


def extreme_block_eigs(J: np.ndarray, dims: tuple[int, int]) -> BlockEigs:
    """Extreme eigenvalues of the symmetrized Hessian blocks read off J.

    The top-left block of J is H_xx and the bottom-right is -H_yy, so
    ``lambda_x = min eig sym(J[:n,:n])`` and ``lambda_y = max eig sym(-J[n:,n:])``.
    """
    J = np.asarray(J, dtype=float)
    n, m = dims
    if J.shape != (n + m, n + m):
        raise ValueError(f"J has shape {J.shape}, expected ({n + m}, {n + m})")
    if not np.all(np.isfinite(J)):
        raise ValueError("J contains non-finite entries")
    lam_x = _sym_extreme_eig(J[:n, :n], largest=False)
    lam_y = _sym_extreme_eig(-J[n:, n:], largest=True)
    return BlockEigs(lambda_x=lam_x, lambda_y=lam_y)


def beta_diagonal(eigs: BlockEigs, params: RegularizerParams, dims: tuple[int, int]) -> np.ndarray:
    """Diagonal of the stabilizer as a length n+m vector (see build_beta)."""
    n, m = dims
    diag = np.zeros(n + m)
    if eigs.lambda_x > 0.0:
        diag[:n] = params.b_x
    if eigs.lambda_y < 0.0:
        diag[n:] = params.b_y if params.beta_literal_sign else abs(params.b_y)
    return diag


def build_beta(eigs: BlockEigs, params: RegularizerParams, dims: tuple[int, int]) -> np.ndarray:
    """Indicator-gated diagonal stabilizer.

    Top block is ``1{lambda_x > 0} b_x I_n``; bottom block is
    ``1{lambda_y < 0} |b_y| I_m`` (magnitude convention; set
    ``params.beta_literal_sign`` for the signed variant).
    """
    return np.diag(beta_diagonal(eigs, params, dims))


def gershgorin_diagonal(A: np.ndarray, lambda0: float) -> np.ndarray:
    """Diagonal shift pushing every Gershgorin disc's left edge to >= lambda0."""
    A = np.asarray(A, dtype=float)
    radii = np.sum(np.abs(A), axis=1) - np.abs(np.diagonal(A))
    deficit = np.diagonal(A) - radii
    return np.maximum(0.0, lambda0 - deficit)


def gershgorin_regularizer(A: np.ndarray, lambda0: float, active: bool) -> np.ndarray:
    """Diagonal regularizer M with M_ii = max(0, lambda0 - (A_ii - R_i)).

    When ``active`` is false (the caller found ``||omega|| <= delta0``) the
    zero matrix is returned so that shifts vanish at critical points.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not active:
        return np.zeros_like(A)
    return np.diag(gershgorin_diagonal(A, lambda0))


def build_gn_metric(J: np.ndarray, omega_norm: float, lambda0: float) -> np.ndarray:
    """Gauss-Newton metric S = J^T J + min(lambda0, ||omega||) I, exactly symmetric."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {J.shape}")
    S = J.T @ J
    S = 0.5 * (S + S.T)
    lam = min(float(lambda0), float(omega_norm))
    if lam > 0.0:
        S = S + lam * np.eye(J.shape[0])
    return S


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    return float(np.max(np.abs(eigs)))
