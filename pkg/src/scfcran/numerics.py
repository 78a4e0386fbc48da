"""Dense complex linear algebra used by the solvers.

Thin wrappers over LAPACK (via numpy/scipy) that enforce the contracts the
rest of the package relies on: descending eigenvalues for Hermitian input and
Cholesky-based solves for Hermitian positive definite systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class ContractViolation(ValueError):
    """Input does not satisfy an operation's precondition."""


class NumericalFailure(ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


@dataclass(frozen=True)
class HermitianEvd:
    eigenvalues: np.ndarray  # real, nonincreasing
    eigenvectors: np.ndarray  # columns are orthonormal eigenvectors

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.conj().T


def _check_square(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ContractViolation("matrix has non-finite entries")
    return A


def hermitian_evd(A: np.ndarray, rtol: float = 1e-10) -> HermitianEvd:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    The input is symmetrized as ``(A + A^H) / 2`` before decomposition so that
    rounding-level asymmetry does not leak into the result.

    Raises
    ------
    ContractViolation
        If ``A`` is not square or deviates from Hermitian by more than
        ``rtol`` relative to its largest entry.
    """
    A = _check_square(A).astype(complex)
    scale = max(np.abs(A).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(A - A.conj().T).max(initial=0.0) > rtol * scale:
        raise ContractViolation("matrix is not Hermitian")
    A = 0.5 * (A + A.conj().T)
    w, U = np.linalg.eigh(A)
    return HermitianEvd(eigenvalues=w[::-1].copy(), eigenvectors=U[:, ::-1].copy())


def solve_hpd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for Hermitian positive definite ``A``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    A = _check_square(A)
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"matrix is not positive definite: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, b, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("solve produced non-finite values")
    return x
