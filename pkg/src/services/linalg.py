"""Dense symmetric factor/solve and eigen routines for the Laplace baselines."""

import math

import numpy as np
import scipy.linalg

from src.models.errors import (
    ConvergenceFailure,
    DegenerateEigenvalue,
    DimensionMismatch,
    NotPositiveDefinite,
)
from src.models.linalg import EigenPairs, SymMatrix

PIVOT_FLOOR = 1e-12


def cholesky(a: SymMatrix) -> np.ndarray:
    """Lower Cholesky factor, rejecting pivots at or below the floor."""
    try:
        lower = scipy.linalg.cholesky(a.entries, lower=True)
    except scipy.linalg.LinAlgError as e:
        raise NotPositiveDefinite(
            f"Cholesky failed: {e}", min_eigenvalue=min_eigenvalue(a)
        ) from e
    pivots = np.diag(lower) ** 2
    if np.min(pivots) <= PIVOT_FLOOR:
        raise NotPositiveDefinite(
            f"Cholesky pivot {np.min(pivots):.3e} at or below {PIVOT_FLOOR}",
            min_eigenvalue=min_eigenvalue(a),
        )
    return lower


def solve_spd(a: SymMatrix, b: np.ndarray, lower: np.ndarray | None = None) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A.

    b may be a vector or a matrix of right-hand sides (columns). A precomputed
    Cholesky factor can be passed to skip refactorization.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.dim:
        raise DimensionMismatch(f"Right-hand side has {b.shape[0]} rows, matrix is {a.dim}×{a.dim}")
    if lower is None:
        lower = cholesky(a)
    return scipy.linalg.cho_solve((lower, True), b)


def sym_eigen(a: SymMatrix) -> EigenPairs:
    """Eigenpairs of a symmetric matrix, eigenvalues descending."""
    try:
        values, vectors = scipy.linalg.eigh(a.entries)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise ConvergenceFailure(f"Symmetric eigensolver did not converge: {e}") from e
    order = np.argsort(values)[::-1]
    return EigenPairs(values=values[order], vectors=vectors[:, order])


def min_eigenvalue(a: SymMatrix) -> float | None:
    try:
        return float(scipy.linalg.eigvalsh(a.entries, subset_by_index=[0, 0])[0])
    except (scipy.linalg.LinAlgError, ValueError):
        return None


def low_rank_inverse_quadform(eigs: EigenPairs, g: np.ndarray) -> float | np.ndarray:
    """Σᵢ (vᵢᵀg)²/λᵢ over the retained pairs. g may hold one vector per row."""
    if np.any(eigs.values <= PIVOT_FLOOR):
        raise DegenerateEigenvalue(
            f"Retained eigenvalue {np.min(eigs.values):.3e} at or below {PIVOT_FLOOR}"
        )
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != eigs.vectors.shape[0]:
        raise DimensionMismatch(
            f"Vector length {g.shape[-1]} does not match dimension {eigs.vectors.shape[0]}"
        )
    proj = g @ eigs.vectors
    return np.sum(proj**2 / eigs.values, axis=-1)


def eigen_rank(k_total: int) -> int:
    """round(ln K) with halves rounded up, at least 1."""
    return max(1, math.floor(math.log(k_total) + 0.5))
