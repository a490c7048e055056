"""Dense symmetric matrix value types."""

from dataclasses import dataclass

import numpy as np

from src.models.errors import DimensionMismatch

SYMMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class SymMatrix:
    """A K×K real symmetric matrix; the array is copied and made read-only."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionMismatch(f"SymMatrix needs a non-empty square array, got {a.shape}")
        gap = np.abs(a - a.T)
        if np.any(gap > SYMMETRY_RTOL * np.maximum(1.0, np.abs(a))):
            raise ValueError(f"Matrix is not symmetric (max asymmetry {gap.max():.3e})")
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)

    @classmethod
    def symmetrized(cls, a: np.ndarray) -> "SymMatrix":
        """Build from (A + Aᵀ)/2 for arrays that are symmetric up to assembly noise."""
        a = np.asarray(a, dtype=float)
        return cls(0.5 * (a + a.T))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues sorted descending with matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.values.shape[0]:
            raise DimensionMismatch(
                f"{self.values.shape[0]} eigenvalues do not match vectors of shape "
                f"{self.vectors.shape}"
            )

    def top(self, k: int) -> "EigenPairs":
        """Keep the k largest pairs."""
        if not 1 <= k <= self.values.shape[0]:
            raise ValueError(f"k must lie in [1, {self.values.shape[0]}], got {k}")
        return EigenPairs(values=self.values[:k].copy(), vectors=self.vectors[:, :k].copy())

    @property
    def k(self) -> int:
        return self.values.shape[0]
