"""Laplace precision estimates."""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from src.models.linalg import EigenPairs, SymMatrix

PrecisionKind = Literal["full_exact", "full_ggn", "diag_ggn", "eigen_k"]


@dataclass(frozen=True)
class PrecisionEstimate:
    """P or a structured stand-in for it.

    payload is a SymMatrix for full kinds, a vector for diag_ggn and EigenPairs for eigen_k.
    jitter is the diagonal repair added before factorization succeeded (0 when none).
    min_eigenvalue is the smallest eigenvalue of the unrepaired full_exact precision.
    Full kinds keep their lower Cholesky factor for repeated solves.
    """

    kind: PrecisionKind
    payload: SymMatrix | np.ndarray | EigenPairs
    prior_precision: float
    jitter: float = 0.0
    min_eigenvalue: float | None = None
    cholesky_factor: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def dim(self) -> int:
        if isinstance(self.payload, SymMatrix):
            return self.payload.dim
        if isinstance(self.payload, EigenPairs):
            return self.payload.vectors.shape[0]
        return int(np.asarray(self.payload).shape[0])

    @property
    def repaired(self) -> bool:
        return self.jitter > 0

    def metadata(self) -> dict:
        meta = {"kind": self.kind, "dim": self.dim, "prior_precision": self.prior_precision}
        if self.kind == "eigen_k":
            meta["k"] = self.payload.k
        if self.kind == "full_exact":
            meta["jitter"] = self.jitter
            meta["min_eigenvalue"] = self.min_eigenvalue
        return meta
