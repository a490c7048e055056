"""Optimizer configuration and fit outcomes."""

from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from src.models.network import ParamVector

MAP_TOL = 1e-7
REFIT_TOL = 1e-9
STATIONARY_TOL = 1e-7


@dataclass(frozen=True)
class AdamMethod:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class FullBatchGA:
    lr: float

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass(frozen=True, eq=False)
class PreconditionedAscent:
    """Full-batch steps P⁻¹·∇ with a fixed precision P given by its lower Cholesky factor.

    Warm-started at a MAP with P the Laplace precision there, this is a chord
    Newton iteration: it converges to the same optimum as plain ascent, in a
    handful of steps when the regularizer is small.
    """

    cholesky_factor: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.cholesky_factor, dtype=float)
        if lower.ndim != 2 or lower.shape[0] != lower.shape[1]:
            raise ValueError(f"cholesky_factor must be square, got shape {lower.shape}")
        object.__setattr__(self, "cholesky_factor", lower)


@dataclass(frozen=True)
class ConstantSchedule:
    def factor(self, step: int) -> float:
        return 1.0


@dataclass(frozen=True)
class InverseDecay:
    """γ(j) = γ₀ / (1 + decay·j), applied as a multiplier on the method's lr."""

    gamma0: float = 1.0
    decay: float = 0.0

    def __post_init__(self):
        if not self.gamma0 > 0 or self.decay < 0:
            raise ValueError("InverseDecay needs gamma0 > 0 and decay >= 0")

    def factor(self, step: int) -> float:
        return self.gamma0 / (1.0 + self.decay * step)


OptimMethod = Union[AdamMethod, FullBatchGA, PreconditionedAscent]
Schedule = Union[ConstantSchedule, InverseDecay]
Sampling = Literal["with_replacement", "epoch_shuffle"]


@dataclass(frozen=True)
class OptimConfig:
    """batch_size None means full batch; FullBatchGA and PreconditionedAscent always use the full batch.

    stationarity_tol, when set, is the gradient ∞-norm a warm start must already
    satisfy before a regularized refit may begin.
    """

    method: OptimMethod = field(default_factory=AdamMethod)
    max_steps: int = 20000
    convergence_tol: float = MAP_TOL
    batch_size: int | None = None
    seed: int = 0
    schedule: Schedule = field(default_factory=ConstantSchedule)
    sampling: Sampling = "with_replacement"
    stationarity_tol: float | None = None

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be at least 1, got {self.max_steps}")
        if not self.convergence_tol > 0:
            raise ValueError(f"convergence_tol must be positive, got {self.convergence_tol}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.stationarity_tol is not None and not self.stationarity_tol > 0:
            raise ValueError(f"stationarity_tol must be positive, got {self.stationarity_tol}")

    def replace(self, **changes) -> "OptimConfig":
        values = {
            "method": self.method,
            "max_steps": self.max_steps,
            "convergence_tol": self.convergence_tol,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "schedule": self.schedule,
            "sampling": self.sampling,
            "stationarity_tol": self.stationarity_tol,
        }
        values.update(changes)
        return OptimConfig(**values)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t)


@dataclass
class FitResult:
    params: ParamVector
    trace: list[float] = field(default_factory=list)
    steps: int = 0
    converged: bool = False
    state: AdamState | None = None
    grad_inf: float | None = None
