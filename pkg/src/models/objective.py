"""Log-joint specifications: likelihood, prior and regularizer variants."""

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from src.models.errors import DimensionMismatch


@dataclass(frozen=True)
class GaussianLikelihood:
    obs_var: float

    def __post_init__(self):
        if not self.obs_var > 0:
            raise ValueError(f"obs_var must be positive, got {self.obs_var}")


@dataclass(frozen=True)
class CategoricalLikelihood:
    """Softmax cross-entropy over the network outputs; targets are class indices."""


@dataclass(frozen=True)
class GaussianPrior:
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError(f"prior variance must be positive, got {self.var}")

    @property
    def precision(self) -> float:
        return 1.0 / self.var


@dataclass(frozen=True)
class LaplacePrior:
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"Laplace scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class FlatPrior:
    """Improper uniform prior, log p(θ) = 0."""


@dataclass(frozen=True)
class NoRegularizer:
    lam: float = 0.0


@dataclass(frozen=True)
class PredictionAt:
    """λ·f(x)[output]."""

    query: np.ndarray
    output: int
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "query", np.asarray(self.query, dtype=float).reshape(-1))
        _check_lam(self.lam)
        if self.output < 0:
            raise DimensionMismatch(f"Output index must be non-negative, got {self.output}")


@dataclass(frozen=True)
class AmortizedAbs:
    """(λ/m)·Σ‖f(x̂)‖₁ over m evaluation inputs."""

    eval_inputs: np.ndarray
    lam: float

    def __post_init__(self):
        x = np.asarray(self.eval_inputs, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.shape[0] < 1:
            raise ValueError("AmortizedAbs needs at least one evaluation input")
        object.__setattr__(self, "eval_inputs", x)
        _check_lam(self.lam)


@dataclass(frozen=True)
class InSampleAbs:
    """(λ/n)·Σᵢ‖f(xᵢ)‖₁ over the training inputs."""

    lam: float

    def __post_init__(self):
        _check_lam(self.lam)


@dataclass(frozen=True)
class ParamL1:
    """λ·(n/denominator)·‖θ‖₁; the denominator defaults to n·K."""

    lam: float
    denominator: float | None = None

    def __post_init__(self):
        _check_lam(self.lam)
        if self.denominator is not None and not self.denominator > 0:
            raise ValueError(f"denominator must be positive, got {self.denominator}")

    def effective_lam(self, n: int, k: int) -> float:
        denom = self.denominator if self.denominator is not None else n * k
        return self.lam * n / denom


@dataclass(frozen=True)
class DataAugment:
    """Targets shifted by λσ²/n; contributes nothing to the objective itself."""

    lam: float

    def __post_init__(self):
        _check_lam(self.lam)


Likelihood = Union[GaussianLikelihood, CategoricalLikelihood]
Prior = Union[GaussianPrior, LaplacePrior, FlatPrior]
RegularizerSpec = Union[NoRegularizer, PredictionAt, AmortizedAbs, InSampleAbs, ParamL1, DataAugment]


@dataclass(frozen=True)
class LogJointSpec:
    likelihood: Likelihood
    prior: Prior
    n: int
    regularizer: RegularizerSpec = field(default_factory=NoRegularizer)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")

    def with_regularizer(self, regularizer: RegularizerSpec) -> "LogJointSpec":
        return LogJointSpec(self.likelihood, self.prior, self.n, regularizer)

    def without_regularizer(self) -> "LogJointSpec":
        return self.with_regularizer(NoRegularizer())

    @property
    def is_regularized(self) -> bool:
        return not isinstance(self.regularizer, NoRegularizer)


def _check_lam(lam: float) -> None:
    if not np.isfinite(lam):
        raise ValueError(f"λ must be finite, got {lam}")
