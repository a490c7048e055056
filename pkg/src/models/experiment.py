"""Validated experiment configuration loaded from JSON."""

import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.models.errors import ConfigError, SchemaError
from src.models.network import MlpArch
from src.models.optimizer import (
    REFIT_TOL,
    STATIONARY_TOL,
    AdamMethod,
    ConstantSchedule,
    FullBatchGA,
    InverseDecay,
    OptimConfig,
    PreconditionedAscent,
)
from src.models.precision import PrecisionEstimate

MethodName = Literal[
    "MAP",
    "FullHessian",
    "GGN",
    "DiagGGN",
    "EigenK",
    "RegVarPointwise",
    "RegVarAmortized",
    "RegVarInSample",
    "RegVarParam",
    "RegVarDataAug",
]

REGVAR_METHODS = (
    "RegVarPointwise",
    "RegVarAmortized",
    "RegVarInSample",
    "RegVarParam",
    "RegVarDataAug",
)

DATASET_NAMES = (
    "quadratic_uniform",
    "quadratic_inbetween",
    "sin_uniform",
    "sin_inbetween",
    "two_class_inbetween",
)


class ArchSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    input_dim: int = Field(default=1, ge=1)
    hidden_sizes: list[int] = Field(default_factory=lambda: [50])
    output_dim: int = Field(default=1, ge=1)
    activation: Literal["tanh", "identity"] = "tanh"
    use_bias: bool = True

    @field_validator("hidden_sizes")
    @classmethod
    def validate_hidden(cls, v: list[int]) -> list[int]:
        if any(h < 1 for h in v):
            raise ValueError("hidden sizes must be positive")
        return v

    def to_arch(self) -> MlpArch:
        return MlpArch(
            input_dim=self.input_dim,
            hidden_sizes=tuple(self.hidden_sizes),
            output_dim=self.output_dim,
            activation=self.activation,
            use_bias=self.use_bias,
        )


class OptimizerSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["adam", "ga"] = "adam"
    lr: float = Field(default=0.005, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    max_steps: int = Field(default=20000, ge=1)
    convergence_tol: float = Field(default=1e-7, gt=0)
    refit_max_steps: int = Field(default=20000, ge=1)
    batch_size: int | None = Field(default=None, ge=1)
    sampling: Literal["with_replacement", "epoch_shuffle"] = "with_replacement"
    decay: float = Field(default=0.0, ge=0)
    polish_max_iters: int = Field(default=100, ge=0)
    stationarity_tol: float = Field(default=STATIONARY_TOL, gt=0)
    refit: Literal["preconditioned", "first_order"] = "preconditioned"

    def to_optim_config(self, seed: int) -> OptimConfig:
        method = (
            AdamMethod(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
            if self.name == "adam"
            else FullBatchGA(lr=self.lr)
        )
        schedule = InverseDecay(1.0, self.decay) if self.decay > 0 else ConstantSchedule()
        return OptimConfig(
            method=method,
            max_steps=self.max_steps,
            convergence_tol=self.convergence_tol,
            batch_size=self.batch_size,
            seed=seed,
            schedule=schedule,
            sampling=self.sampling,
        )

    def to_refit_config(self, seed: int, curvature: PrecisionEstimate | None = None) -> OptimConfig:
        """Refits start at a stationary MAP; with a factored curvature they are preconditioned by it."""
        cfg = self.to_optim_config(seed).replace(
            max_steps=self.refit_max_steps,
            convergence_tol=min(self.convergence_tol, REFIT_TOL),
            stationarity_tol=self.stationarity_tol,
        )
        if self.refit == "preconditioned" and curvature is not None and curvature.cholesky_factor is not None:
            cfg = cfg.replace(method=PreconditionedAscent(curvature.cholesky_factor))
        return cfg


class ExperimentConfig(BaseModel):
    """Benchmark configuration; defaults reproduce the synthetic regression setup."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    datasets: list[str] = Field(
        default_factory=lambda: [
            "quadratic_uniform",
            "quadratic_inbetween",
            "sin_uniform",
            "sin_inbetween",
        ]
    )
    arch: ArchSettings = Field(default_factory=ArchSettings)
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    prior_var: float = Field(default=3.0, gt=0)
    obs_var_grid: list[float] = Field(default_factory=lambda: [0.005, 0.01, 0.05, 0.1, 0.5, 1.0])
    methods: list[MethodName] = Field(
        default_factory=lambda: ["MAP", "FullHessian", "GGN", "EigenK", "RegVarAmortized"]
    )
    lam: float = Field(default=1e-3, alias="lambda")
    lambda_grid: list[float] = Field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    eigen_k: int | None = Field(default=None, ge=1)
    param_l1_denominator: float | None = Field(default=None, gt=0)
    sparsity_z: list[float] = Field(default_factory=lambda: [1.0])

    @model_validator(mode="before")
    @classmethod
    def accept_single_dataset(cls, data):
        if isinstance(data, dict) and "dataset" in data:
            data = dict(data)
            name = data.pop("dataset")
            data.setdefault("datasets", [name])
        return data

    @field_validator("datasets")
    @classmethod
    def validate_datasets(cls, v: list[str]) -> list[str]:
        if not v:
            raise ValueError("datasets must not be empty")
        unknown = [name for name in v if name not in DATASET_NAMES]
        if unknown:
            raise ValueError(f"unknown datasets: {unknown}")
        return v

    @field_validator("obs_var_grid", "lambda_grid", "seeds", "methods", "sparsity_z")
    @classmethod
    def validate_non_empty(cls, v: list) -> list:
        if not v:
            raise ValueError("grid must not be empty")
        return v

    @field_validator("obs_var_grid", "sparsity_z")
    @classmethod
    def validate_positive(cls, v: list[float]) -> list[float]:
        if any(not x > 0 for x in v):
            raise ValueError("values must be positive")
        return v

    @field_validator("lam")
    @classmethod
    def validate_lam(cls, v: float) -> float:
        if not 0 < abs(v) <= 0.1:
            raise ValueError("|lambda| must lie in (0, 0.1]")
        return v

    @field_validator("lambda_grid")
    @classmethod
    def validate_lambda_grid(cls, v: list[float]) -> list[float]:
        if any(not 0 < abs(x) <= 0.1 for x in v):
            raise ValueError("every |lambda| must lie in (0, 0.1]")
        return v

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v: list[int]) -> list[int]:
        if any(s < 0 for s in v):
            raise ValueError("seeds must be unsigned")
        return v

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise SchemaError(f"Config file {path} is not valid JSON: {e}") from e
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            details = e.errors(include_url=False, include_context=False)
            raise SchemaError(f"Invalid experiment config: {e}", errors=details) from e

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]
