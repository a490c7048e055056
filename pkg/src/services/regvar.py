"""Variance estimates from finite differences of regularized refits.

Each estimator warm-starts at a stationary MAP, refits once with a small
regularizer of strength +λ and once with −λ, and reads the variance off half the
induced difference divided by |λ|. Drift the refits share cancels in the
difference, and so does the part of the shift quadratic in λ.
"""

from dataclasses import replace

import numpy as np

from src.models.dataset import Dataset
from src.models.errors import ConfigError, SignalBelowNoise
from src.models.network import ParamVector
from src.models.objective import (
    AmortizedAbs,
    DataAugment,
    InSampleAbs,
    LogJointSpec,
    ParamL1,
    PredictionAt,
    RegularizerSpec,
)
from src.models.optimizer import REFIT_TOL, AdamState, FitResult, OptimConfig
from src.models.regvar import LambdaSweep, RegVarResult
from src.services.network import forward, forward_batch, jacobian
from src.services.objective import augmented_targets
from src.services.optimizer import fit, require_stationary, warm_start_fit
from src.utils.event_store import EventStore
from src.utils.logger import StructuredLogger
from src.utils.pool import parallel_map

MAX_ABS_LAMBDA = 0.1
NOISE_FLOOR_RATIO = 10.0
SWEEP_AGREEMENT = 0.02

logger = StructuredLogger("RegVar")


def _check_lam(lam: float) -> None:
    if not 0 < abs(lam) <= MAX_ABS_LAMBDA:
        raise ConfigError(f"|λ| must lie in (0, {MAX_ABS_LAMBDA}], got {lam}", lam=lam)


def _noise_floor(cfg: OptimConfig) -> float:
    return NOISE_FLOOR_RATIO * min(cfg.convergence_tol, REFIT_TOL)


def _guard(shift: float, cfg: OptimConfig, lam: float, what: str) -> None:
    floor = _noise_floor(cfg)
    if shift < floor:
        raise SignalBelowNoise(
            f"{what} moved by {shift:.3e}, below the optimizer noise floor {floor:.3e}; "
            "increase |λ|",
            lam=lam,
            shift=shift,
        )


def mirrored_refits(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    regularizer: RegularizerSpec,
    cfg: OptimConfig,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> tuple[FitResult, FitResult]:
    """Warm-started refits under the regularizer at +λ and at −λ, same config and state."""
    plus = warm_start_fit(
        theta_map, spec.with_regularizer(regularizer), dataset, cfg, state=state, event_store=event_store
    )
    minus = warm_start_fit(
        theta_map,
        spec.with_regularizer(replace(regularizer, lam=-regularizer.lam)),
        dataset,
        cfg,
        state=state,
        event_store=event_store,
    )
    return plus, minus


def pointwise_variance(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    query: np.ndarray,
    output: int,
    lam: float,
    cfg: OptimConfig,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> float:
    """|f_{θ(x,λ)}(x)[j] − f_{θ(x,−λ)}(x)[j]|/(2|λ|) for refits regularized by ±λ·f(x)[j]."""
    _check_lam(lam)
    query = np.asarray(query, dtype=float).reshape(-1)
    plus, minus = mirrored_refits(
        theta_map, spec, dataset, PredictionAt(query, output, lam), cfg, state, event_store
    )
    shift = 0.5 * abs(float(forward(plus.params, query)[output] - forward(minus.params, query)[output]))
    _guard(shift, cfg, lam, "Prediction")
    return shift / abs(lam)


def pointwise_fit(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    queries: np.ndarray,
    lam: float,
    cfg: OptimConfig,
    outputs: list[int] | None = None,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> RegVarResult:
    """Two refits per (query, output); queries run on the worker pool."""
    _check_lam(lam)
    queries = np.asarray(queries, dtype=float).reshape(-1, theta_map.arch.input_dim)
    outputs = list(range(theta_map.arch.output_dim)) if outputs is None else outputs
    jobs = [(i, j) for i in range(queries.shape[0]) for j in outputs]
    values = parallel_map(
        lambda job: pointwise_variance(
            theta_map, spec, dataset, queries[job[0]], job[1], lam, cfg, state, event_store
        ),
        jobs,
    )
    variances = np.full((queries.shape[0], theta_map.arch.output_dim), np.nan)
    for (i, j), v in zip(jobs, values, strict=True):
        variances[i, j] = v
    logger.info("Pointwise refits complete", {"queries": queries.shape[0], "refits": 2 * len(jobs)})
    return RegVarResult("pointwise", lam, theta_map, None, variances, queries)


def _function_result(
    mode: str,
    theta_map: ParamVector,
    plus: ParamVector,
    minus: ParamVector,
    lam: float,
    queries: np.ndarray,
    cfg: OptimConfig,
) -> RegVarResult:
    shifts = 0.5 * np.abs(forward_batch(plus, queries) - forward_batch(minus, queries))
    _guard(float(np.max(shifts)), cfg, lam, "Predictions")
    return RegVarResult(mode, lam, theta_map, plus, shifts / abs(lam), queries, mirror_params=minus)


def amortized_fit(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    eval_inputs: np.ndarray,
    lam: float,
    cfg: OptimConfig,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> RegVarResult:
    """Refits regularized by ±(λ/m)·Σ‖f(x̂)‖₁; the result is evaluable anywhere."""
    _check_lam(lam)
    reg = AmortizedAbs(eval_inputs, lam)
    plus, minus = mirrored_refits(theta_map, spec, dataset, reg, cfg, state, event_store)
    logger.info(
        "Amortized refits complete",
        {
            "eval_inputs": reg.eval_inputs.shape[0],
            "steps": [plus.steps, minus.steps],
            "converged": plus.converged and minus.converged,
        },
    )
    return _function_result("amortized", theta_map, plus.params, minus.params, lam, reg.eval_inputs, cfg)


def in_sample_fit(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    lam: float,
    cfg: OptimConfig,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> RegVarResult:
    """Amortized refits whose evaluation inputs are the training inputs."""
    _check_lam(lam)
    plus, minus = mirrored_refits(theta_map, spec, dataset, InSampleAbs(lam), cfg, state, event_store)
    return _function_result("in_sample", theta_map, plus.params, minus.params, lam, dataset.inputs, cfg)


def data_augmented_fit(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    lam: float,
    cfg: OptimConfig,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> RegVarResult:
    """In-sample RegVar for Gaussian likelihoods by refitting on targets shifted by ±λσ²/n.

    Shift signs follow the MAP outputs so each refit matches the in-sample objective.
    """
    _check_lam(lam)
    base = spec.without_regularizer()
    require_stationary(theta_map, base, dataset, cfg.stationarity_tol)
    refit_cfg = cfg.replace(convergence_tol=min(cfg.convergence_tol, REFIT_TOL))
    refits = []
    for signed in (lam, -lam):
        augmented = augmented_targets(
            dataset, spec.with_regularizer(DataAugment(signed)), reference=theta_map
        )
        refits.append(fit(theta_map, base, augmented, refit_cfg, state=state, event_store=event_store))
    plus, minus = refits
    return _function_result("data_aug", theta_map, plus.params, minus.params, lam, dataset.inputs, cfg)


def param_uncertainty_fit(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    lam: float,
    cfg: OptimConfig,
    denominator: float | None = None,
    state: AdamState | None = None,
    event_store: EventStore | None = None,
) -> RegVarResult:
    """Per-parameter variances |θ₊ − θ₋|/(2|λ_eff|) from refits L1-regularized at ±λ."""
    _check_lam(lam)
    reg = ParamL1(lam, denominator)
    plus, minus = mirrored_refits(theta_map, spec, dataset, reg, cfg, state, event_store)
    shifts = 0.5 * np.abs(plus.params.values - minus.params.values)
    _guard(float(np.max(shifts)), cfg, lam, "Parameters")
    lam_eff = reg.effective_lam(spec.n, theta_map.arch.param_count)
    return RegVarResult(
        "param_uncertainty",
        lam,
        theta_map,
        plus.params,
        shifts / abs(lam_eff),
        None,
        mirror_params=minus.params,
    )


def param_variance_to_function(
    theta: ParamVector, param_variances: np.ndarray, x: np.ndarray
) -> np.ndarray:
    """Σₖ (∂f/∂θₖ)²·σ²_θₖ per output, the delta method with a diagonal covariance."""
    jac = jacobian(theta, x)
    return np.einsum("nok,k->no", jac**2, np.asarray(param_variances, dtype=float))


def sparsify(theta: ParamVector, param_variances: np.ndarray, z: float = 1.0) -> ParamVector:
    """Zero every θᵢ whose interval θᵢ ± z·σᵢ contains 0."""
    if not z > 0:
        raise ConfigError(f"z must be positive, got {z}")
    variances = np.asarray(param_variances, dtype=float)
    values = theta.values.copy()
    values[np.abs(values) <= z * np.sqrt(variances)] = 0.0
    return theta.replace(values)


def lambda_sweep_pointwise(
    theta_map: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    query: np.ndarray,
    output: int,
    lams: list[float],
    cfg: OptimConfig,
    state: AdamState | None = None,
) -> LambdaSweep:
    """Pointwise estimates for |λ| decreasing, extrapolated with the last pair.

    The central difference carries an error quadratic in λ, so with ratio r between
    the last two strengths the limit estimate is (r²·v_small − v_large)/(r² − 1).
    """
    ordered = sorted(lams, key=abs, reverse=True)
    values = [
        pointwise_variance(theta_map, spec, dataset, query, output, lam, cfg, state)
        for lam in ordered
    ]
    if len(values) == 1:
        return LambdaSweep(tuple(ordered), tuple(values), values[0], True, SWEEP_AGREEMENT)
    big, small = values[-2], values[-1]
    ratio = (abs(ordered[-2]) / abs(ordered[-1])) ** 2
    extrapolated = max(0.0, (ratio * small - big) / (ratio - 1.0)) if ratio != 1 else small
    scale = max(abs(big), abs(small))
    agree = scale == 0 or abs(big - small) <= SWEEP_AGREEMENT * scale
    if not agree:
        logger.warning(
            "λ sweep estimates disagree",
            {"lams": ordered, "variances": values, "tolerance": SWEEP_AGREEMENT},
        )
    return LambdaSweep(tuple(ordered), tuple(values), extrapolated, agree, SWEEP_AGREEMENT)
