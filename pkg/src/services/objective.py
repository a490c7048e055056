"""Log-joint evaluation, regularizer variants and curvature oracles.

All objectives are maximized. A batch B contributes
Σ_{i∈B} log p(yᵢ|f(xᵢ)) + (|B|/n)(log p(θ) + global regularizer) + Σ_{i∈B} (λ/n)‖f(xᵢ)‖₁,
where the last term is present only for in-sample regularization, so that
scaling a batch gradient by n/|B| is an unbiased estimate of the full gradient.
"""

import math

import numpy as np
from scipy.special import logsumexp, softmax

from src.models.dataset import Dataset
from src.models.errors import (
    DimensionMismatch,
    NonFiniteResult,
    SizeCapExceeded,
    UnsupportedLikelihood,
)
from src.models.linalg import SymMatrix
from src.models.network import ParamVector
from src.models.objective import (
    AmortizedAbs,
    CategoricalLikelihood,
    DataAugment,
    FlatPrior,
    GaussianLikelihood,
    GaussianPrior,
    InSampleAbs,
    LaplacePrior,
    LogJointSpec,
    NoRegularizer,
    ParamL1,
    PredictionAt,
)
from src.services.network import backprop, forward_batch, forward_cache, grad_params, vjp
from src.utils.config import config
from src.utils.pool import parallel_map


def _log_likelihood(spec: LogJointSpec, f: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed log-likelihood and its derivative with respect to the outputs."""
    lik = spec.likelihood
    if isinstance(lik, GaussianLikelihood):
        resid = y - f
        value = -0.5 * np.sum(resid**2) / lik.obs_var - 0.5 * resid.size * math.log(
            2 * math.pi * lik.obs_var
        )
        return float(value), resid / lik.obs_var
    if isinstance(lik, CategoricalLikelihood):
        labels = y[:, 0].astype(int)
        if np.any(labels < 0) or np.any(labels >= f.shape[1]):
            raise DimensionMismatch(f"Class labels must lie in [0, {f.shape[1]})")
        rows = np.arange(f.shape[0])
        logp = f - logsumexp(f, axis=1, keepdims=True)
        onehot = np.zeros_like(f)
        onehot[rows, labels] = 1.0
        return float(np.sum(logp[rows, labels])), onehot - softmax(f, axis=1)
    raise UnsupportedLikelihood(f"Unsupported likelihood {type(lik).__name__}")


def _log_prior(spec: LogJointSpec, theta: np.ndarray) -> tuple[float, np.ndarray]:
    prior = spec.prior
    k = theta.shape[0]
    if isinstance(prior, GaussianPrior):
        value = -0.5 * np.sum(theta**2) / prior.var - 0.5 * k * math.log(2 * math.pi * prior.var)
        return float(value), -theta / prior.var
    if isinstance(prior, LaplacePrior):
        value = -np.sum(np.abs(theta)) / prior.scale - k * math.log(2 * prior.scale)
        return float(value), -np.sign(theta) / prior.scale
    if isinstance(prior, FlatPrior):
        return 0.0, np.zeros(k)
    raise ValueError(f"Unsupported prior {type(prior).__name__}")


def _global_regularizer(
    theta: ParamVector, spec: LogJointSpec, need_grad: bool
) -> tuple[float, np.ndarray | None]:
    """Regularizer terms that do not decompose over training examples."""
    reg = spec.regularizer
    k = theta.arch.param_count
    if isinstance(reg, PredictionAt):
        if reg.output >= theta.arch.output_dim:
            raise DimensionMismatch(
                f"Output index {reg.output} out of range for {theta.arch.output_dim} outputs"
            )
        value = reg.lam * float(forward_batch(theta, reg.query.reshape(1, -1))[0, reg.output])
        grad = reg.lam * grad_params(theta, reg.query, reg.output) if need_grad else None
        return value, grad
    if isinstance(reg, AmortizedAbs):
        f = forward_batch(theta, reg.eval_inputs)
        scale = reg.lam / reg.eval_inputs.shape[0]
        value = scale * float(np.sum(np.abs(f)))
        grad = vjp(theta, reg.eval_inputs, scale * np.sign(f)) if need_grad else None
        return value, grad
    if isinstance(reg, ParamL1):
        lam_eff = reg.effective_lam(spec.n, k)
        grad = lam_eff * np.sign(theta.values) if need_grad else None
        return lam_eff * float(np.sum(np.abs(theta.values))), grad
    return 0.0, (np.zeros(k) if need_grad else None)


def data_augment_shift(spec: LogJointSpec) -> float:
    """Per-target shift λσ²/n that turns in-sample regularization into a likelihood term."""
    if not isinstance(spec.likelihood, GaussianLikelihood):
        raise UnsupportedLikelihood("Data augmentation requires a Gaussian likelihood")
    return spec.regularizer.lam * spec.likelihood.obs_var / spec.n


def _evaluate(
    theta: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    index: np.ndarray | None,
    need_grad: bool,
) -> tuple[float, np.ndarray | None]:
    if dataset.d != theta.arch.input_dim:
        raise DimensionMismatch(
            f"Dataset has {dataset.d} input features, network expects {theta.arch.input_dim}"
        )
    x = dataset.inputs if index is None else dataset.inputs[index]
    y = dataset.targets if index is None else dataset.targets[index]
    if isinstance(spec.likelihood, GaussianLikelihood) and y.shape[1] != theta.arch.output_dim:
        raise DimensionMismatch(
            f"Dataset has {y.shape[1]} targets, network has {theta.arch.output_dim} outputs"
        )
    reg = spec.regularizer
    if isinstance(reg, DataAugment):
        y = y + data_augment_shift(spec)

    activations, f = forward_cache(theta, x)
    value, cot = _log_likelihood(spec, f, y)
    if isinstance(reg, InSampleAbs):
        scale = reg.lam / spec.n
        value += scale * float(np.sum(np.abs(f)))
        cot = cot + scale * np.sign(f)

    weight = x.shape[0] / spec.n
    prior_value, prior_grad = _log_prior(spec, theta.values)
    reg_value, reg_grad = _global_regularizer(theta, spec, need_grad)
    value += weight * (prior_value + reg_value)
    if not need_grad:
        return value, None
    grad = backprop(theta, activations, cot, per_example=False)
    grad = grad + weight * (prior_grad + reg_grad)
    return value, grad


def loss_grad(
    theta: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    batch: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Value and exact gradient of the batch contribution (full data when batch is None)."""
    if batch is not None and len(batch) == 0:
        raise DimensionMismatch("Batch must not be empty")
    value, grad = _evaluate(theta, spec, dataset, batch, need_grad=True)
    return value, grad


def log_joint(theta: ParamVector, spec: LogJointSpec, dataset: Dataset) -> float:
    """Full-data log likelihood plus log prior plus the regularizer term."""
    if len(dataset) != spec.n:
        raise DimensionMismatch(f"Dataset has {len(dataset)} rows, spec expects n={spec.n}")
    value, _ = _evaluate(theta, spec, dataset, None, need_grad=False)
    return value


def regularizer_value(
    theta: ParamVector, spec: LogJointSpec, dataset: Dataset | None = None
) -> float:
    """Full-data value of the regularizer term alone.

    In-sample regularization needs the training inputs. Data augmentation acts
    through the targets and adds nothing here.
    """
    reg = spec.regularizer
    if isinstance(reg, NoRegularizer):
        raise ValueError("Spec carries no regularizer")
    if isinstance(reg, InSampleAbs):
        if dataset is None:
            raise ValueError("In-sample regularization needs the training dataset")
        return reg.lam / spec.n * float(np.sum(np.abs(forward_batch(theta, dataset.inputs))))
    if isinstance(reg, DataAugment):
        return 0.0
    value, _ = _global_regularizer(theta, spec, need_grad=False)
    return value


def augmented_targets(
    dataset: Dataset, spec: LogJointSpec, reference: ParamVector | None = None
) -> Dataset:
    """Copy of the dataset with targets shifted by λσ²/n.

    With a reference network the shift carries the sign of f_reference(xᵢ) per
    output, matching the absolute value of the in-sample regularizer.
    """
    if not isinstance(spec.regularizer, DataAugment):
        raise ValueError("augmented_targets needs a DataAugment regularizer")
    shift = data_augment_shift(spec)
    if reference is None:
        return dataset.with_targets(dataset.targets + shift)
    signs = np.sign(forward_batch(reference, dataset.inputs))
    return dataset.with_targets(dataset.targets + shift * signs)


def hvp(theta: ParamVector, spec: LogJointSpec, dataset: Dataset, v: np.ndarray) -> np.ndarray:
    """Hessian-vector product of the full-data log joint by central differences of gradients."""
    v = np.asarray(v, dtype=float)
    if v.shape != theta.values.shape:
        raise DimensionMismatch(f"Direction has shape {v.shape}, parameters {theta.values.shape}")
    h = 1e-4 / max(1.0, float(np.max(np.abs(v))) if v.size else 1.0)
    _, g_plus = loss_grad(theta.replace(theta.values + h * v), spec, dataset)
    _, g_minus = loss_grad(theta.replace(theta.values - h * v), spec, dataset)
    out = (g_plus - g_minus) / (2 * h)
    if not np.all(np.isfinite(out)):
        raise NonFiniteResult("Hessian-vector product is not finite")
    return out


def hessian_columns(theta: ParamVector, spec: LogJointSpec, dataset: Dataset) -> np.ndarray:
    """Unsymmetrized Hessian assembled column by column from hvp(eᵢ)."""
    k = theta.arch.param_count
    if k > config.runtime.hessian_cap:
        raise SizeCapExceeded(
            f"Dense Hessian of {k} parameters exceeds cap {config.runtime.hessian_cap}"
        )
    eye = np.eye(k)
    columns = parallel_map(lambda i: hvp(theta, spec, dataset, eye[i]), range(k))
    return np.column_stack(columns)


def full_hessian(theta: ParamVector, spec: LogJointSpec, dataset: Dataset) -> SymMatrix:
    """∇²_θ of the full-data log joint, symmetrized as (H + Hᵀ)/2."""
    return SymMatrix.symmetrized(hessian_columns(theta, spec, dataset))
