"""Laplace precision baselines and Bayesian delta-method variances."""

from pathlib import Path

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.special import softmax

from src.models.dataset import Dataset
from src.models.errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    UnsupportedLikelihood,
    UnsupportedPrior,
)
from src.models.linalg import EigenPairs, SymMatrix
from src.models.network import ParamVector
from src.models.objective import (
    CategoricalLikelihood,
    GaussianLikelihood,
    GaussianPrior,
    LogJointSpec,
)
from src.models.precision import PrecisionEstimate, PrecisionKind
from src.services.linalg import (
    cholesky,
    eigen_rank,
    low_rank_inverse_quadform,
    min_eigenvalue,
    solve_spd,
    sym_eigen,
)
from src.services.network import forward_batch, jacobian
from src.services.objective import full_hessian
from src.utils.logger import StructuredLogger
from src.utils.rng import make_rng

INITIAL_JITTER = 1e-8
MAX_JITTER_DOUBLINGS = 64

logger = StructuredLogger("Laplace")


def _observation_precision(spec: LogJointSpec, f: np.ndarray) -> np.ndarray:
    """Per-example output precision blocks, shape (n, o, o)."""
    n, o = f.shape
    if isinstance(spec.likelihood, GaussianLikelihood):
        return np.broadcast_to(np.eye(o) / spec.likelihood.obs_var, (n, o, o))
    if isinstance(spec.likelihood, CategoricalLikelihood):
        p = softmax(f, axis=1)
        return np.einsum("ij,jk->ijk", p, np.eye(o)) - np.einsum("ij,ik->ijk", p, p)
    raise UnsupportedLikelihood(f"Unsupported likelihood {type(spec.likelihood).__name__}")


def ggn_matrix(theta: ParamVector, spec: LogJointSpec, dataset: Dataset) -> np.ndarray:
    """Σᵢ Jᵢᵀ Λᵢ Jᵢ over the training inputs, without the prior term."""
    jac = jacobian(theta, dataset.inputs)
    lam = _observation_precision(spec, forward_batch(theta, dataset.inputs))
    return np.einsum("nok,nop,npl->kl", jac, lam, jac)


def ggn_diagonal(theta: ParamVector, spec: LogJointSpec, dataset: Dataset) -> np.ndarray:
    jac = jacobian(theta, dataset.inputs)
    lam = _observation_precision(spec, forward_batch(theta, dataset.inputs))
    return np.einsum("nok,nop,npk->k", jac, lam, jac)


def _repair(p: np.ndarray) -> tuple[SymMatrix, np.ndarray, float, float | None]:
    """Add δ·I, δ doubling from 1e-8, until the Cholesky factorization succeeds."""
    base = SymMatrix.symmetrized(p)
    try:
        return base, cholesky(base), 0.0, None
    except NotPositiveDefinite as e:
        lowest = e.min_eigenvalue
    jitter = INITIAL_JITTER
    eye = np.eye(base.dim)
    for _ in range(MAX_JITTER_DOUBLINGS):
        candidate = SymMatrix(base.entries + jitter * eye)
        try:
            return candidate, cholesky(candidate), jitter, lowest
        except NotPositiveDefinite:
            jitter *= 2
    raise NotPositiveDefinite(
        f"Precision not repairable with jitter up to {jitter:.3e}", min_eigenvalue=lowest
    )


def build_precision(
    theta: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    kind: PrecisionKind,
    k: int | None = None,
    repair: bool = True,
) -> PrecisionEstimate:
    """Precision of the Laplace posterior at a converged MAP.

    The regularizer of spec is ignored. full_exact negates the exact Hessian and,
    when repair is set, adds doubling jitter until it factorizes; otherwise an
    indefinite Hessian raises NotPositiveDefinite with its smallest eigenvalue.
    eigen_k keeps the top k = round(ln K) eigenpairs of the GGN precision unless k is given.
    """
    if not isinstance(spec.prior, GaussianPrior):
        raise UnsupportedPrior("Laplace baselines need a Gaussian prior")
    context = {"kind": kind, "params": theta.arch.param_count, "n": len(dataset)}
    with logger.timed("Precision built", context, level="DEBUG") as fields:
        estimate = _assemble(theta, spec, dataset, kind, k, repair)
        fields.update(estimate.metadata())
    return estimate


def _assemble(
    theta: ParamVector,
    spec: LogJointSpec,
    dataset: Dataset,
    kind: PrecisionKind,
    k: int | None,
    repair: bool,
) -> PrecisionEstimate:
    base = spec.without_regularizer()
    prior_precision = spec.prior.precision
    K = theta.arch.param_count

    if kind == "full_exact":
        p = -full_hessian(theta, base, dataset).entries
        if repair:
            matrix, lower, jitter, lowest = _repair(p)
        else:
            matrix = SymMatrix.symmetrized(p)
            lower, jitter, lowest = cholesky(matrix), 0.0, None
        if lowest is None:
            lowest = min_eigenvalue(matrix)
        estimate = PrecisionEstimate(
            kind,
            matrix,
            prior_precision,
            jitter=jitter,
            min_eigenvalue=lowest,
            cholesky_factor=lower,
        )
        if jitter > 0:
            logger.warning(
                "Exact Hessian was indefinite; added jitter",
                {"jitter": jitter, "min_eigenvalue": lowest, "params": K},
            )
    elif kind == "full_ggn":
        matrix = SymMatrix.symmetrized(prior_precision * np.eye(K) + ggn_matrix(theta, base, dataset))
        estimate = PrecisionEstimate(kind, matrix, prior_precision, cholesky_factor=cholesky(matrix))
    elif kind == "diag_ggn":
        diagonal = prior_precision + ggn_diagonal(theta, base, dataset)
        estimate = PrecisionEstimate(kind, diagonal, prior_precision)
    elif kind == "eigen_k":
        rank = k if k is not None else eigen_rank(K)
        matrix = SymMatrix.symmetrized(prior_precision * np.eye(K) + ggn_matrix(theta, base, dataset))
        estimate = PrecisionEstimate(kind, sym_eigen(matrix).top(rank), prior_precision)
    else:
        raise ValueError(f"Unknown precision kind: {kind}")
    return estimate


def delta_variances(p: PrecisionEstimate, g: np.ndarray) -> np.ndarray:
    """gᵀP⁻¹g for every row of g (shape (m, K))."""
    g = np.atleast_2d(np.asarray(g, dtype=float))
    if g.shape[1] != p.dim:
        raise DimensionMismatch(f"Gradient length {g.shape[1]} does not match precision dim {p.dim}")
    if p.kind in ("full_exact", "full_ggn"):
        solved = solve_spd(p.payload, g.T, lower=p.cholesky_factor)
        out = np.sum(g.T * solved, axis=0)
    elif p.kind == "diag_ggn":
        out = np.sum(g**2 / p.payload, axis=1)
    else:
        out = np.atleast_1d(low_rank_inverse_quadform(p.payload, g))
    return np.maximum(out, 0.0)


def delta_variance(p: PrecisionEstimate, g: np.ndarray) -> float:
    """Bayesian delta-method variance gᵀP⁻¹g of one output."""
    g = np.asarray(g, dtype=float).reshape(-1)
    return float(delta_variances(p, g.reshape(1, -1))[0])


def predictive_variances(p: PrecisionEstimate, theta: ParamVector, x: np.ndarray) -> np.ndarray:
    """Epistemic variance of every output at every input, shape (n, o)."""
    jac = jacobian(theta, x)
    n, o, K = jac.shape
    return delta_variances(p, jac.reshape(n * o, K)).reshape(n, o)


def diag_covariance(p: PrecisionEstimate) -> np.ndarray:
    """diag(P⁻¹), the per-parameter posterior variances."""
    if p.kind in ("full_exact", "full_ggn"):
        return np.diag(solve_spd(p.payload, np.eye(p.dim), lower=p.cholesky_factor)).copy()
    if p.kind == "diag_ggn":
        return 1.0 / p.payload
    return low_rank_inverse_quadform(p.payload, np.eye(p.dim))


def posterior_samples(
    theta: ParamVector,
    p: PrecisionEstimate,
    num: int,
    rng: np.random.Generator | None = None,
    z: np.ndarray | None = None,
) -> np.ndarray:
    """Draws θ̂ + L⁻ᵀz from N(θ̂, P⁻¹), shape (num, K). z may be injected with shape (num, K)."""
    if p.kind not in ("full_exact", "full_ggn"):
        raise ValueError("Sampling needs a full precision matrix")
    lower = p.cholesky_factor if p.cholesky_factor is not None else cholesky(p.payload)
    if z is None:
        rng = rng if rng is not None else make_rng(0)
        z = rng.standard_normal((num, p.dim))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    offsets = scipy.linalg.solve_triangular(lower, z.T, trans="T", lower=True)
    return theta.values + offsets.T


def posterior_sample(
    theta: ParamVector,
    p: PrecisionEstimate,
    rng: np.random.Generator | None = None,
    z: np.ndarray | None = None,
) -> ParamVector:
    if z is not None:
        z = np.asarray(z, dtype=float).reshape(1, -1)
    return theta.replace(posterior_samples(theta, p, 1, rng=rng, z=z)[0])


def monte_carlo_class_probs(
    theta: ParamVector, p: PrecisionEstimate, x: np.ndarray, num: int, seed: int
) -> np.ndarray:
    """Class probabilities averaged over posterior draws, shape (n, C)."""
    draws = posterior_samples(theta, p, num, rng=make_rng(seed, 4))
    total = 0.0
    for values in draws:
        total = total + softmax(forward_batch(theta.replace(values), x), axis=1)
    return total / num


def dense_precision(p: PrecisionEstimate) -> np.ndarray:
    if isinstance(p.payload, SymMatrix):
        return np.array(p.payload.entries)
    if isinstance(p.payload, EigenPairs):
        return (p.payload.vectors * p.payload.values) @ p.payload.vectors.T
    return np.diag(p.payload)


def dump_precision_csv(p: PrecisionEstimate, path: str | Path) -> None:
    """Row-major dense matrix under a "dim=K" header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        f.write(f"dim={p.dim}\n")
        pd.DataFrame(dense_precision(p)).to_csv(f, header=False, index=False, float_format="%.17g")
