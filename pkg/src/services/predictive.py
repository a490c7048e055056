"""Posterior predictives and evaluation metrics."""

import math

import numpy as np
from scipy.special import softmax
from scipy.stats import norm

from src.models.errors import DimensionMismatch, ZeroVariance
from src.models.predictive import MetricReport, PredictiveGaussian
from src.utils.rng import make_rng

RESCALE_GRID = 10.0 ** (np.arange(-12, 13) / 4.0)
ECE_BINS = 10
RNG_STREAM_BOOTSTRAP = 5


def _targets(pred: PredictiveGaussian, observations: np.ndarray) -> np.ndarray:
    y = np.asarray(observations, dtype=float)
    if y.ndim == 1 and y.size == pred.mean.size:
        y = y.reshape(pred.mean.shape)
    if y.shape != pred.mean.shape:
        raise DimensionMismatch(f"Observations {y.shape} do not match predictions {pred.mean.shape}")
    return y


def probit_kappa(variances: np.ndarray) -> np.ndarray:
    """κ = 1/√(1 + πσ²/8)."""
    return 1.0 / np.sqrt(1.0 + math.pi * np.asarray(variances, dtype=float) / 8.0)


def probit_adjust(logits: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """softmax(κ ⊙ logits) along the last axis."""
    variances = np.asarray(variances, dtype=float)
    if np.any(variances < 0):
        raise ValueError("Logit variances must be non-negative")
    return softmax(probit_kappa(variances) * np.asarray(logits, dtype=float), axis=-1)


def pointwise_nll(pred: PredictiveGaussian, observations: np.ndarray) -> np.ndarray:
    y = _targets(pred, observations)
    var = pred.total_var
    if np.any(var <= 0):
        raise ZeroVariance("Predictive variance must be positive for the likelihood")
    return np.sum(0.5 * np.log(2 * math.pi * var) + 0.5 * (y - pred.mean) ** 2 / var, axis=1)


def nll(pred: PredictiveGaussian, observations: np.ndarray, reduction: str = "sum") -> float:
    """Negative log predictive density of the observations."""
    values = pointwise_nll(pred, observations)
    return float(values.mean() if reduction == "mean" else values.sum())


def class_pointwise_nll(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels).astype(int).reshape(-1)
    picked = probs[np.arange(labels.shape[0]), labels]
    with np.errstate(divide="ignore"):
        return -np.log(picked)


def class_nll(probs: np.ndarray, labels: np.ndarray, reduction: str = "sum") -> float:
    values = class_pointwise_nll(probs, labels)
    return float(values.mean() if reduction == "mean" else values.sum())


def picp(pred: PredictiveGaussian, observations: np.ndarray, level: float = 0.95) -> float:
    """Share of observations inside mean ± z·sd, z the two-sided normal quantile for level."""
    y = _targets(pred, observations)
    z = norm.ppf(0.5 + level / 2.0)
    inside = np.abs(y - pred.mean) <= z * np.sqrt(pred.total_var)
    return float(inside.mean())


def crps(pred: PredictiveGaussian, observations: np.ndarray) -> float:
    """Mean closed-form Gaussian CRPS; zero variance degenerates to |y − μ|."""
    y = _targets(pred, observations)
    sd = np.sqrt(pred.total_var)
    err = y - pred.mean
    out = np.abs(err)
    positive = sd > 0
    z = err[positive] / sd[positive]
    out[positive] = sd[positive] * (
        z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / math.sqrt(math.pi)
    )
    return float(out.mean())


def ece(probs: np.ndarray, labels: np.ndarray, bins: int = ECE_BINS) -> float:
    """Binned |accuracy − confidence| with equal-width bins on [1/C, 1]."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels).astype(int).reshape(-1)
    n, c = probs.shape
    confidence = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    low = 1.0 / c
    width = (1.0 - low) / bins
    index = np.clip(np.floor((confidence - low) / width).astype(int), 0, bins - 1)
    total = 0.0
    for b in range(bins):
        members = index == b
        count = int(members.sum())
        if count:
            total += count / n * abs(correct[members].mean() - confidence[members].mean())
    return float(total)


def tune_rescale(pred: PredictiveGaussian, observations: np.ndarray) -> float:
    """Rescale from {10^k : k = −3..3 step 0.25} minimizing validation NLL, smallest on ties."""
    scores = [nll(pred.with_rescale(r), observations) for r in RESCALE_GRID]
    return float(RESCALE_GRID[int(np.argmin(scores))])


def tune_rescale_classification(
    logits: np.ndarray, variances: np.ndarray, labels: np.ndarray
) -> float:
    scores = [class_nll(probit_adjust(logits, r * variances), labels) for r in RESCALE_GRID]
    return float(RESCALE_GRID[int(np.argmin(scores))])


def regression_report(pred: PredictiveGaussian, observations: np.ndarray, **labels) -> MetricReport:
    """Summed NLL, PICP and CRPS of a regression predictive; ECE does not apply."""
    return MetricReport(
        nll=nll(pred, observations),
        picp=picp(pred, observations),
        crps=crps(pred, observations),
        ece=float("nan"),
        n_eval=pred.mean.shape[0],
        rescale=pred.rescale,
        **labels,
    )


def classification_report(
    logits: np.ndarray, variances: np.ndarray, class_labels: np.ndarray, rescale: float = 1.0, **labels
) -> MetricReport:
    """Summed NLL and ECE of probit-corrected class probabilities."""
    probs = probit_adjust(logits, rescale * np.asarray(variances, dtype=float))
    return MetricReport(
        nll=class_nll(probs, class_labels),
        picp=float("nan"),
        crps=float("nan"),
        ece=ece(probs, class_labels),
        n_eval=probs.shape[0],
        rescale=rescale,
        **labels,
    )


def bootstrap_ece_interval(
    probs: np.ndarray,
    labels: np.ndarray,
    num: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile interval of ECE over seeded bootstrap resamples."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels).astype(int).reshape(-1)
    rng = make_rng(seed, RNG_STREAM_BOOTSTRAP)
    n = probs.shape[0]
    samples = [ece(probs[idx], labels[idx]) for idx in rng.integers(0, n, size=(num, n))]
    tail = (1.0 - level) / 2.0 * 100
    low, high = np.percentile(samples, [tail, 100 - tail])
    return float(low), float(high)


def wald_interval(values: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """mean ± z·s/√n of per-point metric values."""
    values = np.asarray(values, dtype=float).reshape(-1)
    z = norm.ppf(0.5 + level / 2.0)
    mean = float(values.mean())
    if values.shape[0] < 2:
        return mean, mean
    half = z * float(values.std(ddof=1)) / math.sqrt(values.shape[0])
    return mean - half, mean + half
