"""Predictive distributions and evaluation reports."""

from dataclasses import asdict, dataclass, field

import numpy as np

SCHEMA_VERSION = 2

REPORT_COLUMNS = [
    "schema_version",
    "method",
    "dataset",
    "split",
    "seed",
    "nll",
    "nll_mean",
    "picp",
    "crps",
    "ece",
    "rescale",
    "n_eval",
]


@dataclass(frozen=True)
class PredictiveGaussian:
    """Regression predictive N(mean, rescale·epistemic_var + obs_var), arrays of shape (n, o)."""

    mean: np.ndarray
    epistemic_var: np.ndarray
    obs_var: float = 0.0
    rescale: float = 1.0

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        var = np.atleast_2d(np.asarray(self.epistemic_var, dtype=float))
        if mean.shape != var.shape:
            raise ValueError(f"mean {mean.shape} and variance {var.shape} shapes differ")
        if np.any(var < 0):
            raise ValueError("Epistemic variances must be non-negative")
        if self.obs_var < 0 or not self.rescale > 0:
            raise ValueError("obs_var must be >= 0 and rescale > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "epistemic_var", var)

    @property
    def total_var(self) -> np.ndarray:
        return self.rescale * self.epistemic_var + self.obs_var

    def with_rescale(self, rescale: float) -> "PredictiveGaussian":
        return PredictiveGaussian(self.mean, self.epistemic_var, self.obs_var, rescale)


@dataclass
class MetricReport:
    """One evaluation row. Metrics that do not apply to the task are NaN.

    nll is summed over the evaluated points; the row also carries its per-point mean.
    """

    nll: float
    picp: float
    crps: float
    ece: float
    n_eval: int
    method: str = ""
    dataset: str = ""
    split: str = ""
    seed: int = 0
    rescale: float = 1.0
    hyperparams: dict = field(default_factory=dict)

    @property
    def nll_mean(self) -> float:
        return self.nll / self.n_eval if self.n_eval else float("nan")

    def to_row(self) -> dict:
        values = asdict(self)
        values["nll_mean"] = self.nll_mean
        row = {"schema_version": SCHEMA_VERSION}
        row.update({column: values[column] for column in REPORT_COLUMNS[1:]})
        row.update(self.hyperparams)
        return row
