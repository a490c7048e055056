"""Results of regularization-variation fits."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from src.models.network import ParamVector

RegVarMode = Literal["pointwise", "amortized", "in_sample", "param_uncertainty", "data_aug"]


@dataclass(frozen=True)
class RegVarResult:
    """Outcome of one or more regularized refits.

    reg_params is the refit at +λ and mirror_params the refit at −λ; the variance is
    read off their central difference. For function modes ``variances`` has shape
    (m, o) aligned with ``queries``; pointwise results hold NaN for outputs that were
    not queried. For param_uncertainty ``variances`` has one entry per parameter and
    ``queries`` is None.
    """

    mode: RegVarMode
    lam: float
    map_params: ParamVector
    reg_params: ParamVector | None
    variances: np.ndarray
    queries: np.ndarray | None = None
    mirror_params: ParamVector | None = None

    def __post_init__(self):
        if self.lam == 0:
            raise ValueError("λ must be non-zero")
        v = np.asarray(self.variances, dtype=float)
        if np.any(v[~np.isnan(v)] < 0):
            raise ValueError("Variances must be non-negative")
        object.__setattr__(self, "variances", v)

    def variance_at(self, x: np.ndarray) -> np.ndarray:
        """|f_reg(x) − f_mirror(x)|/(2|λ|) per output for any inputs (rows of x).

        Results without a mirror refit fall back to |f_reg(x) − f_map(x)|/|λ|.
        """
        from src.services.network import forward_batch

        if self.reg_params is None:
            raise ValueError(f"{self.mode} results carry no single refit to evaluate")
        if self.mode == "param_uncertainty":
            raise ValueError("Parameter variances do not define a function variance directly")
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, self.map_params.arch.input_dim)
        if self.mirror_params is not None:
            delta = forward_batch(self.reg_params, x) - forward_batch(self.mirror_params, x)
            return np.abs(delta) / (2.0 * abs(self.lam))
        delta = forward_batch(self.reg_params, x) - forward_batch(self.map_params, x)
        return np.abs(delta) / abs(self.lam)

    def to_json(
        self,
        path: str | Path,
        map_params_path: str | None = None,
        reg_params_path: str | None = None,
        mirror_params_path: str | None = None,
    ) -> None:
        if self.queries is None:
            records = [
                {"index": i, "variance": float(v)} for i, v in enumerate(self.variances)
            ]
        else:
            records = [
                {
                    "x": [float(c) for c in q],
                    "variance": [None if np.isnan(v) else float(v) for v in row],
                }
                for q, row in zip(self.queries, self.variances, strict=True)
            ]
        payload = {
            "mode": self.mode,
            "lambda": self.lam,
            "map_params_path": map_params_path,
            "reg_params_path": reg_params_path,
            "mirror_params_path": mirror_params_path,
            "variances": records,
        }
        Path(path).write_text(json.dumps(payload, indent=2))


@dataclass(frozen=True)
class LambdaSweep:
    """Pointwise estimates over decreasing |λ| with a Richardson extrapolation to λ → 0."""

    lams: tuple[float, ...]
    variances: tuple[float, ...]
    extrapolated: float
    agree: bool
    tolerance: float = 0.02
