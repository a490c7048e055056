"""Experiment orchestration: the method × dataset × seed grid and its sweeps."""

import json
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from src.models.dataset import Dataset, SyntheticSplits
from src.models.errors import (
    ConfigError,
    NotStationary,
    NumericalError,
    RegVarError,
    UnsupportedLikelihood,
)
from src.models.experiment import REGVAR_METHODS, ExperimentConfig
from src.models.network import MlpArch, ParamVector
from src.models.objective import (
    CategoricalLikelihood,
    GaussianLikelihood,
    GaussianPrior,
    LogJointSpec,
)
from src.models.optimizer import FitResult
from src.models.precision import PrecisionEstimate, PrecisionKind
from src.models.predictive import REPORT_COLUMNS, SCHEMA_VERSION, MetricReport, PredictiveGaussian
from src.models.regvar import RegVarResult
from src.services import laplace, regvar
from src.services.datasets import gen_synthetic
from src.services.network import forward_batch, init_params
from src.services.optimizer import fit, gradient_norm, newton_polish
from src.services.predictive import (
    classification_report,
    nll,
    regression_report,
    tune_rescale,
    tune_rescale_classification,
)
from src.utils.config import config
from src.utils.event_store import EventStore
from src.utils.logger import StructuredLogger
from src.utils.metrics import RunMetricsCalculator
from src.utils.pool import parallel_map
from src.utils.trace_context import clear_trace, create_trace

EVAL_SPLITS = ("val", "test_id", "test_ood")
LAPLACE_KINDS = {
    "FullHessian": "full_exact",
    "GGN": "full_ggn",
    "DiagGGN": "diag_ggn",
    "EigenK": "eigen_k",
}
QUERY_METHODS = ("RegVarPointwise", "RegVarAmortized")
PARAM_VARIANCE_METHODS = ("MAP", "FullHessian", "GGN", "DiagGGN", "RegVarParam")
INTERVAL_Z = 1.959964
RUN_EVENT_CAPACITY = 1_000_000

logger = StructuredLogger("Benchmark")


@dataclass
class PreparedJob:
    """Data and the selected MAP of one (dataset, seed) cell.

    map_fit is the first-order fit and polish its Newton refinement to a
    stationary point; curvature is the factored precision at the polished MAP
    that preconditions the RegVar refits.
    """

    dataset: str
    seed: int
    splits: SyntheticSplits
    spec: LogJointSpec
    map_fit: FitResult
    obs_var: float | None
    sweep: list[dict] = field(default_factory=list)
    polish: FitResult | None = None
    curvature: PrecisionEstimate | None = None

    @property
    def theta(self) -> ParamVector:
        return self.polish.params if self.polish is not None else self.map_fit.params

    @property
    def grad_inf(self) -> float:
        if self.polish is not None and self.polish.grad_inf is not None:
            return self.polish.grad_inf
        return float("nan")

    @property
    def classification(self) -> bool:
        return self.splits.task == "classification"

    @property
    def label(self) -> str:
        return f"{self.dataset}/seed={self.seed}"


@dataclass
class MethodVariances:
    """Epistemic variances of one method per split, plus what its estimator reports."""

    by_split: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)


@dataclass
class BenchmarkBundle:
    """Tables of one run. Every frame is written as CSV, summary as JSON."""

    tables: dict[str, pd.DataFrame]
    summary: dict

    def write(self, run_dir: str | Path) -> Path:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        for name, frame in self.tables.items():
            frame.to_csv(run_dir / f"{name}.csv", index=False, float_format="%.10g", lineterminator="\n")
        (run_dir / "summary.json").write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return run_dir


def arch_for(cfg: ExperimentConfig, splits: SyntheticSplits) -> MlpArch:
    """Configured architecture; binary classification needs one logit per class."""
    arch = cfg.arch.to_arch()
    if splits.task == "classification" and arch.output_dim < 2:
        arch = MlpArch(arch.input_dim, arch.hidden_sizes, 2, arch.activation, arch.use_bias)
    return arch


def curvature_kind(theta: ParamVector) -> PrecisionKind:
    """Exact Hessian while it fits under the size cap, GGN beyond it."""
    return "full_exact" if theta.arch.param_count <= config.runtime.hessian_cap else "full_ggn"


def stationary_fit(
    cfg: ExperimentConfig,
    theta0: ParamVector,
    spec: LogJointSpec,
    train: Dataset,
    seed: int,
    event_store: EventStore | None = None,
) -> tuple[FitResult, FitResult]:
    """First-order MAP fit, then Newton polishing to the stationarity tolerance.

    The second result carries the final gradient ∞-norm; converged means it is
    within cfg.optimizer.stationarity_tol.
    """
    settings = cfg.optimizer
    first = fit(theta0, spec, train, settings.to_optim_config(seed), event_store=event_store)
    if settings.polish_max_iters == 0:
        grad_inf = gradient_norm(first.params, spec, train)
        return first, FitResult(
            first.params, converged=grad_inf <= settings.stationarity_tol, grad_inf=grad_inf
        )
    polished = newton_polish(
        first.params,
        spec,
        train,
        curvature_kind(theta0),
        tol=settings.stationarity_tol,
        max_iters=settings.polish_max_iters,
        event_store=event_store,
    )
    return first, polished


def _job(
    dataset: str,
    seed: int,
    splits: SyntheticSplits,
    spec: LogJointSpec,
    fits: tuple[FitResult, FitResult],
    obs_var: float | None,
    sweep: list[dict],
) -> PreparedJob:
    first, polished = fits
    curvature = laplace.build_precision(polished.params, spec, splits.train, curvature_kind(polished.params))
    return PreparedJob(dataset, seed, splits, spec, first, obs_var, sweep, polished, curvature)


def prepare(
    cfg: ExperimentConfig, dataset: str, seed: int, event_store: EventStore | None = None
) -> PreparedJob:
    """Generate data, sweep the observation variance on validation NLL and keep the best MAP.

    Only stationary MAPs are eligible; NotStationary is raised when none is.
    """
    splits = gen_synthetic(dataset, seed)
    train, val = splits.train, splits.val
    theta0 = init_params(arch_for(cfg, splits), seed)
    prior = GaussianPrior(cfg.prior_var)
    tol = cfg.optimizer.stationarity_tol

    if splits.task == "classification":
        spec = LogJointSpec(CategoricalLikelihood(), prior, len(train))
        fits = stationary_fit(cfg, theta0, spec, train, seed, event_store)
        if not fits[1].converged:
            raise NotStationary(
                f"MAP gradient ∞-norm {fits[1].grad_inf:.3e} above {tol:.1e}",
                grad_inf=fits[1].grad_inf,
                tol=tol,
            )
        return _job(dataset, seed, splits, spec, fits, None, [])

    best = None
    sweep = []
    for obs_var in sorted(cfg.obs_var_grid):
        spec = LogJointSpec(GaussianLikelihood(obs_var), prior, len(train))
        row = {"dataset": dataset, "seed": seed, "obs_var": obs_var}
        try:
            fits = stationary_fit(cfg, theta0, spec, train, seed, event_store)
        except NumericalError as e:
            logger.warning("MAP fit failed", {**row, "code": e.code, "error": str(e)})
            sweep.append(
                {**row, "val_nll": float("nan"), "converged": False, "grad_inf": float("nan"), "stationary": False}
            )
            continue
        first, polished = fits
        mean = forward_batch(polished.params, val.inputs)
        score = nll(PredictiveGaussian(mean, np.zeros_like(mean), obs_var), val.targets, "mean")
        sweep.append(
            {
                **row,
                "val_nll": score,
                "converged": first.converged,
                "grad_inf": polished.grad_inf,
                "stationary": polished.converged,
            }
        )
        if polished.converged and (best is None or score < best[0]):
            best = (score, obs_var, spec, fits)
    if best is None:
        lowest = min((r["grad_inf"] for r in sweep if not math.isnan(r["grad_inf"])), default=float("nan"))
        raise NotStationary(
            f"No observation variance gave a MAP with gradient ∞-norm within {tol:.1e}",
            grad_inf=lowest,
            tol=tol,
        )
    _, obs_var, spec, fits = best
    for row in sweep:
        row["selected"] = row["obs_var"] == obs_var
    logger.info(
        "Observation variance selected",
        {"dataset": dataset, "seed": seed, "obs_var": obs_var, "grad_inf": fits[1].grad_inf},
    )
    return _job(dataset, seed, splits, spec, fits, obs_var, sweep)


def regvar_result(
    method: str,
    job: PreparedJob,
    cfg: ExperimentConfig,
    lam: float,
    queries: np.ndarray | None = None,
    event_store: EventStore | None = None,
) -> RegVarResult:
    """Run one RegVar estimator from the MAP of a prepared job.

    Pointwise and amortized modes need the query inputs; the other modes refit once
    at each sign of λ. Refits are preconditioned by the curvature at the MAP.
    """
    theta, spec, train = job.theta, job.spec, job.splits.train
    refit_cfg = cfg.optimizer.to_refit_config(job.seed, job.curvature)
    common = {"state": job.map_fit.state, "event_store": event_store}
    if method in QUERY_METHODS and queries is None:
        raise ConfigError(f"{method} needs query inputs")
    if method == "RegVarPointwise":
        return regvar.pointwise_fit(theta, spec, train, queries, lam, refit_cfg, **common)
    if method == "RegVarAmortized":
        return regvar.amortized_fit(theta, spec, train, queries, lam, refit_cfg, **common)
    if method == "RegVarInSample":
        return regvar.in_sample_fit(theta, spec, train, lam, refit_cfg, **common)
    if method == "RegVarDataAug":
        return regvar.data_augmented_fit(theta, spec, train, lam, refit_cfg, **common)
    if method == "RegVarParam":
        return regvar.param_uncertainty_fit(
            theta, spec, train, lam, refit_cfg, denominator=cfg.param_l1_denominator, **common
        )
    raise ConfigError(f"{method} is not a RegVar method")


def _precision_metadata(p: PrecisionEstimate) -> dict:
    meta = {"precision_jitter": p.jitter}
    if p.min_eigenvalue is not None:
        meta["precision_min_eigenvalue"] = p.min_eigenvalue
    return meta


def method_variances(
    method: str,
    job: PreparedJob,
    cfg: ExperimentConfig,
    lam: float | None = None,
    event_store: EventStore | None = None,
    splits: tuple[str, ...] = EVAL_SPLITS,
) -> MethodVariances:
    """Epistemic variance of every output on each requested split, shape (n, o).

    FullHessian reports the jitter and smallest eigenvalue of its precision as metadata.
    """
    lam = cfg.lam if lam is None else lam
    theta, spec, train = job.theta, job.spec, job.splits.train
    inputs = {s: job.splits.as_dict()[s].inputs for s in splits}

    if method == "MAP":
        return MethodVariances({s: np.zeros((x.shape[0], theta.arch.output_dim)) for s, x in inputs.items()})
    if method in LAPLACE_KINDS:
        p = laplace.build_precision(theta, spec, train, LAPLACE_KINDS[method], k=cfg.eigen_k)
        variances = {s: laplace.predictive_variances(p, theta, x) for s, x in inputs.items()}
        return MethodVariances(variances, _precision_metadata(p) if p.kind == "full_exact" else {})
    if method in QUERY_METHODS:
        return MethodVariances(
            {s: regvar_result(method, job, cfg, lam, x, event_store).variances for s, x in inputs.items()}
        )
    if method in REGVAR_METHODS:
        result = regvar_result(method, job, cfg, lam, event_store=event_store)
        if method == "RegVarParam":
            return MethodVariances(
                {s: regvar.param_variance_to_function(theta, result.variances, x) for s, x in inputs.items()}
            )
        return MethodVariances({s: result.variance_at(x) for s, x in inputs.items()})
    raise ConfigError(f"Unknown method {method!r}")


def hyperparams(cfg: ExperimentConfig, job: PreparedJob, lam: float, metadata: dict | None = None) -> dict:
    """Row columns shared by every method; metadata fills the precision columns."""
    return {
        "obs_var": job.obs_var if job.obs_var is not None else float("nan"),
        "prior_var": cfg.prior_var,
        "lambda": lam,
        "optimizer": cfg.optimizer.name,
        "lr": cfg.optimizer.lr,
        "hidden_sizes": "-".join(str(h) for h in cfg.arch.hidden_sizes),
        "activation": cfg.arch.activation,
        "eigen_k": cfg.eigen_k if cfg.eigen_k is not None else "auto",
        "map_grad_inf": job.grad_inf,
        "precision_jitter": float("nan"),
        "precision_min_eigenvalue": float("nan"),
        **(metadata or {}),
    }


def evaluate_method(
    method: str,
    job: PreparedJob,
    variances: dict[str, np.ndarray],
    cfg: ExperimentConfig,
    lam: float,
    metadata: dict | None = None,
) -> tuple[list[MetricReport], list[dict]]:
    """Tune the variance rescale on validation and report every split.

    Returns the reports and, for regression, the OOD curve rows.
    """
    data = job.splits.as_dict()
    labels = {"method": method, "dataset": job.dataset, "seed": job.seed}
    hp = hyperparams(cfg, job, lam, metadata)
    means = {s: forward_batch(job.theta, data[s].inputs) for s in variances}

    if job.classification:
        rescale = tune_rescale_classification(means["val"], variances["val"], data["val"].labels)
        reports = [
            classification_report(
                means[s], variances[s], data[s].labels, rescale, split=s, hyperparams=hp, **labels
            )
            for s in variances
        ]
        return reports, []

    rescale = tune_rescale(PredictiveGaussian(means["val"], variances["val"], job.obs_var), data["val"].targets)
    reports = []
    predictives = {}
    for s in variances:
        predictives[s] = PredictiveGaussian(means[s], variances[s], job.obs_var, rescale)
        reports.append(regression_report(predictives[s], data[s].targets, split=s, hyperparams=hp, **labels))

    curve = []
    if "test_ood" in predictives:
        pred = predictives["test_ood"]
        half = INTERVAL_Z * np.sqrt(pred.total_var[:, 0])
        for x, mean, h in zip(data["test_ood"].inputs[:, 0], pred.mean[:, 0], half, strict=True):
            curve.append(
                {**labels, "x": x, "mean": mean, "lo": mean - h, "hi": mean + h}
            )
    return reports, curve


def _failure(method: str, job_label: str, dataset: str, seed: int, exc: Exception) -> dict:
    code = exc.code if isinstance(exc, RegVarError) else "INTERNAL_ERROR"
    return {
        "method": method,
        "dataset": dataset,
        "seed": seed,
        "code": code,
        "message": str(exc),
        "trace_id": job_label,
    }


def _run_cells(
    cfg: ExperimentConfig,
    dataset: str,
    seed: int,
    methods: list[str],
    cell: Callable[[str, PreparedJob], dict],
    event_store: EventStore,
) -> dict:
    """Prepare one (dataset, seed) job and run cell(method, job) for every method.

    Failures are recorded per method and never abort the grid.
    """
    label = create_trace(f"{dataset}/seed={seed}")
    outcome: dict = {"failures": [], "sweep": [], "cells": []}
    try:
        try:
            job = prepare(cfg, dataset, seed, event_store)
            outcome["sweep"] = job.sweep
        except Exception as e:
            logger.error("Job preparation failed", {"dataset": dataset, "seed": seed}, exception=e)
            for method in methods:
                outcome["failures"].append(_failure(method, label, dataset, seed, e))
                event_store.add_event(
                    label,
                    "job_failed",
                    "Benchmark",
                    "Preparation failed",
                    {"method": method, "code": outcome["failures"][-1]["code"]},
                )
            return outcome

        for method in methods:
            context = {"method": method, "dataset": dataset, "seed": seed}
            event_store.add_event(label, "job_start", "Benchmark", "Method started", context)
            start = time.monotonic()
            try:
                outcome["cells"].append(cell(method, job))
            except Exception as e:
                duration_ms = (time.monotonic() - start) * 1000
                failure = _failure(method, label, dataset, seed, e)
                outcome["failures"].append(failure)
                event_store.add_event(
                    label,
                    "job_failed",
                    "Benchmark",
                    str(e),
                    {**context, "code": failure["code"]},
                    duration_ms=duration_ms,
                )
                logger.error("Method failed", {**context, "code": failure["code"]}, exception=e)
                continue
            duration_ms = (time.monotonic() - start) * 1000
            event_store.add_event(
                label, "job_complete", "Benchmark", "Method finished", context, duration_ms=duration_ms
            )
            logger.info("Method finished", {**context, "duration_ms": duration_ms})
        return outcome
    finally:
        clear_trace()


def _run_grid(
    cfg: ExperimentConfig,
    methods: list[str],
    cell: Callable[[str, PreparedJob], dict],
    event_store: EventStore,
) -> list[dict]:
    jobs = [(d, s) for d in cfg.datasets for s in cfg.seeds]
    logger.info("Starting grid", {"jobs": len(jobs), "methods": methods})
    return parallel_map(lambda job: _run_cells(cfg, job[0], job[1], methods, cell, event_store), jobs)


def _clean(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return _clean(value.item())
    return value


def _summary(
    cfg: ExperimentConfig,
    results: pd.DataFrame,
    metric_columns: list[str],
    failures: list[dict],
    event_store: EventStore,
    keys: list[str] | None = None,
) -> dict:
    """Seed-averaged metrics per group plus run counts and failures."""
    keys = keys or ["method", "dataset", "split"]
    means = []
    if not results.empty:
        grouped = results.groupby(keys, sort=True)[metric_columns].mean()
        means = grouped.reset_index().to_dict(orient="records")
    return _clean(
        {
            "schema_version": SCHEMA_VERSION,
            "config_hash": cfg.config_hash(),
            "run": RunMetricsCalculator(event_store).calculate().to_dict(include_timing=False),
            "means": means,
            "failures": failures,
        }
    )


def run_experiment(cfg: ExperimentConfig, event_store: EventStore | None = None) -> BenchmarkBundle:
    """Evaluate every configured method on every dataset and seed."""
    event_store = event_store if event_store is not None else EventStore(max_size=RUN_EVENT_CAPACITY)

    def cell(method: str, job: PreparedJob) -> dict:
        variances = method_variances(method, job, cfg, event_store=event_store)
        reports, curve = evaluate_method(method, job, variances.by_split, cfg, cfg.lam, variances.metadata)
        return {"rows": [r.to_row() for r in reports], "curve": curve}

    outcomes = _run_grid(cfg, list(cfg.methods), cell, event_store)
    rows = [row for o in outcomes for c in o["cells"] for row in c["rows"]]
    curve = [row for o in outcomes for c in o["cells"] for row in c["curve"]]
    sweep = [row for o in outcomes for row in o["sweep"]]
    failures = [f for o in outcomes for f in o["failures"]]

    results = pd.DataFrame(rows)
    if not results.empty:
        extra = [c for c in results.columns if c not in REPORT_COLUMNS]
        results = results[REPORT_COLUMNS + extra]
    tables = {
        "results": results,
        "obs_var_sweep": pd.DataFrame(sweep),
        "ood_curves": pd.DataFrame(curve),
    }
    summary = _summary(cfg, results, ["nll", "picp", "crps", "ece"], failures, event_store)
    return BenchmarkBundle(tables=tables, summary=summary)


def parameter_variances(method: str, job: PreparedJob, cfg: ExperimentConfig) -> np.ndarray:
    """Per-parameter posterior variances from a Laplace baseline or the L1 refit."""
    theta, spec, train = job.theta, job.spec, job.splits.train
    if method == "MAP":
        return np.zeros(theta.arch.param_count)
    if method in ("FullHessian", "GGN", "DiagGGN"):
        p = laplace.build_precision(theta, spec, train, LAPLACE_KINDS[method])
        return laplace.diag_covariance(p)
    if method == "RegVarParam":
        return regvar.param_uncertainty_fit(
            theta,
            spec,
            train,
            cfg.lam,
            cfg.optimizer.to_refit_config(job.seed, job.curvature),
            denominator=cfg.param_l1_denominator,
            state=job.map_fit.state,
        ).variances
    raise ConfigError(f"{method} provides no parameter variances")


def sparsity_experiment(cfg: ExperimentConfig, event_store: EventStore | None = None) -> BenchmarkBundle:
    """Zero parameters whose z-interval covers 0 and measure the mean absolute error of predictions."""
    methods = [m for m in cfg.methods if m in PARAM_VARIANCE_METHODS]
    if not any(m != "MAP" for m in methods):
        raise ConfigError(
            "Sparsity needs a parameter-variance method: FullHessian, GGN, DiagGGN or RegVarParam"
        )
    event_store = event_store if event_store is not None else EventStore(max_size=RUN_EVENT_CAPACITY)

    def cell(method: str, job: PreparedJob) -> dict:
        if job.classification:
            raise UnsupportedLikelihood("Sparsity errors are defined for regression tasks")
        variances = parameter_variances(method, job, cfg)
        labels = {"method": method, "dataset": job.dataset, "seed": job.seed}
        sd = np.sqrt(variances)
        intervals = [
            {**labels, "index": i, "theta": t, "lo": t - s, "hi": t + s}
            for i, (t, s) in enumerate(zip(job.theta.values, sd, strict=True))
        ]
        rows = []
        for z in sorted(cfg.sparsity_z):
            sparse = regvar.sparsify(job.theta, variances, z)
            zeroed = int(np.sum((sparse.values == 0) & (job.theta.values != 0)))
            for split in ("test_id", "test_ood"):
                data = job.splits.as_dict()[split]
                error = float(np.mean(np.abs(forward_batch(sparse, data.inputs) - data.targets)))
                rows.append(
                    {
                        "schema_version": SCHEMA_VERSION,
                        **labels,
                        "z": z,
                        "split": split,
                        "zeroed": zeroed,
                        "params": job.theta.arch.param_count,
                        "mean_abs_error": error,
                    }
                )
        return {"rows": rows, "intervals": intervals}

    outcomes = _run_grid(cfg, methods, cell, event_store)
    rows = [row for o in outcomes for c in o["cells"] for row in c["rows"]]
    intervals = [row for o in outcomes for c in o["cells"] for row in c["intervals"]]
    failures = [f for o in outcomes for f in o["failures"]]
    results = pd.DataFrame(rows)
    tables = {"sparsity": results, "param_intervals": pd.DataFrame(intervals)}
    summary = _summary(
        cfg, results, ["mean_abs_error", "zeroed"], failures, event_store, keys=["method", "dataset", "split", "z"]
    )
    return BenchmarkBundle(tables=tables, summary=summary)


def lambda_sweep(
    cfg: ExperimentConfig, lams: list[float] | None = None, event_store: EventStore | None = None
) -> BenchmarkBundle:
    """Held-out NLL and the tuned rescale for every λ of the grid."""
    lams = list(cfg.lambda_grid if lams is None else lams)
    methods = [m for m in cfg.methods if m in REGVAR_METHODS]
    if not methods:
        raise ConfigError("λ sweep needs at least one RegVar method")
    for lam in lams:
        if not 0 < abs(lam) <= regvar.MAX_ABS_LAMBDA:
            raise ConfigError(f"|λ| must lie in (0, {regvar.MAX_ABS_LAMBDA}], got {lam}")
    event_store = event_store if event_store is not None else EventStore(max_size=RUN_EVENT_CAPACITY)

    def cell(method: str, job: PreparedJob) -> dict:
        rows = []
        for lam in lams:
            variances = method_variances(method, job, cfg, lam=lam, event_store=event_store)
            reports, _ = evaluate_method(method, job, variances.by_split, cfg, lam, variances.metadata)
            for report in reports:
                rows.append(
                    {
                        "schema_version": SCHEMA_VERSION,
                        "method": method,
                        "dataset": job.dataset,
                        "seed": job.seed,
                        "lambda": lam,
                        "split": report.split,
                        "rescale": report.rescale,
                        "rescale_times_lambda": report.rescale * abs(lam),
                        "nll": report.nll,
                    }
                )
        return {"rows": rows}

    outcomes = _run_grid(cfg, methods, cell, event_store)
    rows = [row for o in outcomes for c in o["cells"] for row in c["rows"]]
    failures = [f for o in outcomes for f in o["failures"]]
    results = pd.DataFrame(rows)
    summary = _summary(
        cfg, results, ["nll", "rescale"], failures, event_store, keys=["method", "dataset", "split", "lambda"]
    )
    return BenchmarkBundle(tables={"lambda_sweep": results}, summary=summary)
