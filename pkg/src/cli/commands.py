"""Command-line surface: data generation, training, variance estimation and benchmarks."""

import argparse
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.cli.error_handlers import ExitCode, handle_error
from src.models.errors import ConfigError
from src.models.experiment import REGVAR_METHODS, ExperimentConfig
from src.services import benchmark
from src.services.datasets import gen_synthetic, header_for, save_splits
from src.services.network import forward_batch
from src.utils.config import config
from src.utils.event_store import EventStore
from src.utils.logger import StructuredLogger

logger = StructuredLogger("CLI")

VARIANCE_SPLITS = ("test_id", "test_ood")


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Experiment config from --config (or defaults) with flag overrides applied."""
    raw: dict[str, Any] = {}
    if args.config:
        raw = json.loads(ExperimentConfig.from_json_file(args.config).canonical_json())
    if args.dataset:
        raw["datasets"] = [args.dataset]
        raw.pop("dataset", None)
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    if args.method:
        raw["methods"] = [args.method]
    if args.lam is not None:
        raw["lambda"] = args.lam
    return ExperimentConfig.from_dict(raw)


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out or config.output.output_dir)


def _single(cfg: ExperimentConfig) -> tuple[str, int]:
    return cfg.datasets[0], cfg.seeds[0]


def cmd_gen_data(args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    out = _out_dir(args)
    written = []
    for dataset in cfg.datasets:
        for seed in cfg.seeds:
            seed_dir = out / f"seed={seed}"
            written += [str(p) for p in save_splits(gen_synthetic(dataset, seed), seed_dir)]
    return {"written": written}


def cmd_train(args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    """Select the observation variance and store the MAP of the first dataset and seed."""
    dataset, seed = _single(cfg)
    job = benchmark.prepare(cfg, dataset, seed)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    params_path = out / f"{dataset}_seed{seed}_map.json"
    job.theta.save(params_path)
    if job.sweep:
        pd.DataFrame(job.sweep).to_csv(
            out / f"{dataset}_seed{seed}_obs_var_sweep.csv",
            index=False,
            float_format="%.10g",
            lineterminator="\n",
        )
    summary = {
        "dataset": dataset,
        "seed": seed,
        "obs_var": job.obs_var,
        "steps": job.map_fit.steps,
        "converged": job.map_fit.converged,
        "objective": job.map_fit.trace[-1] if job.map_fit.trace else None,
        "polish_steps": job.polish.steps if job.polish is not None else 0,
        "grad_inf": job.grad_inf,
        "stationary": job.grad_inf <= cfg.optimizer.stationarity_tol,
        "params_path": str(params_path),
    }
    (out / f"{dataset}_seed{seed}_train.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _variance_frame(split: str, x: np.ndarray, mean: np.ndarray, var: np.ndarray) -> pd.DataFrame:
    frame = pd.DataFrame(x, columns=header_for(x.shape[1], 0))
    frame.insert(0, "split", split)
    for j in range(mean.shape[1]):
        frame[f"mean_{j}"] = mean[:, j]
        frame[f"var_{j}"] = var[:, j]
    return frame


def cmd_variance(args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    """Epistemic variances of one method on the test splits.

    RegVar methods that produce a single pair of refits also write both refits as JSON.
    """
    dataset, seed = _single(cfg)
    method = cfg.methods[0]
    job = benchmark.prepare(cfg, dataset, seed)
    variances = benchmark.method_variances(method, job, cfg, splits=VARIANCE_SPLITS)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{dataset}_seed{seed}_{method}"

    data = job.splits.as_dict()
    frames = [
        _variance_frame(s, data[s].inputs, forward_batch(job.theta, data[s].inputs), variances.by_split[s])
        for s in VARIANCE_SPLITS
    ]
    csv_path = out / f"{stem}_variances.csv"
    pd.concat(frames, ignore_index=True).to_csv(
        csv_path, index=False, float_format="%.10g", lineterminator="\n"
    )
    written = [str(csv_path)]

    if method in REGVAR_METHODS and method not in benchmark.QUERY_METHODS:
        result = benchmark.regvar_result(method, job, cfg, cfg.lam)
        map_path = out / f"{stem}_map.json"
        reg_path = out / f"{stem}_reg.json"
        mirror_path = out / f"{stem}_mirror.json"
        result.map_params.save(map_path)
        result.reg_params.save(reg_path)
        result.mirror_params.save(mirror_path)
        json_path = out / f"{stem}_regvar.json"
        result.to_json(
            json_path,
            map_params_path=map_path.name,
            reg_params_path=reg_path.name,
            mirror_params_path=mirror_path.name,
        )
        written += [str(map_path), str(reg_path), str(mirror_path), str(json_path)]
    return {"method": method, "dataset": dataset, "seed": seed, "written": written}


def _write_bundle(args: argparse.Namespace, cfg: ExperimentConfig, bundle, hashed: bool) -> dict:
    run_dir = _out_dir(args) / cfg.config_hash() if hashed else _out_dir(args)
    bundle.write(run_dir)
    (run_dir / "config.json").write_text(
        json.dumps(json.loads(cfg.canonical_json()), indent=2, sort_keys=True) + "\n"
    )
    run = bundle.summary.get("run", {})
    return {"run_dir": str(run_dir), "failed_jobs": run.get("failed_jobs", 0)}


def cmd_evaluate(args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    """Metrics for the selected method(s) on one dataset and seed, written without hashing."""
    if not (args.method and args.dataset):
        raise ConfigError("evaluate needs --method and --dataset")
    bundle = benchmark.run_experiment(cfg, event_store=EventStore())
    return _write_bundle(args, cfg, bundle, hashed=False)


def cmd_benchmark(args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    bundle = benchmark.run_experiment(cfg)
    return _write_bundle(args, cfg, bundle, hashed=True)


def cmd_sparsity(args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    bundle = benchmark.sparsity_experiment(cfg)
    return _write_bundle(args, cfg, bundle, hashed=True)


def cmd_lambda_sweep(args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    lams = [args.lam] if args.lam is not None else None
    bundle = benchmark.lambda_sweep(cfg, lams)
    return _write_bundle(args, cfg, bundle, hashed=True)


COMMANDS = {
    "gen-data": (cmd_gen_data, "Generate synthetic splits as CSV with metadata sidecars"),
    "train": (cmd_train, "Fit the MAP after selecting the observation variance"),
    "variance": (cmd_variance, "Estimate epistemic variances with one method"),
    "evaluate": (cmd_evaluate, "Evaluate one method on one dataset"),
    "benchmark": (cmd_benchmark, "Run the full method x dataset x seed grid"),
    "sparsity": (cmd_sparsity, "Sparsify parameters by their uncertainty intervals"),
    "lambda-sweep": (cmd_lambda_sweep, "Sweep the regularization strength of RegVar methods"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regvar",
        description="Regularization-variation uncertainty estimates and Laplace baselines",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="Experiment config JSON file")
        sub.add_argument("--seed", type=int, help="Run a single seed")
        sub.add_argument("--out", help="Output directory (default: REGVAR_OUTPUT_DIR)")
        sub.add_argument("--method", help="Run a single method")
        sub.add_argument("--dataset", help="Run a single dataset")
        sub.add_argument("--lambda", dest="lam", type=float, help="Regularization strength")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run a command and return its exit code: 0 ok, 2 config error, 3 numerical failure."""
    parser = build_parser()
    args = parser.parse_args(argv)
    context = {"command": args.command}
    try:
        config.validate()
        cfg = load_experiment(args)
        handler, _ = COMMANDS[args.command]
        result = handler(args, cfg)
    except Exception as e:
        response = handle_error(e, context)
        logger.error("Command failed", {**context, "code": response.error_code}, exception=e)
        print(json.dumps(response.to_dict(), default=str), file=sys.stderr)
        return response.exit_code
    print(json.dumps(result, default=str))
    return ExitCode.OK


if __name__ == "__main__":
    sys.exit(main())
