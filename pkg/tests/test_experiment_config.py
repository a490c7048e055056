"""Tests for the validated experiment configuration."""

import json

import numpy as np
import pytest

from src.models.errors import ConfigError, SchemaError
from src.models.experiment import ExperimentConfig
from src.models.linalg import SymMatrix
from src.models.optimizer import (
    REFIT_TOL,
    STATIONARY_TOL,
    AdamMethod,
    FullBatchGA,
    InverseDecay,
    PreconditionedAscent,
)
from src.models.precision import PrecisionEstimate


class TestDefaults:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.datasets == ["quadratic_uniform", "quadratic_inbetween", "sin_uniform", "sin_inbetween"]
        assert cfg.arch.hidden_sizes == [50]
        assert cfg.arch.to_arch().param_count == 151
        assert cfg.prior_var == 3.0
        assert cfg.lam == 1e-3
        assert cfg.seeds == [0, 1, 2]

    def test_optimizer_settings(self):
        cfg = ExperimentConfig.from_dict({"optimizer": {"name": "ga", "lr": 0.01, "decay": 0.5}})
        optim = cfg.optimizer.to_optim_config(seed=4)
        assert optim.method == FullBatchGA(lr=0.01)
        assert optim.schedule == InverseDecay(1.0, 0.5)
        assert optim.seed == 4

    def test_refit_tolerance_is_tightened(self):
        cfg = ExperimentConfig()
        refit = cfg.optimizer.to_refit_config(seed=0)
        assert isinstance(refit.method, AdamMethod)
        assert refit.convergence_tol == REFIT_TOL
        assert cfg.optimizer.to_optim_config(seed=0).convergence_tol == 1e-7
        assert refit.stationarity_tol == STATIONARY_TOL
        assert cfg.optimizer.to_optim_config(seed=0).stationarity_tol is None

    def test_refits_are_preconditioned_by_a_factored_curvature(self):
        lower = np.linalg.cholesky(np.array([[4.0, 1.0], [1.0, 3.0]]))
        curvature = PrecisionEstimate("full_ggn", SymMatrix(lower @ lower.T), 1.0, cholesky_factor=lower)
        refit = ExperimentConfig().optimizer.to_refit_config(seed=0, curvature=curvature)
        assert isinstance(refit.method, PreconditionedAscent)
        np.testing.assert_array_equal(refit.method.cholesky_factor, lower)

        first_order = ExperimentConfig.from_dict({"optimizer": {"refit": "first_order"}})
        assert isinstance(first_order.optimizer.to_refit_config(0, curvature).method, AdamMethod)


class TestValidation:
    def test_lambda_alias(self):
        assert ExperimentConfig.from_dict({"lambda": -0.01}).lam == -0.01

    @pytest.mark.parametrize("lam", [0.0, 0.5, -0.2])
    def test_lambda_range(self, lam):
        with pytest.raises(SchemaError):
            ExperimentConfig.from_dict({"lambda": lam})

    def test_single_dataset_key(self):
        assert ExperimentConfig.from_dict({"dataset": "sin_uniform"}).datasets == ["sin_uniform"]

    def test_unknown_dataset(self):
        with pytest.raises(SchemaError):
            ExperimentConfig.from_dict({"datasets": ["mnist"]})

    def test_unknown_method(self):
        with pytest.raises(SchemaError):
            ExperimentConfig.from_dict({"methods": ["KFAC"]})

    def test_extra_keys_forbidden(self):
        with pytest.raises(SchemaError) as info:
            ExperimentConfig.from_dict({"learning_rate": 0.1})
        assert info.value.details["errors"]

    def test_empty_grid(self):
        with pytest.raises(SchemaError):
            ExperimentConfig.from_dict({"obs_var_grid": []})

    def test_negative_seed(self):
        with pytest.raises(SchemaError):
            ExperimentConfig.from_dict({"seeds": [-1]})


class TestFiles:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json_file(tmp_path / "missing.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError):
            ExperimentConfig.from_json_file(path)

    def test_round_trip_through_canonical_json(self, tmp_path):
        cfg = ExperimentConfig.from_dict({"lambda": 0.01, "seeds": [5]})
        path = tmp_path / "config.json"
        path.write_text(cfg.canonical_json())
        assert ExperimentConfig.from_json_file(path) == cfg


class TestHash:
    def test_hash_is_stable(self):
        assert ExperimentConfig().config_hash() == ExperimentConfig().config_hash()
        assert len(ExperimentConfig().config_hash()) == 12

    def test_hash_changes_with_content(self):
        assert ExperimentConfig().config_hash() != ExperimentConfig.from_dict({"seeds": [0]}).config_hash()

    def test_canonical_json_uses_lambda_key(self):
        payload = json.loads(ExperimentConfig().canonical_json())
        assert "lambda" in payload
        assert "lam" not in payload
