"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from src.models.dataset import Dataset
from src.models.network import MlpArch, ParamVector
from src.models.objective import GaussianLikelihood, GaussianPrior, LogJointSpec
from src.models.optimizer import FullBatchGA, OptimConfig
from src.services.datasets import sin_curve
from src.utils.config import config
from src.utils.rng import make_rng

LINEAR_WEIGHTS = np.array([1.0, -2.0, 0.5])


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    """Run every test with one worker unless it asks for more."""
    monkeypatch.setattr(config.runtime, "threads", 1)


@pytest.fixture()
def scalar_arch():
    """f(x) = θ·x: one weight, no bias."""
    return MlpArch(input_dim=1, hidden_sizes=(), output_dim=1, activation="identity", use_bias=False)


@pytest.fixture()
def scalar_problem(scalar_arch):
    """x = y = σ² = τ² = 1 with n = 1: MAP 0.5, precision 2, variance at x=1 of 0.5."""
    dataset = Dataset(np.array([[1.0]]), np.array([[1.0]]), "scalar")
    spec = LogJointSpec(GaussianLikelihood(1.0), GaussianPrior(1.0), n=1)
    theta0 = ParamVector(np.array([0.0]), scalar_arch)
    cfg = OptimConfig(method=FullBatchGA(lr=0.5), max_steps=100, convergence_tol=1e-12)
    return theta0, spec, dataset, cfg


@pytest.fixture()
def linear_problem():
    """Bayesian linear regression with three features and a closed-form posterior.

    Returns (arch, spec, dataset, precision, map_values).
    """
    arch = MlpArch(input_dim=3, hidden_sizes=(), output_dim=1, activation="identity", use_bias=False)
    rng = make_rng(7, 0)
    x = rng.normal(size=(20, 3))
    y = x @ LINEAR_WEIGHTS + 0.3 * rng.standard_normal(20)
    obs_var, prior_var = 0.5, 2.0
    dataset = Dataset(x, y.reshape(-1, 1), "linear")
    spec = LogJointSpec(GaussianLikelihood(obs_var), GaussianPrior(prior_var), n=20)
    precision = x.T @ x / obs_var + np.eye(3) / prior_var
    map_values = np.linalg.solve(precision, x.T @ y / obs_var)
    return arch, spec, dataset, precision, map_values


@pytest.fixture()
def linear_ga_config(linear_problem):
    """Full-batch gradient ascent with step 1/λ_max of the posterior precision."""
    _, _, _, precision, _ = linear_problem
    lr = 1.0 / float(np.linalg.eigvalsh(precision).max())
    return OptimConfig(method=FullBatchGA(lr=lr), max_steps=50000, convergence_tol=1e-12)


@pytest.fixture()
def tanh_arch():
    return MlpArch(input_dim=1, hidden_sizes=(3,), output_dim=1, activation="tanh")


@pytest.fixture()
def sin_dataset():
    rng = make_rng(11, 0)
    x = rng.uniform(-1.5, 1.5, size=20)
    y = sin_curve(x) + 0.1 * rng.standard_normal(20)
    return Dataset(x.reshape(-1, 1), y.reshape(-1, 1), "sin")


@pytest.fixture()
def random_theta(tanh_arch):
    """Parameters away from zero so |·| regularizers are differentiable."""
    rng = make_rng(3, 0)
    values = rng.normal(size=tanh_arch.param_count)
    values += np.sign(values) * 0.1
    return ParamVector(values, tanh_arch)
