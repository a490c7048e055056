"""Tests for the log joint, its regularizer variants and curvature oracles."""

import math

import numpy as np
import pytest

from src.models.dataset import Dataset
from src.models.errors import DimensionMismatch, SizeCapExceeded, UnsupportedLikelihood
from src.models.network import MlpArch, ParamVector
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
from src.services.network import forward, forward_batch
from src.services.objective import (
    augmented_targets,
    data_augment_shift,
    full_hessian,
    hessian_columns,
    hvp,
    log_joint,
    loss_grad,
    regularizer_value,
)
from src.utils.config import config

REGULARIZERS = [
    NoRegularizer(),
    PredictionAt(np.array([0.4]), 0, 0.05),
    AmortizedAbs(np.array([[-1.0], [0.2], [1.3]]), 0.05),
    InSampleAbs(-0.05),
    ParamL1(0.05),
    ParamL1(0.05, denominator=7.0),
    DataAugment(0.05),
]


def _numeric_gradient(theta, spec, dataset, h=1e-6):
    grad = np.zeros(len(theta))
    for k in range(len(theta)):
        step = np.zeros(len(theta))
        step[k] = h
        grad[k] = (
            log_joint(theta.replace(theta.values + step), spec, dataset)
            - log_joint(theta.replace(theta.values - step), spec, dataset)
        ) / (2 * h)
    return grad


class TestLogJoint:
    def test_scalar_value(self, scalar_problem):
        theta0, spec, dataset, _ = scalar_problem
        theta = theta0.replace(np.array([0.5]))
        expected = -0.125 - 0.5 * math.log(2 * math.pi) - 0.125 - 0.5 * math.log(2 * math.pi)
        assert log_joint(theta, spec, dataset) == pytest.approx(expected)

    @pytest.mark.parametrize("regularizer", REGULARIZERS, ids=lambda r: type(r).__name__)
    def test_gradient_matches_finite_differences(self, regularizer, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset), regularizer)
        _, grad = loss_grad(random_theta, spec, sin_dataset)
        np.testing.assert_allclose(grad, _numeric_gradient(random_theta, spec, sin_dataset), rtol=1e-5, atol=1e-5)

    @pytest.mark.parametrize("prior", [LaplacePrior(2.0), FlatPrior()], ids=lambda p: type(p).__name__)
    def test_other_priors(self, prior, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), prior, len(sin_dataset))
        _, grad = loss_grad(random_theta, spec, sin_dataset)
        np.testing.assert_allclose(grad, _numeric_gradient(random_theta, spec, sin_dataset), rtol=1e-5, atol=1e-5)

    def test_categorical_gradient(self):
        arch = MlpArch(1, (3,), 2)
        theta = ParamVector(np.linspace(-1, 1, arch.param_count), arch)
        dataset = Dataset(np.array([[-1.0], [0.0], [1.0]]), np.array([[0.0], [1.0], [1.0]]))
        spec = LogJointSpec(CategoricalLikelihood(), GaussianPrior(1.0), 3)
        _, grad = loss_grad(theta, spec, dataset)
        np.testing.assert_allclose(grad, _numeric_gradient(theta, spec, dataset), rtol=1e-5, atol=1e-6)

    def test_categorical_labels_are_checked(self):
        arch = MlpArch(1, (), 2, "identity")
        theta = ParamVector(np.zeros(arch.param_count), arch)
        dataset = Dataset(np.array([[1.0]]), np.array([[2.0]]))
        spec = LogJointSpec(CategoricalLikelihood(), GaussianPrior(1.0), 1)
        with pytest.raises(DimensionMismatch):
            log_joint(theta, spec, dataset)

    def test_n_must_match(self, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset) + 1)
        with pytest.raises(DimensionMismatch):
            log_joint(random_theta, spec, sin_dataset)


class TestBatches:
    @pytest.mark.parametrize("regularizer", REGULARIZERS, ids=lambda r: type(r).__name__)
    def test_batches_partition_the_objective(self, regularizer, random_theta, sin_dataset):
        """Disjoint batches covering the data add up to the full-data value and gradient."""
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset), regularizer)
        full_value, full_grad = loss_grad(random_theta, spec, sin_dataset)
        index = np.arange(len(sin_dataset))
        parts = [loss_grad(random_theta, spec, sin_dataset, batch) for batch in np.array_split(index, 3)]
        assert sum(v for v, _ in parts) == pytest.approx(full_value)
        np.testing.assert_allclose(sum(g for _, g in parts), full_grad, atol=1e-8)

    def test_empty_batch_rejected(self, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset))
        with pytest.raises(DimensionMismatch):
            loss_grad(random_theta, spec, sin_dataset, np.array([], dtype=int))


class TestRegularizers:
    def test_param_l1_effective_strength(self):
        assert ParamL1(0.1).effective_lam(n=20, k=10) == pytest.approx(0.1 / 10)
        assert ParamL1(0.1, denominator=4.0).effective_lam(n=20, k=10) == pytest.approx(0.5)

    def test_regularizer_values(self, random_theta, sin_dataset):
        base = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset))
        query = np.array([0.4])
        assert regularizer_value(
            random_theta, base.with_regularizer(PredictionAt(query, 0, 0.1))
        ) == pytest.approx(0.1 * forward(random_theta, query)[0])
        in_sample = regularizer_value(random_theta, base.with_regularizer(InSampleAbs(0.1)), sin_dataset)
        expected = 0.1 / len(sin_dataset) * np.abs(forward_batch(random_theta, sin_dataset.inputs)).sum()
        assert in_sample == pytest.approx(expected)
        assert regularizer_value(random_theta, base.with_regularizer(DataAugment(0.1))) == 0.0

    def test_regularizer_value_needs_a_regularizer(self, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset))
        with pytest.raises(ValueError, match="no regularizer"):
            regularizer_value(random_theta, spec)

    def test_in_sample_needs_dataset(self, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset), InSampleAbs(0.1))
        with pytest.raises(ValueError):
            regularizer_value(random_theta, spec)

    def test_non_finite_lambda_rejected(self):
        with pytest.raises(ValueError):
            InSampleAbs(float("inf"))

    def test_with_and_without_regularizer(self):
        spec = LogJointSpec(GaussianLikelihood(1.0), GaussianPrior(1.0), 4)
        regularized = spec.with_regularizer(InSampleAbs(0.1))
        assert regularized.is_regularized
        assert not regularized.without_regularizer().is_regularized
        assert regularized.n == 4


class TestDataAugmentation:
    def test_shift(self):
        spec = LogJointSpec(GaussianLikelihood(0.5), GaussianPrior(1.0), 10, DataAugment(0.1))
        assert data_augment_shift(spec) == pytest.approx(0.1 * 0.5 / 10)

    def test_requires_gaussian_likelihood(self):
        spec = LogJointSpec(CategoricalLikelihood(), GaussianPrior(1.0), 10, DataAugment(0.1))
        with pytest.raises(UnsupportedLikelihood):
            data_augment_shift(spec)

    def test_augmented_targets_follow_reference_signs(self, scalar_arch):
        dataset = Dataset(np.array([[1.0], [-1.0]]), np.array([[0.0], [0.0]]))
        spec = LogJointSpec(GaussianLikelihood(1.0), GaussianPrior(1.0), 2, DataAugment(0.1))
        reference = ParamVector(np.array([2.0]), scalar_arch)
        shifted = augmented_targets(dataset, spec, reference)
        np.testing.assert_allclose(shifted.targets[:, 0], [0.05, -0.05])
        np.testing.assert_allclose(augmented_targets(dataset, spec).targets[:, 0], [0.05, 0.05])


class TestCurvature:
    def test_linear_hessian_is_minus_precision(self, linear_problem):
        arch, spec, dataset, precision, map_values = linear_problem
        theta = ParamVector(map_values, arch)
        np.testing.assert_allclose(full_hessian(theta, spec, dataset).entries, -precision, atol=1e-6)

    def test_hvp_matches_hessian(self, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset))
        hessian = full_hessian(random_theta, spec, sin_dataset).entries
        v = np.linspace(-1.0, 1.0, len(random_theta))
        np.testing.assert_allclose(hvp(random_theta, spec, sin_dataset, v), hessian @ v, rtol=1e-4, atol=1e-4)

    def test_assembled_columns_are_nearly_symmetric(self, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset))
        columns = hessian_columns(random_theta, spec, sin_dataset)
        scale = max(1.0, float(np.max(np.abs(columns))))
        assert np.max(np.abs(columns - columns.T)) <= 1e-6 * scale

    def test_parallel_assembly_matches_serial(self, monkeypatch, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset))
        serial = full_hessian(random_theta, spec, sin_dataset).entries
        monkeypatch.setattr(config.runtime, "threads", 4)
        parallel = full_hessian(random_theta, spec, sin_dataset).entries
        np.testing.assert_array_equal(serial, parallel)

    def test_size_cap(self, monkeypatch, linear_problem):
        arch, spec, dataset, _, map_values = linear_problem
        monkeypatch.setattr(config.runtime, "hessian_cap", 2)
        with pytest.raises(SizeCapExceeded):
            full_hessian(ParamVector(map_values, arch), spec, dataset)

    def test_hvp_direction_shape(self, random_theta, sin_dataset):
        spec = LogJointSpec(GaussianLikelihood(0.1), GaussianPrior(3.0), len(sin_dataset))
        with pytest.raises(DimensionMismatch):
            hvp(random_theta, spec, sin_dataset, np.ones(2))
