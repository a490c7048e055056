"""Tests for symmetric factor, solve and eigen routines."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.models.errors import DegenerateEigenvalue, DimensionMismatch, NotPositiveDefinite
from src.models.linalg import EigenPairs, SymMatrix
from src.services.linalg import (
    cholesky,
    eigen_rank,
    low_rank_inverse_quadform,
    min_eigenvalue,
    solve_spd,
    sym_eigen,
)
from src.utils.rng import make_rng


@st.composite
def spd_matrices(draw):
    """Random well-conditioned SPD matrices AᵀA + I."""
    k = draw(st.integers(min_value=1, max_value=8))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    a = make_rng(seed).normal(size=(k, k))
    return SymMatrix.symmetrized(a.T @ a + np.eye(k)), seed


class TestSymMatrix:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="not symmetric"):
            SymMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(DimensionMismatch):
            SymMatrix(np.ones((2, 3)))

    def test_entries_are_read_only_copies(self):
        source = np.eye(2)
        matrix = SymMatrix(source)
        source[0, 0] = 5.0
        assert matrix.entries[0, 0] == 1.0
        with pytest.raises(ValueError):
            matrix.entries[0, 0] = 3.0

    def test_symmetrized_averages(self):
        matrix = SymMatrix.symmetrized(np.array([[1.0, 2.0], [0.0, 1.0]]))
        assert matrix.entries[0, 1] == matrix.entries[1, 0] == 1.0


class TestFactorizations:
    """Properties of the dense symmetric routines."""

    @settings(max_examples=50, deadline=None)
    @given(case=spd_matrices())
    def test_solve_spd_residual(self, case):
        """
        **Property: solve_spd inverts SPD systems**

        A·solve_spd(A, b) reproduces b.
        """
        matrix, seed = case
        b = make_rng(seed, 1).normal(size=matrix.dim)
        x = solve_spd(matrix, b)
        np.testing.assert_allclose(matrix.entries @ x, b, atol=1e-8)

    @settings(max_examples=50, deadline=None)
    @given(case=spd_matrices())
    def test_eigen_decomposition_reconstructs(self, case):
        """
        **Property: Eigenpairs are sorted and reconstruct the matrix**

        Eigenvalues come out descending and V·diag(λ)·Vᵀ equals A.
        """
        matrix, _ = case
        eigs = sym_eigen(matrix)
        assert np.all(np.diff(eigs.values) <= 1e-12)
        rebuilt = (eigs.vectors * eigs.values) @ eigs.vectors.T
        np.testing.assert_allclose(rebuilt, matrix.entries, atol=1e-8)

    @settings(max_examples=50, deadline=None)
    @given(case=spd_matrices())
    def test_full_rank_quadform_matches_solve(self, case):
        """
        **Property: Keeping every eigenpair gives the exact quadratic form**

        Σ (vᵢᵀg)²/λᵢ over all pairs equals gᵀA⁻¹g.
        """
        matrix, seed = case
        g = make_rng(seed, 2).normal(size=matrix.dim)
        exact = float(g @ solve_spd(matrix, g))
        approx = float(low_rank_inverse_quadform(sym_eigen(matrix), g))
        assert approx == pytest.approx(exact, rel=1e-8, abs=1e-10)

    def test_truncated_quadform_is_a_lower_bound(self):
        matrix = SymMatrix(np.diag([4.0, 2.0, 1.0]))
        g = np.ones(3)
        top = sym_eigen(matrix).top(2)
        assert float(low_rank_inverse_quadform(top, g)) == pytest.approx(0.25 + 0.5)

    def test_batched_quadform(self):
        eigs = sym_eigen(SymMatrix(np.diag([2.0, 1.0])))
        g = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        np.testing.assert_allclose(low_rank_inverse_quadform(eigs, g), [0.5, 1.0, 1.5])

    def test_cholesky_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite) as info:
            cholesky(SymMatrix(np.diag([1.0, -0.5])))
        assert info.value.min_eigenvalue == pytest.approx(-0.5)

    def test_cholesky_rejects_tiny_pivot(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(SymMatrix(np.diag([1.0, 1e-14])))

    def test_solve_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            solve_spd(SymMatrix(np.eye(2)), np.ones(3))

    def test_degenerate_eigenvalue(self):
        eigs = EigenPairs(values=np.array([1.0, 0.0]), vectors=np.eye(2))
        with pytest.raises(DegenerateEigenvalue):
            low_rank_inverse_quadform(eigs, np.ones(2))

    def test_min_eigenvalue(self):
        assert min_eigenvalue(SymMatrix(np.diag([3.0, -1.0, 2.0]))) == pytest.approx(-1.0)

    def test_top_validates_k(self):
        eigs = sym_eigen(SymMatrix(np.eye(3)))
        with pytest.raises(ValueError):
            eigs.top(4)


class TestEigenRank:
    @pytest.mark.parametrize(
        ("k_total", "expected"),
        [(1, 1), (2, 1), (12, 2), (13, 3), (151, 5), (10_000, 9)],
    )
    def test_rounded_log(self, k_total, expected):
        assert eigen_rank(k_total) == expected
