import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exhaustive_l0, planted_problem
from sparsespline.errors import InvalidArgument
from sparsespline.stridge import normalize_columns, ridge, stridge


class TestRidge:
    def test_identity_small_eta(self):
        y = np.array([1.0, -2.0, 3.5])
        assert np.allclose(ridge(np.eye(3), y, 1e-12), y, atol=1e-10)

    def test_orthonormal_closed_form(self):
        rng = np.random.default_rng(0)
        Q, _ = np.linalg.qr(rng.normal(size=(20, 5)))
        y = rng.normal(size=20)
        assert np.allclose(ridge(Q, y, 0.5), Q.T @ y / 1.5, atol=1e-12)

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(1)
        Phi = rng.normal(size=(50, 8))
        y = rng.normal(size=50)
        ref = np.linalg.solve(Phi.T @ Phi + 1e-3 * np.eye(8), Phi.T @ y)
        assert np.linalg.norm(ridge(Phi, y, 1e-3) - ref) < 1e-10 * np.linalg.norm(ref)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgument):
            ridge(np.array([[np.nan]]), np.array([1.0]), 1e-6)

    def test_rejects_non_positive_eta(self):
        with pytest.raises(InvalidArgument):
            ridge(np.eye(2), np.ones(2), 0.0)


class TestNormalize:
    def test_single_column(self):
        Phin, scales = normalize_columns(np.array([[3.0], [4.0]]))
        assert scales.tolist() == [5.0]
        assert np.allclose(Phin[:, 0], [0.6, 0.8])

    def test_unit_columns(self):
        _, scales = normalize_columns(np.eye(4))
        assert np.allclose(scales, 1.0)

    def test_zero_column_flagged(self):
        Phin, scales = normalize_columns(np.array([[1.0, 0.0], [1.0, 0.0]]))
        assert scales[1] == 0 and not Phin[:, 1].any()

    def test_rescaled_regression_equivalent(self):
        rng = np.random.default_rng(2)
        Phi = rng.normal(size=(40, 5)) * [1, 10, 100, 0.1, 3]
        y = rng.normal(size=40)
        raw = np.linalg.lstsq(Phi, y, rcond=None)[0]
        Phin, scales = normalize_columns(Phi)
        back = np.linalg.lstsq(Phin, y, rcond=None)[0] / scales
        assert np.allclose(raw, back, rtol=1e-10, atol=1e-12)


class TestStridge:
    def test_identity_example(self):
        y = np.array([5.0, 0.001, 3.0, 0.002, 1.0])
        sol = stridge(np.eye(5), y, delta_tol=0.5, M=3, R=2, beta=0.1)
        assert np.flatnonzero(sol.support).tolist() == [0, 2, 4]
        assert np.allclose(sol.coefficients[[0, 2, 4]], [5, 3, 1], atol=1e-5)
        oracle, _ = exhaustive_l0(np.eye(5), y, 0.1)
        assert np.array_equal(oracle != 0, sol.support)

    def test_exact_span_of_two_columns(self):
        rng = np.random.default_rng(4)
        Phi = rng.normal(size=(40, 10))
        y = 2.0 * Phi[:, 3] - 1.5 * Phi[:, 7]
        sol = stridge(Phi, y, delta_tol=0.5, M=10, R=5, beta=1e-3)
        assert np.flatnonzero(sol.support).tolist() == [3, 7]
        assert np.allclose(sol.coefficients[[3, 7]], [2.0, -1.5], atol=1e-8)

    def test_everything_pruned_returns_baseline(self):
        rng = np.random.default_rng(5)
        Phi = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        sol = stridge(Phi, y, delta_tol=1e6, M=4, R=3, beta=0.0)
        assert np.allclose(sol.coefficients, np.linalg.lstsq(Phi, y, rcond=None)[0])
        assert sol.support.all()

    def test_zero_column_gets_zero_coefficient(self):
        Phi = np.column_stack([np.linspace(1, 2, 10), np.zeros(10)])
        sol = stridge(Phi, 3 * Phi[:, 0], delta_tol=0.1, M=2, R=2, beta=1e-3)
        assert sol.coefficients[1] == 0 and sol.coefficients[0] == pytest.approx(3.0)

    @pytest.mark.parametrize("kwargs", [dict(delta_tol=0.0), dict(M=0), dict(R=0),
                                        dict(beta=-1.0), dict(eta=0.0)])
    def test_rejects_bad_hyperparameters(self, kwargs):
        args = dict(delta_tol=0.1, M=2, R=2, beta=0.1)
        args.update(kwargs)
        with pytest.raises(InvalidArgument):
            stridge(np.eye(3), np.ones(3), **args)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            stridge(np.eye(3), np.ones(4), 0.1, 2, 2, 0.1)


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 100_000), beta=st.floats(0.0, 1.0),
           dtol=st.floats(0.01, 2.0))
    def test_never_worse_than_baseline(self, seed, beta, dtol):
        rng = np.random.default_rng(seed)
        Phi = rng.normal(size=(25, 6))
        y = rng.normal(size=25)
        sol = stridge(Phi, y, dtol, 5, 3, beta, refit=False)
        Phin, _ = normalize_columns(Phi)
        base = np.linalg.lstsq(Phin, y, rcond=None)[0]
        base_loss = float(np.sum((Phin @ base - y) ** 2) + beta * 6)
        assert sol.loss <= base_loss + 1e-9
        assert all(b <= a + 1e-12 for a, b in zip(sol.history, sol.history[1:]))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_idempotent_on_own_support(self, seed):
        Phi, y, _ = planted_problem(seed, max_terms=8)
        y = y + np.random.default_rng(seed).normal(scale=0.05, size=y.size)
        first = stridge(Phi, y, 0.5, 10, 5, 0.01)
        cols = np.flatnonzero(first.support)
        second = stridge(Phi[:, cols], y, 0.5, 10, 5, 0.01)
        assert second.support.all()

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_planted_support_matches_oracle(self, seed):
        Phi, y, lam = planted_problem(seed, max_terms=8)
        sol = stridge(Phi, y, 0.5, 10, 5, 1e-3)
        oracle, _ = exhaustive_l0(Phi, y, 1e-3)
        assert np.array_equal(sol.support, oracle != 0)
        assert np.allclose(sol.coefficients, lam, atol=1e-8)
