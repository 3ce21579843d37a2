import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsespline.errors import InvalidArgument, LibrarySyntaxError
from sparsespline.library import (double_pendulum_library, emps_library, parse_library_spec,
                                  polynomial_library)


def numeric_partials(lib, S, D=None, U=None, h=1e-6):
    """Central differences of evaluate() with respect to every state and derivative channel."""
    N, n = S.shape
    dS = np.zeros((N, lib.l, n))
    dD = np.zeros((N, lib.l, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dS[:, :, k] = (lib.evaluate(S + e, D, U) - lib.evaluate(S - e, D, U)) / (2 * h)
        if D is not None:
            dD[:, :, k] = (lib.evaluate(S, D + e, U) - lib.evaluate(S, D - e, U)) / (2 * h)
    return dS, dD


class TestPolynomial:
    def test_lorenz_size(self):
        lib = polynomial_library(3, 3)
        assert lib.l == 20
        assert lib.labels[0] == "1"

    def test_constant_only(self):
        lib = polynomial_library(1, 0)
        assert lib.labels == ["1"]

    def test_two_states_degree_two(self):
        assert polynomial_library(2, 2).labels == ["1", "x", "y", "x^2", "x*y", "y^2"]

    def test_graded_order(self):
        labels = polynomial_library(3, 2).labels
        assert labels == ["1", "x", "y", "z", "x^2", "x*y", "x*z", "y^2", "y*z", "z^2"]

    def test_evaluate_row(self):
        Phi = polynomial_library(3, 2).evaluate(np.array([[1.0, 2.0, 3.0]]))
        assert np.array_equal(Phi[0], [1, 1, 2, 3, 1, 2, 3, 4, 6, 9])

    def test_origin_row(self):
        Phi = polynomial_library(3, 3).evaluate(np.zeros((1, 3)))
        assert Phi[0, 0] == 1 and not Phi[0, 1:].any()

    def test_rejects_bad_arguments(self):
        with pytest.raises(InvalidArgument):
            polynomial_library(0, 2)
        with pytest.raises(InvalidArgument):
            polynomial_library(2, -1)

    def test_wrong_state_count(self):
        with pytest.raises(InvalidArgument):
            polynomial_library(3, 2).evaluate(np.zeros((4, 2)))

    def test_monomial_partials(self):
        lib = parse_library_spec("x*y", state_names=["x", "y"])
        dS, _ = lib.partials(np.array([[2.0, 5.0]]))
        assert dS[0, 0].tolist() == [5.0, 2.0]


class TestDoublePendulum:
    def test_size_and_derivative_terms(self):
        lib = double_pendulum_library()
        assert lib.l == 20
        assert lib.uses_derivatives
        assert sum(1 for t in lib.terms if t.deriv_channels) == 2
        assert "sin(th1-th2)*w2^2" in lib.labels

    def test_evaluate_at_rest_with_accelerations(self):
        lib = double_pendulum_library()
        S = np.zeros((1, 4))
        D = np.array([[0.0, 0.0, 5.0, 7.0]])
        Phi = lib.evaluate(S, D)[0]
        expected = np.zeros(20)
        expected[lib.index("dstate(w1)*cos(th1-th2)")] = 5.0
        expected[lib.index("dstate(w2)*cos(th1-th2)")] = 7.0
        assert np.allclose(Phi, expected)

    def test_needs_derivatives(self):
        with pytest.raises(InvalidArgument):
            double_pendulum_library().evaluate(np.zeros((2, 4)))

    def test_trig_partials(self):
        lib = parse_library_spec("sin(th1-th2)", state_names=["th1", "th2"])
        dS, _ = lib.partials(np.array([[np.pi / 2, 0.0]]))
        assert np.allclose(dS[0, 0], [0.0, 0.0], atol=1e-15)

    def test_partials_match_finite_differences(self):
        lib = double_pendulum_library()
        rng = np.random.default_rng(0)
        S = rng.uniform(-2, 2, (100, 4))
        D = rng.uniform(-20, 20, (100, 4))
        dS, dD = lib.partials(S, D)
        nS, nD = numeric_partials(lib, S, D)
        scale = max(np.abs(dS).max(), np.abs(dD).max())
        assert np.abs(dS - nS).max() < 1e-6 * scale
        assert np.abs(dD - nD).max() < 1e-6 * scale


class TestEmps:
    def test_terms(self):
        lib = emps_library()
        assert lib.l == 7
        assert lib.labels == ["q", "q^2", "p", "p^2", "sign(p)", "input(tau)", "1"]
        assert lib.input_names == ("tau",)

    def test_sign_convention(self):
        lib = emps_library()
        Phi = lib.evaluate(np.array([[0.0, 0.0], [0.0, -2.5], [0.0, 1e-9]]), inputs=np.zeros(3))
        j = lib.index("sign(p)")
        assert Phi[:, j].tolist() == [0.0, -1.0, 1.0]

    def test_input_column_verbatim(self):
        lib = emps_library()
        tau = np.array([0.3, -1.7, 2.25])
        Phi = lib.evaluate(np.ones((3, 2)), inputs=tau)
        assert np.array_equal(Phi[:, lib.index("input(tau)")], tau)

    def test_needs_inputs(self):
        with pytest.raises(InvalidArgument):
            emps_library().evaluate(np.ones((3, 2)))

    def test_sign_partial_is_zero(self):
        lib = emps_library()
        dS, _ = lib.partials(np.array([[0.2, -0.4]]), inputs=[1.0])
        assert not dS[0, lib.index("sign(p)")].any()


class TestParser:
    def test_poly_macro(self):
        assert parse_library_spec("poly(3, deg=3)").labels == polynomial_library(3, 3).labels

    def test_emps_text(self):
        lib = parse_library_spec("1; q; q^2; p; p^2; sign(p); input(tau)")
        assert lib.labels == ["1", "q", "q^2", "p", "p^2", "sign(p)", "input(tau)"]
        assert lib.state_names == ("q", "p")

    def test_empty_is_error(self):
        with pytest.raises(LibrarySyntaxError):
            parse_library_spec("")

    def test_syntax_error_position(self):
        with pytest.raises(LibrarySyntaxError) as info:
            parse_library_spec("x;\n  (y")
        assert info.value.line == 2
        assert info.value.column == 3

    def test_duplicate_label(self):
        with pytest.raises(LibrarySyntaxError, match="duplicate"):
            parse_library_spec("x; x")

    def test_unknown_declared_state(self):
        with pytest.raises(LibrarySyntaxError):
            parse_library_spec("states(a, b); c")

    @pytest.mark.parametrize("make", [lambda: polynomial_library(3, 3), double_pendulum_library,
                                      emps_library])
    def test_render_round_trip(self, make):
        lib = make()
        again = parse_library_spec(lib.render())
        assert again.labels == lib.labels
        assert again.state_names == lib.state_names
        assert again.input_names == lib.input_names


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), deg=st.integers(1, 3))
    def test_row_permutation_equivariance(self, seed, deg):
        rng = np.random.default_rng(seed)
        lib = polynomial_library(3, deg)
        S = rng.normal(size=(12, 3))
        perm = rng.permutation(12)
        assert np.array_equal(lib.evaluate(S)[perm], lib.evaluate(S[perm]))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_polynomial_partials_match_finite_differences(self, seed):
        lib = polynomial_library(3, 3)
        S = np.random.default_rng(seed).uniform(-3, 3, (20, 3))
        dS, _ = lib.partials(S)
        nS, _ = numeric_partials(lib, S)
        assert np.abs(dS - nS).max() < 1e-6 * max(1.0, np.abs(dS).max())
