import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from dyson_ode.problem import MatrixFunction, OdeProblem, TimeGrid, VectorFunction
from dyson_ode.propagator import (augmented, brute_force_dyson, discretized_dyson,
                                  integrate_linear, ordered_exponential, reference_solution,
                                  taylor_propagator, truncated_ordered_product)


def constant(a, b=None):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.zeros(len(a)) if b is None else np.asarray(b, dtype=float)
    return MatrixFunction.constant(a), VectorFunction.constant(b)


@pytest.mark.parametrize("order", [0, 1, 3, 6])
@pytest.mark.parametrize("m", [1, 2, 7])
def test_zero_coefficients_give_identity_and_zero(order, m):
    a, b = constant(np.zeros((3, 3)))
    p = discretized_dyson(a, b, 0.0, 0.7, m, order)
    assert np.array_equal(p.w, np.eye(3))
    assert np.array_equal(p.v, np.zeros(3))


def test_zero_a_with_constant_drive():
    a, b = constant(np.zeros((2, 2)), [1.5, -2.0])
    p = discretized_dyson(a, b, 0.0, 0.4, 5, 3)
    assert np.array_equal(p.w, np.eye(2))
    np.testing.assert_allclose(p.v, [0.6, -0.8], rtol=1e-15)


@pytest.mark.parametrize("m", [1, 4, 16])
def test_scalar_decay_partial_sum(m):
    a, b = constant([[-1.0]])
    p = discretized_dyson(a, b, 0.0, 0.5, m, 4)
    expected = sum((-0.5) ** k / math.factorial(k) for k in range(5))
    assert abs(p.w[0, 0] - expected) < 1e-15


def test_random_linear_family_matches_brute_force():
    rng = np.random.default_rng(3)
    a = MatrixFunction.polynomial(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), "linear")
    b = VectorFunction.polynomial(rng.normal(size=3), rng.normal(size=3), "linear")
    fast = discretized_dyson(a, b, 0.2, 0.6, 4, 3)
    slow = brute_force_dyson(a, b, 0.2, 0.6, 4, 3)
    np.testing.assert_allclose(fast.w, slow.w, atol=1e-12)
    np.testing.assert_allclose(fast.v, slow.v, atol=1e-12)


def test_brute_force_first_order():
    a = MatrixFunction.polynomial([[0.3]], [[1.0]], "linear")
    b = VectorFunction.zero(1)
    p = brute_force_dyson(a, b, 0.0, 2.0, 2, 1)
    assert p.w[0, 0] == pytest.approx(1 + 1.0 * (0.3 + 1.3))
    assert brute_force_dyson(a, b, 0.0, 2.0, 2, 0).w[0, 0] == 1.0


def test_brute_force_hand_enumeration():
    # A(t0) = 1, A(t1) = 2 with dt_small = 1: degree-2 coefficient is 1/2 + 4/2 + 2*1
    a = MatrixFunction.polynomial([[1.0]], [[1.0]], "linear")
    p2 = brute_force_dyson(a, VectorFunction.zero(1), 0.0, 2.0, 2, 2)
    p1 = brute_force_dyson(a, VectorFunction.zero(1), 0.0, 2.0, 2, 1)
    assert p2.w[0, 0] - p1.w[0, 0] == pytest.approx(4.5)


def test_brute_force_limits():
    a, b = constant([[1.0]])
    with pytest.raises(ValueError):
        brute_force_dyson(a, b, 0.0, 1.0, 9, 2)
    with pytest.raises(ValueError):
        brute_force_dyson(a, b, 0.0, 1.0, 2, 5)


def test_taylor_examples():
    assert taylor_propagator(np.array([[-1.0]]), np.zeros(1), 1.0, 2).w[0, 0] == 0.5
    p = taylor_propagator(np.zeros((2, 2)), np.array([1.0, 2.0]), 0.3, 5)
    np.testing.assert_allclose(p.v, [0.3, 0.6], rtol=1e-15)
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    w = taylor_propagator(rot, np.zeros(2), 0.1, 8).w
    np.testing.assert_allclose(w, scipy.linalg.expm(0.1 * rot), atol=1e-10)


@pytest.mark.parametrize("method", ["product", "counting"])
def test_fast_paths_agree(method):
    rng = np.random.default_rng(7)
    a = MatrixFunction.constant(rng.normal(size=(3, 3)) / 3)
    b = VectorFunction.polynomial(rng.normal(size=3), rng.normal(size=3), "sin", 2.0)
    ref = discretized_dyson(a, b, 0.1, 0.8, 32, 6, method="product")
    p = discretized_dyson(a, b, 0.1, 0.8, 32, 6, method=method)
    np.testing.assert_allclose(p.v, ref.v, atol=1e-13)
    np.testing.assert_allclose(p.w, ref.w, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(order=st.integers(0, 6), m=st.integers(1, 12), seed=st.integers(0, 2**16))
def test_augmented_bottom_row_exact(order, m, seed):
    rng = np.random.default_rng(seed)
    aug = augmented(rng.normal(size=(m, 2, 2)), rng.normal(size=(m, 2)))
    total = truncated_ordered_product(0.1 * aug, order).sum(axis=0)
    assert np.array_equal(total[-1], [0.0, 0.0, 1.0])


def test_convergence_in_k_term_bound():
    a = MatrixFunction.polynomial([[0.0, 1.0], [-1.0, -0.1]], [[0.0, 0.5], [-0.5, 0.0]], "sin")
    b = VectorFunction.zero(2)
    a_max, dt = 1.6, 0.6
    previous = discretized_dyson(a, b, 0.0, dt, 64, 0).w
    for k in range(1, 9):
        current = discretized_dyson(a, b, 0.0, dt, 64, k).w
        step = np.linalg.norm(current - previous, 2)
        assert step <= (a_max * dt) ** k / math.factorial(k) + 1e-15
        previous = current


def test_ordered_exponential_examples():
    zero = MatrixFunction.constant(np.zeros((2, 2)))
    np.testing.assert_allclose(ordered_exponential(zero, 0.0, 1.0), np.eye(2), atol=1e-15)
    c = np.array([[-0.3, 0.8], [-0.8, -0.1]])
    np.testing.assert_allclose(ordered_exponential(MatrixFunction.constant(c), 0.0, 1.5),
                               scipy.linalg.expm(1.5 * c), atol=1e-10)
    diag = MatrixFunction.polynomial(np.diag([-1.0, 0.5]), np.diag([1.0, 2.0]), "sin", 3.0)
    integral = np.diag([-1.0, 0.5]) * 2.0 + np.diag([1.0, 2.0]) * (1 - math.cos(6.0)) / 3.0
    np.testing.assert_allclose(ordered_exponential(diag, 0.0, 2.0),
                               scipy.linalg.expm(integral), atol=1e-10)


def problem(a, b, x0, horizon):
    return OdeProblem.create(a, b, np.asarray(x0, dtype=float), horizon)


def test_reference_solution_examples():
    zero = problem(MatrixFunction.constant(np.zeros((2, 2))), None, [1.0, -2.0], 1.0)
    np.testing.assert_array_equal(reference_solution(zero, 0.7), [1.0, -2.0])
    decay = problem(MatrixFunction.constant([[-1.0]]), None, [1.0], 1.0)
    assert abs(reference_solution(decay, 1.0)[0] - math.exp(-1)) < 1e-12


def test_reference_solution_driven_oscillator_regression():
    a = MatrixFunction.constant([[0.0, 1.0], [-1.0, -0.5]])
    b = VectorFunction.polynomial([0.0, 0.0], [0.0, 1.0], "sin", 1.0, math.pi / 2)
    x = reference_solution(problem(a, b, [1.0, 0.0], 2.0), 2.0)
    # closed form through the augmented exponential of the forced system
    big = np.zeros((4, 4))
    big[:2, :2] = [[0.0, 1.0], [-1.0, -0.5]]
    big[1, 2] = 1.0                        # cos t enters the velocity
    big[2:, 2:] = [[0.0, -1.0], [1.0, 0.0]]  # (cos t, sin t) rotation
    exact = scipy.linalg.expm(2.0 * big) @ np.array([1.0, 0.0, 1.0, 0.0])
    np.testing.assert_allclose(x, exact[:2], atol=1e-11)


def test_integrate_linear_rejects_bad_tolerance():
    a = MatrixFunction.constant([[-1.0]])
    with pytest.raises(ValueError):
        integrate_linear(a, None, np.ones(1), 0.0, 1.0, tol=0.0)


def test_time_grid_invariants():
    grid = TimeGrid.uniform(3.0, 7, 16)
    assert grid.r * grid.delta_t == pytest.approx(3.0, rel=1e-12)
    assert grid.m * grid.delta_t_small == pytest.approx(grid.delta_t, rel=1e-12)
    assert len(grid.fine_times()) == 7 * 16


def test_problem_rejects_mismatch():
    with pytest.raises(ValueError):
        OdeProblem.create(MatrixFunction.constant(np.eye(2)), None, np.ones(3), 1.0)
