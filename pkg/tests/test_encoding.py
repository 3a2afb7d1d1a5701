import numpy as np
import pytest

from dyson_ode.encoding import (MAX_DENSE, BlockSystem, build_block_system, condition_report,
                                explicit_inverse, inverse_block, materialize)
from dyson_ode.library import builtin_problem
from dyson_ode.problem import TimeGrid
from dyson_ode.suites import library_grid


def random_system(rng, n, r, complex_=False):
    v = rng.normal(size=(r, n, n))
    if complex_:
        v = v + 1j * rng.normal(size=(r, n, n))
    return BlockSystem.from_blocks(v / np.sqrt(n), rng.normal(size=n), rng.normal(size=(r, n)))


def blocks(matrix, n):
    count = matrix.shape[0] // n
    return [[matrix[i * n:(i + 1) * n, j * n:(j + 1) * n] for j in range(count)]
            for i in range(count)]


def test_scalar_layout():
    system = BlockSystem.from_blocks(np.array([[[2.0]]]), np.array([1.0]))
    np.testing.assert_array_equal(materialize(system), [[1, 0, 0], [-2, 1, 0], [0, -1, 1]])


def test_three_step_pattern():
    rng = np.random.default_rng(0)
    system = random_system(rng, 2, 3)
    b = blocks(materialize(system), 2)
    eye, zero = np.eye(2), np.zeros((2, 2))
    for i in range(7):
        for j in range(7):
            if i == j:
                expected = eye
            elif i == j + 1:
                expected = -system.v_blocks[i - 1] if i <= 3 else -eye
            else:
                expected = zero
            assert np.array_equal(b[i][j], expected)


def test_identity_blocks_give_shift_pattern():
    system = BlockSystem.from_blocks(np.stack([np.eye(1)] * 3), np.ones(1))
    expected = np.eye(7) - np.eye(7, k=-1)
    np.testing.assert_array_equal(materialize(system), expected)
    np.testing.assert_array_equal(explicit_inverse(system), np.tril(np.ones((7, 7))))


def test_explicit_inverse_three_step_pattern():
    rng = np.random.default_rng(1)
    system = random_system(rng, 2, 3)
    v1, v2, v3 = system.v_blocks
    inv = blocks(explicit_inverse(system), 2)
    eye = np.eye(2)
    saturated = [v3 @ v2 @ v1, v3 @ v2, v3, eye]
    for row in (4, 5, 6):
        for col in range(4):
            np.testing.assert_allclose(inv[row][col], saturated[col], atol=1e-12)
        for col in range(4, row + 1):
            assert np.array_equal(inv[row][col], eye)
    np.testing.assert_allclose(inv[3][0], v3 @ v2 @ v1, atol=1e-12)
    np.testing.assert_allclose(inv[2][1], v2, atol=1e-12)
    for row in range(7):
        for col in range(row + 1, 7):
            assert not np.any(inv[row][col])


@pytest.mark.parametrize("n,r", [(1, 1), (2, 4), (3, 5)])
@pytest.mark.parametrize("complex_", [False, True])
def test_inverse_matches_dense(n, r, complex_):
    rng = np.random.default_rng(n * 10 + r)
    system = random_system(rng, n, r, complex_)
    dense = materialize(system)
    inv = explicit_inverse(system)
    np.testing.assert_allclose(dense @ inv, np.eye(system.dimension), atol=1e-10)
    np.testing.assert_allclose(inv, np.linalg.inv(dense), atol=1e-10)
    for row, col in [(0, 0), (r, 0), (2 * r, 1)]:
        np.testing.assert_array_equal(inverse_block(system, row, col),
                                      blocks(inv, n)[row][col])


def test_block_operator_actions_match_dense():
    rng = np.random.default_rng(5)
    system = random_system(rng, 3, 4)
    dense = materialize(system)
    x = rng.normal(size=system.dimension)
    np.testing.assert_allclose(system.matvec(x), dense @ x, atol=1e-12)
    np.testing.assert_allclose(system.rmatvec(x), dense.T @ x, atol=1e-12)
    np.testing.assert_allclose(system.solve(x), np.linalg.solve(dense, x), atol=1e-10)
    np.testing.assert_allclose(system.rsolve(x), np.linalg.solve(dense.T, x), atol=1e-10)


def test_dense_cap():
    system = BlockSystem.from_blocks(np.zeros((1000, 3, 3)), np.ones(3))
    assert system.dimension > MAX_DENSE
    with pytest.raises(ValueError):
        materialize(system)


def test_iterative_norms_above_cap_agrees_with_bounds():
    system = BlockSystem.from_blocks(np.stack([0.9 * np.eye(8)] * 257), np.ones(8))
    report = condition_report(system)
    assert report.method == "lanczos"
    assert report.norm_a <= report.bound_norm_a + 1e-9
    assert report.norm_a_inv <= report.bound_norm_a_inv + 1e-9


def test_condition_examples():
    unit = BlockSystem.from_blocks(np.stack([np.eye(1)] * 3), np.ones(1))
    report = condition_report(unit)
    assert report.kappa <= report.kappa_bound
    assert report.norm_a_inv >= np.sqrt(7)
    assert report.kappa == pytest.approx(report.norm_a * report.norm_a_inv)
    dissipative = BlockSystem.from_blocks(np.zeros((2, 1, 1)), np.ones(1))
    assert condition_report(dissipative).bound_norm_a_inv == pytest.approx(5.0)


def test_block_norm_summaries_match_dense_inverse():
    rng = np.random.default_rng(9)
    system = random_system(rng, 2, 4)
    inv = blocks(explicit_inverse(system), 2)
    norms = np.array([[np.linalg.norm(b, 2) for b in row] for row in inv])
    report = condition_report(system)
    assert report.max_inverse_block_norm == pytest.approx(norms.max())
    diag_max = [max(norms[j + k, j] for j in range(9 - k)) for k in range(9)]
    assert report.sum_diagonal_bound_norm_a_inv == pytest.approx(sum(diag_max))


def test_damped_oscillator_kappa_per_block():
    problem = builtin_problem("oscillator")
    system = build_block_system(problem, TimeGrid.uniform(problem.horizon, 8, 1), 12)
    report = condition_report(system)
    assert report.kappa / report.big_r <= 4


def test_build_trivial_and_time_independent():
    zero = builtin_problem("zero")
    system = build_block_system(zero, TimeGrid.uniform(1.0, 3), 4)
    assert np.array_equal(system.v_blocks, np.stack([np.eye(2)] * 3))
    assert np.array_equal(system.rhs_blocks()[1:], np.zeros((6, 2)))
    heat = builtin_problem("heat8")
    system = build_block_system(heat, library_grid(heat), 8)
    for v in system.v_blocks[1:]:
        np.testing.assert_array_equal(v, system.v_blocks[0])
    assert system.big_r == 2 * system.r


def test_build_rejects_bad_inputs():
    problem = builtin_problem("decay1d")
    with pytest.raises(ValueError):
        build_block_system(problem, TimeGrid.uniform(1.0, 2), 0)
    with pytest.raises(ValueError):
        build_block_system(problem, TimeGrid.uniform(2.0, 2), 3)


def test_threaded_build_matches_serial():
    problem = builtin_problem("modulated")
    grid = library_grid(problem, 16)
    serial = build_block_system(problem, grid, 6, threads=1)
    threaded = build_block_system(problem, grid, 6, threads=3)
    assert np.array_equal(serial.v_blocks, threaded.v_blocks)
    assert np.array_equal(serial.rhs_v, threaded.rhs_v)


def test_serialization_round_trip():
    rng = np.random.default_rng(2)
    system = random_system(rng, 2, 3, complex_=True)
    again = BlockSystem.from_dict(system.to_dict())
    assert np.array_equal(again.v_blocks, system.v_blocks)
    assert np.array_equal(again.rhs_v, system.rhs_v)
    assert np.array_equal(again.rhs_x0, system.rhs_x0)
