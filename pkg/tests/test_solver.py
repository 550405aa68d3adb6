import math

import numpy as np
import pytest
from oracles import fista
from pydantic import ValidationError

from patternsearch.core.patterns import BinaryDataset, build_design, enumerate_patterns
from patternsearch.core.solver import (
    PatternSearchSolver,
    SolverConfig,
    first_order_step,
    lambda_grid,
    neg_log_lik_grad_hess,
    optimality_measure,
    reduced_newton_step,
    solve_path,
    solve_single,
)
from patternsearch.exceptions import SolverError


def test_first_order_step_solves_subproblem(problem):
    data, design = problem
    rng = np.random.default_rng(1)
    z = np.where(rng.random(design.n_columns) < 0.5, rng.normal(size=design.n_columns), 0.0)
    g = neg_log_lik_grad_hess(design, data.y, z).gradient
    alpha, lam = 0.7, 0.05
    d = first_order_step(z, g, alpha, lam)
    new = z + d
    residual = g + alpha * d
    assert abs(residual[0]) < 1e-12
    for j in range(1, len(z)):
        if new[j] != 0:
            assert abs(residual[j] + lam * np.sign(new[j])) < 1e-12
        else:
            assert abs(residual[j]) <= lam + 1e-12


def test_first_order_step_respects_working_set(problem):
    data, design = problem
    z = np.zeros(design.n_columns)
    g = neg_log_lik_grad_hess(design, data.y, z).gradient
    d = first_order_step(z, g, 1.0, 0.0, working_set=np.array([0, 2]))
    assert np.count_nonzero(d[[1] + list(range(3, len(z)))]) == 0


def test_optimality_measure_definition():
    z = np.array([0.5, 1.0, 0.0, -2.0, 0.0])
    g = np.array([0.1, -0.3, 0.5, 0.2, -0.05])
    lam = 0.2
    expected = np.array([0.1, -0.3 + 0.2, 0.3, 0.2 - 0.2, 0.0])
    assert optimality_measure(z, g, lam) == pytest.approx(np.linalg.norm(expected))


def test_reduced_newton_exact_step_without_damping(problem):
    data, design = problem
    z = np.zeros(design.n_columns)
    z[0] = 0.2
    inactive = np.array([0, 1, 3])
    evaluation = neg_log_lik_grad_hess(design, data.y, z, subset=inactive, hessian=True)
    step, damping = reduced_newton_step(design, data.y, z, inactive, np.zeros(3), 0.0, 1.0, damping=0.0)
    assert damping == 0.0
    assert np.allclose(step, np.linalg.solve(evaluation.hessian, -evaluation.gradient), atol=1e-12)


def test_reduced_newton_singular_raises_with_diagnostics():
    X = np.array([[1, 0], [0, 0], [1, 0], [0, 0]])
    data = BinaryDataset(X, np.array([1, 0, 0, 1]))
    design = build_design(data, enumerate_patterns(2, 1))
    with pytest.raises(SolverError) as info:
        reduced_newton_step(design, data.y, np.zeros(3), np.array([0, 2]), np.zeros(2), 0.0, 0.0, damping=0.0)
    assert info.value.diagnostics["n_inactive"] == 2


def test_lambda_above_max_gives_constant_model(problem):
    data, design = problem
    solver = PatternSearchSolver(design, data.y)
    fit = solver.solve(1.01 * solver.lambda_max())
    ybar = data.y.mean()
    assert fit.support_size == 0
    assert fit.converged
    assert fit.mu == pytest.approx(math.log(ybar / (1 - ybar)), abs=1e-8)


def test_lambda_max_is_the_threshold(problem):
    data, design = problem
    solver = PatternSearchSolver(design, data.y)
    fit = solver.solve(0.9 * solver.lambda_max())
    assert fit.support_size >= 1


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_matches_proximal_gradient_oracle(problem_factory, seed):
    data, design = problem_factory(seed, n=80, p=5, q=3)
    B = design.matrix.toarray().astype(float)
    solver = PatternSearchSolver(design, data.y, SolverConfig(tol=1e-9))
    lam = 0.15 * solver.lambda_max()
    fit = solver.solve(lam)
    _, reference = fista(B, data.y.astype(float), lam)
    assert fit.converged
    assert abs(fit.objective - reference) < 1e-6


def test_converged_fit_is_certified(problem):
    data, design = problem
    solver = PatternSearchSolver(design, data.y)
    for lam in lambda_grid(solver.lambda_max(), 8, 1e-2):
        fit = solver.solve(lam)
        if fit.converged:
            assert fit.delta_final <= solver.config.tol
            g = neg_log_lik_grad_hess(design, data.y, fit.coefficient_vector()).gradient
            assert optimality_measure(fit.coefficient_vector(), g, lam) == pytest.approx(fit.delta_final)


def test_objective_trace_is_monotone(problem):
    data, design = problem
    solver = PatternSearchSolver(design, data.y, SolverConfig(record_trace=True))
    fit = solver.solve(0.05 * solver.lambda_max())
    assert np.all(np.diff(fit.objective_trace) <= 0)
    assert len(fit.diagnostics) == fit.iterations
    assert {row["step_type"] for row in fit.diagnostics} <= {"newton", "damped_newton", "first_order", "rejected"}
    assert fit.step_counts.get("newton", 0) >= 1


def test_first_order_only_when_newton_disabled(problem):
    data, design = problem
    config = SolverConfig(newton_max_inactive=1, max_iters=300, record_trace=True)
    solver = PatternSearchSolver(design, data.y, config)
    fit = solver.solve(0.3 * solver.lambda_max())
    for row in fit.diagnostics:
        if row["step_type"] in ("newton", "damped_newton"):
            assert row["n_inactive"] <= 1
    assert fit.step_counts.get("first_order", 0) >= 1
    assert np.all(np.diff(fit.objective_trace) <= 0)


def test_working_set_sampling_reaches_same_minimum(problem_factory):
    data, design = problem_factory(5, n=100, p=6, q=3)
    full = PatternSearchSolver(design, data.y, SolverConfig(tol=1e-9))
    lam = 0.1 * full.lambda_max()
    sampled = PatternSearchSolver(design, data.y, SolverConfig(tol=1e-9, sigma=0.3, seed=11)).solve(lam)
    assert sampled.converged
    assert sampled.delta_final <= 1e-9
    assert sampled.objective == pytest.approx(full.solve(lam).objective, abs=1e-8)


def test_sampling_fraction_default():
    config = SolverConfig()
    assert config.sampling_fraction(100, 1001) == 0.1
    assert config.sampling_fraction(100, 1000) == 1.0
    assert SolverConfig(sigma=0.5).sampling_fraction(100, 5000) == 0.5


def test_solver_is_deterministic(problem):
    data, design = problem
    config = SolverConfig(sigma=0.5, seed=3)
    first = solve_single(design, data.y, 0.02, config)
    second = solve_single(design, data.y, 0.02, config)
    assert np.array_equal(first.coefficient_vector(), second.coefficient_vector())


def test_path_with_warm_starts(problem):
    data, design = problem
    solver = PatternSearchSolver(design, data.y)
    grid = lambda_grid(solver.lambda_max(), 10, 2e-2)
    path = solve_path(design, data.y, grid)
    assert [fit.lam for fit in path] == list(grid)
    assert path[0].support_size == 0
    assert path[-1].support_size > 0
    assert all(fit.converged for fit in path)


def test_path_rejects_unsorted_grid(problem):
    data, design = problem
    with pytest.raises(ValueError):
        solve_path(design, data.y, [0.01, 0.02])
    with pytest.raises(ValueError):
        solve_path(design, data.y, [])


def test_lambda_grid_shape():
    grid = lambda_grid(2.0)
    assert len(grid) == 50
    assert grid[0] == pytest.approx(2.0)
    assert grid[-1] == pytest.approx(2e-4)
    assert np.all(np.diff(grid) < 0)
    assert list(lambda_grid(0.0)) == [0.0]


def test_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(eta=1.5)
    with pytest.raises(ValidationError):
        SolverConfig(sigma=0.0)
    with pytest.raises(ValidationError):
        SolverConfig(unknown=1)


def test_fit_dict_round_trip(problem):
    data, design = problem
    fit = solve_single(design, data.y, 0.02)
    again = type(fit).from_dict(fit.to_dict())
    assert np.array_equal(again.coefficient_vector(), fit.coefficient_vector())
    assert again.converged == fit.converged


@pytest.mark.slow
def test_oracle_equivalence_on_many_instances(problem_factory):
    rng = np.random.default_rng(99)
    for seed in range(100):
        n = int(rng.integers(30, 101))
        p = int(rng.integers(3, 7))
        q = min(p, int(rng.integers(1, 4)))
        data, design = problem_factory(seed, n=n, p=p, q=q)
        if design.n_columns > 50:
            design = build_design(data, enumerate_patterns(p, 2))
        solver = PatternSearchSolver(design, data.y, SolverConfig(tol=1e-9))
        lam = float(rng.uniform(0.02, 0.5)) * solver.lambda_max()
        fit = solver.solve(lam)
        _, reference = fista(design.matrix.toarray().astype(float), data.y.astype(float), lam)
        assert abs(fit.objective - reference) < 1e-6, seed


def test_loss_at_zero_is_log_two(problem):
    data, design = problem
    evaluation = neg_log_lik_grad_hess(design, data.y, np.zeros(design.n_columns))
    assert evaluation.value == pytest.approx(math.log(2.0), abs=1e-15)
    assert np.allclose(evaluation.probabilities, 0.5)


def test_gradient_matches_central_differences(problem):
    data, design = problem
    rng = np.random.default_rng(4)
    z = rng.normal(scale=0.5, size=design.n_columns)
    gradient = neg_log_lik_grad_hess(design, data.y, z).gradient
    h = 1e-5
    for j in range(design.n_columns):
        shift = np.zeros_like(z)
        shift[j] = h
        upper = neg_log_lik_grad_hess(design, data.y, z + shift).value
        lower = neg_log_lik_grad_hess(design, data.y, z - shift).value
        assert (upper - lower) / (2 * h) == pytest.approx(gradient[j], rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("delta_z", [1e-3, 10.0])
def test_reduced_newton_one_dimensional_closed_form(problem, delta_z):
    data, design = problem
    z = np.zeros(design.n_columns)
    z[0] = -0.3
    z[2] = 0.4
    inactive = np.array([2])
    lam = 0.02
    evaluation = neg_log_lik_grad_hess(design, data.y, z, subset=inactive, hessian=True)
    g, h = evaluation.gradient[0], evaluation.hessian[0, 0]
    step, damping = reduced_newton_step(design, data.y, z, inactive, np.array([1.0]), lam, delta_z)
    assert damping == pytest.approx(min(delta_z, h))
    assert step[0] == pytest.approx(-(g + lam) / (h + damping), rel=1e-12)


def test_newton_needs_fewer_iterations_than_first_order(problem):
    data, design = problem
    lam = 0.1 * PatternSearchSolver(design, data.y).lambda_max()
    newton = PatternSearchSolver(design, data.y, SolverConfig(tol=1e-8)).solve(lam)
    first_order = PatternSearchSolver(
        design, data.y, SolverConfig(tol=1e-8, newton_max_inactive=1, max_iters=2000)
    ).solve(lam)
    assert newton.converged
    assert newton.iterations < first_order.iterations


def test_tiny_alpha_escapes_by_doubling(problem):
    data, design = problem
    config = SolverConfig(alpha0=1e-8, newton_max_inactive=1, record_trace=True, max_iters=300)
    solver = PatternSearchSolver(design, data.y, config)
    fit = solver.solve(0.3 * solver.lambda_max())
    steps = [row["step_type"] for row in fit.diagnostics]
    leading = next(i for i, step in enumerate(steps) if step != "rejected")
    assert 1 <= leading <= 60
    assert np.all(np.diff(fit.objective_trace) <= 0)


def test_intercept_is_not_penalized(problem):
    data, design = problem
    solver = PatternSearchSolver(design, data.y, SolverConfig(tol=1e-9))
    fit = solver.solve(0.2 * solver.lambda_max())
    gradient = neg_log_lik_grad_hess(design, data.y, fit.coefficient_vector()).gradient
    assert abs(gradient[design.constant_column_index]) <= 1e-9
    y = np.r_[np.ones(5), np.zeros(45)].astype(np.int8)
    X = np.random.default_rng(6).integers(0, 2, size=(50, 3))
    skewed = build_design(BinaryDataset(X, y), enumerate_patterns(3, 2))
    constant = PatternSearchSolver(skewed, y).solve(100.0)
    assert constant.support_size == 0
    assert constant.mu == pytest.approx(math.log(0.1 / 0.9), abs=1e-8)
