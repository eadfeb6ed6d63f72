import math
import pytest
import numpy as np

from levyflow.core.errors import ConvergenceError, DomainError, ParameterError
from levyflow.models.arrays import TimeGrid
from levyflow.services.path_sampler import sample_path, sample_paths, zero_path
from levyflow.services.pathwise_solver import (
    flow,
    flow_composition_residual,
    noise_at_nodes,
    solve_frozen,
    solve_frozen_batch,
    solver_nodes,
)


class TestSolverNodes:
    @pytest.mark.solver
    @pytest.mark.unit
    def test_nodes_merge_start_and_extra_times(self, stable_model):
        grid = TimeGrid.uniform(1.0, 4)
        path = sample_path(stable_model, grid, seed=1)
        nodes = solver_nodes(path, 0.3, extra=[0.6])
        np.testing.assert_allclose(nodes, [0.0, 0.25, 0.3, 0.5, 0.6, 0.75, 1.0])

    @pytest.mark.solver
    @pytest.mark.unit
    def test_nodes_include_big_jump_times(self, compound_model):
        grid = TimeGrid.uniform(1.0, 4)
        path = next(
            p for p in (sample_path(compound_model, grid, 1, i, method="levy_ito") for i in range(200))
            if len(p.jump_times)
        )
        nodes = solver_nodes(path, 0.0)
        assert set(path.jump_times).issubset(set(nodes))

    @pytest.mark.solver
    @pytest.mark.unit
    def test_noise_vanishes_before_start(self, stable_model, small_grid):
        path = sample_path(stable_model, small_grid, seed=2)
        nodes = solver_nodes(path, 0.5)
        noise = noise_at_nodes(path, nodes, 0.5)
        assert not np.any(noise[nodes <= 0.5])
        np.testing.assert_allclose(noise[-1], path.values[-1] - path.values[64])


class TestSolveFrozen:
    """Frozen-path solutions Y_t = x + ∫_s^t b(r, Y_r + L_r - L_s) dr."""

    @pytest.mark.solver
    @pytest.mark.unit
    def test_zero_drift_keeps_start_point(self, zero_drift, stable_model, small_grid):
        path = sample_path(stable_model, small_grid, seed=3)
        curve = solve_frozen(zero_drift, path, 0.25, [0.7])
        np.testing.assert_array_equal(curve.y_values, np.full_like(curve.y_values, 0.7))
        assert curve.residual == 0.0

    @pytest.mark.solver
    @pytest.mark.unit
    def test_full_solution_adds_noise(self, bump_drift, stable_model, small_grid):
        path = sample_path(stable_model, small_grid, seed=3)
        curve = solve_frozen(bump_drift, path, 0.0, [0.2], tol=1e-8)
        np.testing.assert_allclose(curve.x_values - curve.y_values, curve.noise)
        np.testing.assert_allclose(curve.x_values[-1] - curve.y_values[-1], path.values[-1])

    @pytest.mark.solver
    @pytest.mark.unit
    def test_linear_drift_on_zero_path(self, linear_drift):
        grid = TimeGrid.uniform(1.0, 4096)
        curve = solve_frozen(linear_drift, zero_path(grid), 0.0, [1.0], tol=1e-8)
        assert curve.y_values[-1, 0] == pytest.approx(math.e, abs=1e-6)
        np.testing.assert_allclose(curve.y_values[:, 0], np.exp(grid.times), atol=1e-6)
        assert curve.method == "picard"
        assert curve.residual <= 1e-8

    @pytest.mark.solver
    @pytest.mark.unit
    def test_start_time_after_zero(self, linear_drift):
        grid = TimeGrid.uniform(2.0, 4096)
        curve = solve_frozen(linear_drift, zero_path(grid), 1.0, [1.0], tol=1e-8)
        assert curve.value_at(0.5)[0] == 1.0
        assert curve.value_at(2.0)[0] == pytest.approx(math.e, abs=1e-5)

    @pytest.mark.solver
    @pytest.mark.unit
    def test_euler_satisfies_left_point_rule(self, bump_drift, stable_model, small_grid):
        path = sample_path(stable_model, small_grid, seed=4)
        curve = solve_frozen(bump_drift, path, 0.0, [0.1], method="euler")
        assert curve.method == "euler"
        assert curve.residual <= 1e-12

    @pytest.mark.solver
    @pytest.mark.unit
    def test_euler_and_picard_agree_to_first_order(self, linear_drift):
        grid = TimeGrid.uniform(1.0, 1024)
        path = zero_path(grid)
        picard = solve_frozen(linear_drift, path, 0.0, [1.0], tol=1e-10)
        euler = solve_frozen(linear_drift, path, 0.0, [1.0], method="euler")
        gap = float(np.max(np.abs(picard.y_values - euler.y_values)))
        assert 1e-4 < gap < 5.0 * grid.dt

    @pytest.mark.solver
    @pytest.mark.unit
    def test_convergence_error_carries_best_iterate(self, linear_drift, small_grid):
        with pytest.raises(ConvergenceError) as exc_info:
            solve_frozen(linear_drift, zero_path(small_grid), 0.0, [1.0], max_iter=1)
        assert exc_info.value.best_iterate is not None
        assert exc_info.value.best_iterate.shape == (129, 1)
        assert exc_info.value.defect > 0.0

    @pytest.mark.solver
    @pytest.mark.unit
    def test_start_outside_horizon(self, zero_drift, small_grid):
        with pytest.raises(DomainError):
            solve_frozen(zero_drift, zero_path(small_grid), 1.5, [0.0])

    @pytest.mark.solver
    @pytest.mark.unit
    def test_unknown_method(self, zero_drift, small_grid):
        with pytest.raises(ParameterError):
            solve_frozen(zero_drift, zero_path(small_grid), 0.0, [0.0], method="rk4")

    @pytest.mark.solver
    @pytest.mark.unit
    def test_dimension_mismatch(self, zero_drift, small_grid):
        with pytest.raises(ParameterError):
            solve_frozen(zero_drift, zero_path(small_grid, dim=2), 0.0, [0.0, 0.0])


class TestBatchSolve:
    @pytest.mark.solver
    @pytest.mark.unit
    def test_batch_matches_single_solves(self, bump_drift, stable_model, small_grid):
        paths = sample_paths(stable_model, small_grid, seed=5, n_paths=3)
        starts = np.array([[-0.5], [0.0], [0.5]])
        batch = solve_frozen_batch(bump_drift, paths, 0.2, starts, tol=1e-9)
        assert batch.y_values.shape == (3, 3, len(batch.nodes), 1)
        assert batch.converged.all()
        single = solve_frozen(bump_drift, paths[1], 0.2, [0.5], tol=1e-9)
        np.testing.assert_allclose(batch.y_values[1, 2], single.y_values, atol=1e-8)

    @pytest.mark.solver
    @pytest.mark.unit
    def test_batch_reports_nonconverged_members(self, linear_drift, small_grid):
        batch = solve_frozen_batch(linear_drift, zero_path(small_grid), 0.0, [[0.0], [1.0]], max_iter=2)
        # the zero start is a fixed point from the first iterate
        assert batch.converged[0, 0]
        assert not batch.converged[0, 1]


class TestFlow:
    """The flow φ(s, t, x) and its composition property."""

    @pytest.mark.solver
    @pytest.mark.unit
    def test_flow_before_start_is_identity(self, bump_drift, stable_model, small_grid):
        path = sample_path(stable_model, small_grid, seed=7)
        np.testing.assert_array_equal(flow(bump_drift, path, 0.6, 0.3, [0.4]), [0.4])
        np.testing.assert_array_equal(flow(bump_drift, path, 0.6, 0.6, [0.4]), [0.4])

    @pytest.mark.solver
    @pytest.mark.unit
    def test_flow_off_grid_time(self, bump_drift, stable_model, small_grid):
        path = sample_path(stable_model, small_grid, seed=7)
        value = flow(bump_drift, path, 0.0, 0.3333, [0.4], tol=1e-9)
        assert value.shape == (1,)
        assert np.isfinite(value).all()

    @pytest.mark.solver
    @pytest.mark.unit
    def test_flow_outside_horizon(self, bump_drift, small_grid):
        with pytest.raises(DomainError):
            flow(bump_drift, zero_path(small_grid), 0.0, 2.0, [0.0])

    @pytest.mark.solver
    @pytest.mark.unit
    @pytest.mark.parametrize("drift_name", ["bump_drift", "holder_drift"])
    def test_composition_residual_small(self, request, drift_name, stable_model):
        drift = request.getfixturevalue(drift_name)
        grid = TimeGrid.uniform(1.0, 256)
        path = sample_path(stable_model, grid, seed=8)
        residual = flow_composition_residual(drift, path, 0.1, 0.45, 0.9, [0.3], tol=1e-6)
        assert residual <= 10.0 * (1e-6 + grid.dt)

    @pytest.mark.solver
    @pytest.mark.unit
    def test_composition_needs_ordered_times(self, bump_drift, small_grid):
        with pytest.raises(DomainError):
            flow_composition_residual(bump_drift, zero_path(small_grid), 0.5, 0.2, 0.9, [0.0])
