import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.control import (
    BridgeValueFunction,
    CallableValueFunction,
    ControlDriftMode,
    LQInstance,
    ModulatedValueFunction,
    ShiftedValueFunction,
    StyleValueFunction,
    bridge_controller,
    control_time_to_step,
    feature_pseudoinverse,
    hjb_residual,
    measure_convergence_slope,
    modulated_costate_solution,
    modulated_solution,
    shooting_bvp_solve,
    simulate_controlled,
    simulate_ensemble,
    solve_terminal_state_prop2,
    step_to_control_time,
    style_controller,
    style_costate_solution,
)
from src.errors import AbortedTrajectoryError, InvalidArgumentError, SingularTimeError
from src.features.terminal_cost import INFINITE_GAMMA


def scalar_modulated() -> LQInstance:
    return LQInstance(extractor_matrix=[[1.0]], target=[0.0], initial_state=[1.0], gamma=1.0,
                      drift_mode=ControlDriftMode.STATE_PLUS_CONTROL)


class TestClock:
    def test_conversion_round_trip(self):
        for step in range(0, 51):
            assert control_time_to_step(step_to_control_time(step, 50), 50) == step

    def test_endpoints(self):
        assert step_to_control_time(50, 50) == 0.0
        assert step_to_control_time(0, 50) == 1.0

    def test_off_grid_time(self):
        with pytest.raises(InvalidArgumentError):
            control_time_to_step(0.013, 50)


class TestBridge:
    def test_infinite_gamma_formula(self):
        u = bridge_controller(np.array([1.0, -1.0]), 0.5, np.zeros(2), INFINITE_GAMMA)
        assert_allclose(u, [-2.0, 2.0])

    def test_finite_gamma_approaches_limit(self):
        x, x1 = np.array([0.3]), np.array([1.0])
        limit = bridge_controller(x, 0.2, x1, INFINITE_GAMMA)
        assert_allclose(bridge_controller(x, 0.2, x1, 1e9), limit, rtol=1e-8)

    def test_singular_at_one(self):
        with pytest.raises(SingularTimeError):
            bridge_controller(np.zeros(2), 1.0, np.ones(2), INFINITE_GAMMA)

    @pytest.mark.parametrize("gamma", [0.0, -1.0, float("inf"), float("nan")])
    def test_bad_gamma(self, gamma):
        with pytest.raises(InvalidArgumentError):
            bridge_controller(np.zeros(2), 0.0, np.ones(2), gamma)

    def test_terminal_error_is_first_order(self):
        x0, x1 = np.array([1.0, -1.0]), np.zeros(2)
        errors = []
        for dt in (1e-2, 1e-3):
            trajectory = simulate_controlled(lambda x, t: bridge_controller(x, t, x1, INFINITE_GAMMA), x0, 0.0, dt)
            errors.append(float(np.linalg.norm(trajectory.final_state - x1)))
        assert errors[1] < 1e-2
        assert measure_convergence_slope([1e-2, 1e-3], errors) == pytest.approx(1.0, abs=0.15)


class TestStyleController:
    def test_identity_extractor_is_bridge(self):
        x, target = np.array([0.4, -0.2]), np.array([1.0, 2.0])
        for gamma in (INFINITE_GAMMA, 2.5):
            assert_allclose(style_controller(x, 0.3, np.eye(2), target, gamma),
                            bridge_controller(x, 0.3, target, gamma), atol=1e-12)

    def test_wide_extractor_uses_pseudoinverse(self):
        A = np.array([[1.0, 2.0]])
        assert_allclose(feature_pseudoinverse(A), A.T / 5.0, atol=1e-15)
        u = style_controller(np.zeros(2), 0.0, A, [5.0], INFINITE_GAMMA)
        assert_allclose(A @ u, [5.0], atol=1e-12)

    def test_batched_states(self):
        A, y1 = np.array([[1.0, 0.5], [0.0, 2.0]]), np.array([1.0, -1.0])
        xs = np.random.default_rng(0).normal(size=(6, 2))
        batched = style_controller(xs, 0.25, A, y1, 3.0)
        for row, x in zip(batched, xs):
            assert_allclose(row, style_controller(x, 0.25, A, y1, 3.0), rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            style_controller(np.zeros(3), 0.0, np.eye(2), np.zeros(2), 1.0)

    def test_closed_form_matches_shooting(self):
        instance = LQInstance(extractor_matrix=[[1.0, 0.5], [0.0, 2.0]], target=[1.0, -1.0],
                              initial_state=[0.5, 0.2], gamma=5.0)
        oracle = shooting_bvp_solve(instance, grid_points=50)
        closed = style_costate_solution(instance)
        states, costates = closed.sample(oracle.times)
        assert_allclose(states, oracle.states, atol=1e-8)
        assert_allclose(costates, oracle.costates, atol=1e-8)
        assert_allclose(closed.control(0.3), -costates[0], atol=1e-8)

    def test_costate_solution_needs_finite_gamma(self):
        instance = LQInstance(extractor_matrix=[[1.0]], target=[0.0], initial_state=[1.0], gamma=INFINITE_GAMMA)
        with pytest.raises(InvalidArgumentError):
            style_costate_solution(instance)


class TestModulated:
    def test_scalar_terminal_state(self):
        assert solve_terminal_state_prop2(scalar_modulated())[0] == pytest.approx(1.0 / math.cosh(1.0), abs=1e-12)

    def test_solution_starts_at_initial_state(self):
        instance = LQInstance(extractor_matrix=[[1.0, 0.3], [-0.2, 0.8]], target=[0.5, -0.25],
                              initial_state=[1.0, -0.5], gamma=2.0, drift_mode="state-plus-control")
        start = modulated_solution(instance, 0.0)
        end = modulated_solution(instance, 1.0)
        assert_allclose(start.state, instance.initial_state, atol=1e-12)
        assert_allclose(end.state, solve_terminal_state_prop2(instance), atol=1e-12)
        assert_allclose(end.control, -end.costate)

    def test_matches_shooting(self):
        instance = scalar_modulated()
        oracle = shooting_bvp_solve(instance, grid_points=40)
        states, costates = modulated_costate_solution(instance).sample(oracle.times)
        assert_allclose(states, oracle.states, rtol=1e-6, atol=1e-9)
        assert_allclose(costates, oracle.costates, rtol=1e-6, atol=1e-9)

    def test_pinned_to_zero_start(self):
        with pytest.raises(InvalidArgumentError):
            solve_terminal_state_prop2(scalar_modulated().replace(initial_time=0.2))

    def test_shooting_handles_late_start(self):
        late = scalar_modulated().replace(initial_time=0.5)
        solution = shooting_bvp_solve(late)
        x1, p1 = solution.terminal_state, solution.costates[-1]
        assert_allclose(p1, late.gamma * (x1 - late.target), atol=1e-8)

    def test_requires_state_plus_control(self):
        with pytest.raises(InvalidArgumentError):
            solve_terminal_state_prop2(scalar_modulated().replace(drift_mode=ControlDriftMode.PURE_CONTROL))


class TestInstance:
    def test_shape_validation(self):
        with pytest.raises(InvalidArgumentError):
            LQInstance(extractor_matrix=[[1.0, 0.0]], target=[0.0, 1.0], initial_state=[0.0, 0.0])

    def test_start_time_before_one(self):
        with pytest.raises(InvalidArgumentError):
            LQInstance(extractor_matrix=[[1.0]], target=[0.0], initial_state=[0.0], initial_time=1.0)


class TestHJB:
    @pytest.mark.parametrize("t", [0.0, 0.4, 0.9])
    def test_bridge_value_solves_hjb(self, t):
        value = BridgeValueFunction([0.5, -0.25])
        assert abs(hjb_residual(value, np.array([1.2, 0.3]), t)) < 1e-10

    def test_perturbed_value_has_unit_residual(self):
        value = ShiftedValueFunction(BridgeValueFunction([0.5, -0.25]), rate=1.0)
        assert hjb_residual(value, np.array([-0.7, 1.1]), 0.3) == pytest.approx(1.0, abs=1e-10)

    def test_finite_gamma_values(self):
        A, y1 = np.array([[1.0, 0.5]]), np.array([0.75])
        x = np.array([0.3, -1.2])
        assert abs(hjb_residual(StyleValueFunction(A, y1, 4.0), x, 0.6)) < 1e-10
        residual = hjb_residual(ModulatedValueFunction(A, y1, 4.0), x, 0.6, ControlDriftMode.STATE_PLUS_CONTROL)
        assert abs(residual) < 1e-10

    def test_finite_difference_fallback(self):
        # V = ||x||^2 / 2 + t has dV/dt - 1/2 ||grad V||^2 = 1 - ||x||^2 / 2
        value = CallableValueFunction(lambda x, t: 0.5 * float(x @ x) + t)
        x = np.array([1.0, 0.5])
        assert hjb_residual(value, x, 0.2) == pytest.approx(1.0 - 0.5 * float(x @ x), abs=1e-6)


class TestSimulation:
    def test_grid_stops_before_one(self):
        trajectory = simulate_controlled(lambda x, t: np.zeros_like(x), np.ones(2), 0.0, 0.1)
        assert len(trajectory) == 10
        assert trajectory.times[0] == 10 and trajectory.times[-1] == 1
        assert trajectory.clock[-1] == pytest.approx(0.9)

    def test_transient_cost(self):
        trajectory = simulate_controlled(lambda x, t: np.ones_like(x), np.zeros(2), 0.0, 0.25)
        assert trajectory.costs == pytest.approx([0.25, 0.25, 0.25])

    def test_state_costs(self):
        trajectory = simulate_controlled(lambda x, t: np.ones_like(x), np.zeros(1), 0.0, 0.5,
                                         cost=lambda x: float(x[0]))
        assert trajectory.costs == pytest.approx([0.0, 0.5])

    def test_divergence_aborts_with_partial(self):
        with pytest.raises(AbortedTrajectoryError) as info:
            simulate_controlled(lambda x, t: np.full_like(x, np.inf) if t > 0.25 else np.ones_like(x),
                                np.zeros(1), 0.0, 0.1)
        assert len(info.value.partial.states) >= 2

    def test_ensemble_mean_follows_deterministic_path(self):
        controller = lambda x, t: bridge_controller(x, t, np.zeros(2), INFINITE_GAMMA)  # noqa: E731
        finals = simulate_ensemble(controller, np.array([1.0, -1.0]), 0.0, 1e-2, 4000, np.random.default_rng(5))
        deterministic = simulate_controlled(controller, np.array([1.0, -1.0]), 0.0, 1e-2).final_state
        standard_error = finals.std(axis=0, ddof=1) / math.sqrt(4000)
        assert np.all(np.abs(finals.mean(axis=0) - deterministic) < 5 * standard_error)

    def test_slope_of_power_law(self):
        parameters = [1.0, 10.0, 100.0]
        assert measure_convergence_slope(parameters, [p ** -2 for p in parameters]) == pytest.approx(-2.0)
        with pytest.raises(InvalidArgumentError):
            measure_convergence_slope([1.0, 2.0], [0.0, 1.0])
