import math
from typing import List

import numpy as np

from src.control.controllers import (
    bridge_controller,
    modulated_costate_solution,
    solve_terminal_state_prop2,
    style_controller,
    style_costate_solution,
)
from src.control.hjb import (
    BridgeValueFunction,
    ModulatedValueFunction,
    ShiftedValueFunction,
    StyleValueFunction,
    hjb_residual,
)
from src.control.shooting import shooting_bvp_solve
from src.control.simulation import measure_convergence_slope, simulate_controlled, simulate_ensemble
from src.control.types import CallableValueFunction, ControlDriftMode, CostateSolution, LQInstance
from src.experiments.base_suite import SuiteContext, VerificationSuite
from src.experiments.report import InvariantCheck
from src.features.terminal_cost import INFINITE_GAMMA

DT_SWEEP = (1e-2, 1e-3, 1e-4)
GAMMA_SWEEP = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)


def trajectory_deviation(reference: CostateSolution, candidate: CostateSolution, times) -> float:
    """Max pointwise state/costate gap, relative to the reference's sup norm."""
    ref_states, ref_costates = reference.sample(times)
    states, costates = candidate.sample(times)
    scale = max(1.0, float(np.max(np.abs(ref_states))), float(np.max(np.abs(ref_costates))))
    gap = max(float(np.max(np.abs(states - ref_states))), float(np.max(np.abs(costates - ref_costates))))
    return gap / scale


class BridgeSuite(VerificationSuite):
    @property
    def name(self) -> str:
        return "bridge"

    @property
    def description(self) -> str:
        return "Bridge controller: terminal error, O(dt) convergence, certainty equivalence under Brownian noise."

    def checks(self) -> List:
        return [self._terminal_error, self._dt_slope, self._certainty_equivalence]

    @staticmethod
    def _endpoints(context: SuiteContext):
        x0 = np.asarray(context.param("x0", [1.0, -1.0]), dtype=np.float64)
        x1 = np.asarray(context.param("x1", [0.0, 0.0]), dtype=np.float64)
        return x0, x1, float(context.param("t0", 0.0))

    def _terminal_error(self, context: SuiteContext):
        x0, x1, t0 = self._endpoints(context)
        dt = float(context.param("dt", 1e-3))
        trajectory = simulate_controlled(lambda x, t: bridge_controller(x, t, x1, INFINITE_GAMMA), x0, t0, dt)
        error = float(np.linalg.norm(trajectory.final_state - x1))
        return [InvariantCheck.at_most("bridge.terminal_error", error, 1e-2, detail=f"dt={dt:g}")]

    def _dt_slope(self, context: SuiteContext):
        x0, x1, t0 = self._endpoints(context)
        errors = []
        for dt in DT_SWEEP:
            trajectory = simulate_controlled(lambda x, t: bridge_controller(x, t, x1, INFINITE_GAMMA), x0, t0, dt)
            errors.append(float(np.linalg.norm(trajectory.final_state - x1)))
        slope = measure_convergence_slope(DT_SWEEP, errors)
        return [InvariantCheck.within("bridge.dt_convergence_slope", slope, 1.0, 0.15)]

    def _certainty_equivalence(self, context: SuiteContext):
        x0, x1, t0 = self._endpoints(context)
        dt, num_paths = 1e-3, 10_000
        controller = lambda x, t: bridge_controller(x, t, x1, INFINITE_GAMMA)  # noqa: E731
        deterministic = simulate_controlled(controller, x0, t0, dt).final_state
        finals = simulate_ensemble(controller, x0, t0, dt, num_paths, np.random.default_rng(context.seed))
        standard_error = finals.std(axis=0, ddof=1) / math.sqrt(num_paths)
        z_score = float(np.max(np.abs(finals.mean(axis=0) - deterministic) / standard_error))
        return [InvariantCheck.at_most("bridge.certainty_equivalence_z", z_score, 3.0,
                                       detail="Monte-Carlo mean vs deterministic endpoint")]


class StyleLQSuite(VerificationSuite):
    @property
    def name(self) -> str:
        return "style-lq"

    @property
    def description(self) -> str:
        return "Linear style controller: bridge reduction, gamma limit, shooting agreement, wide-A pseudoinverse path."

    def checks(self) -> List:
        return [self._identity_reduction, self._gamma_slope, self._shooting_agreement, self._wide_extractor]

    def _identity_reduction(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed)
        worst = 0.0
        for gamma in (INFINITE_GAMMA, 3.0):
            for _ in range(100):
                x, target = rng.normal(size=2), rng.normal(size=2)
                t = float(rng.uniform(0.0, 0.95))
                gap = style_controller(x, t, np.eye(2), target, gamma) - bridge_controller(x, t, target, gamma)
                worst = max(worst, float(np.max(np.abs(gap))))
        return [InvariantCheck.at_most("style-lq.identity_reduces_to_bridge", worst, 1e-12)]

    def _gamma_slope(self, context: SuiteContext):
        A, y1 = np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([1.0, 2.0])
        x, t = np.array([0.3, -0.4]), 0.0
        limit = style_controller(x, t, A, y1, INFINITE_GAMMA)
        errors = [float(np.linalg.norm(style_controller(x, t, A, y1, gamma) - limit)) for gamma in GAMMA_SWEEP]
        slope = measure_convergence_slope(GAMMA_SWEEP, errors)
        return [InvariantCheck.within("style-lq.gamma_convergence_slope", slope, -1.0, 0.1)]

    def _shooting_agreement(self, context: SuiteContext):
        instance = LQInstance(extractor_matrix=[[1.0, 0.5], [0.0, 2.0]], target=[1.0, -1.0], initial_state=[0.5, 0.2],
                              initial_time=0.0, gamma=5.0, drift_mode=ControlDriftMode.PURE_CONTROL)
        oracle = shooting_bvp_solve(instance, grid_points=100)
        closed_form = style_costate_solution(instance)
        deviation = trajectory_deviation(oracle, closed_form, oracle.times)
        drift = float(np.max(np.abs(oracle.costates - oracle.costates[0])))
        return [
            InvariantCheck.at_most("style-lq.shooting_agreement", deviation, 1e-6),
            InvariantCheck.at_most("style-lq.costate_constancy", drift, 1e-8),
        ]

    def _wide_extractor(self, context: SuiteContext):
        A = np.array([[1.0, -0.5, 2.0, 0.25]])
        y1 = np.array([1.5])
        x0 = np.array([0.2, 0.4, -0.3, 1.0])
        trajectory = simulate_controlled(lambda x, t: style_controller(x, t, A, y1, INFINITE_GAMMA), x0, 0.0, 1e-3)
        residual = float(np.linalg.norm(A @ trajectory.final_state - y1))
        return [InvariantCheck.at_most("style-lq.wide_extractor_terminal", residual, 1e-2)]


class ModulatedSuite(VerificationSuite):
    @property
    def name(self) -> str:
        return "prop2"

    @property
    def description(self) -> str:
        return "Drift-modulated closed form against the shooting oracle, scalar and two-dimensional."

    def checks(self) -> List:
        return [self._scalar_terminal, self._scalar_trajectory, self._planar_trajectory]

    @staticmethod
    def _scalar_instance() -> LQInstance:
        return LQInstance(extractor_matrix=[[1.0]], target=[0.0], initial_state=[1.0], gamma=1.0,
                          drift_mode=ControlDriftMode.STATE_PLUS_CONTROL)

    def _scalar_terminal(self, context: SuiteContext):
        instance = self._scalar_instance()
        closed_form = float(solve_terminal_state_prop2(instance)[0])
        oracle = float(shooting_bvp_solve(instance).terminal_state[0])
        return [
            InvariantCheck.within("prop2.scalar_terminal_vs_shooting", closed_form, oracle, 1e-6 * abs(oracle)),
            InvariantCheck.within("prop2.scalar_terminal_sech1", closed_form, 1.0 / math.cosh(1.0), 1e-12),
        ]

    def _scalar_trajectory(self, context: SuiteContext):
        instance = self._scalar_instance()
        oracle = shooting_bvp_solve(instance, grid_points=100)
        deviation = trajectory_deviation(oracle, modulated_costate_solution(instance), oracle.times)
        return [InvariantCheck.at_most("prop2.scalar_trajectory", deviation, 1e-6)]

    def _planar_trajectory(self, context: SuiteContext):
        instance = LQInstance(extractor_matrix=[[1.0, 0.3], [-0.2, 0.8]], target=[0.5, -0.25],
                              initial_state=[1.0, -0.5], gamma=2.0, drift_mode=ControlDriftMode.STATE_PLUS_CONTROL)
        oracle = shooting_bvp_solve(instance, grid_points=100)
        deviation = trajectory_deviation(oracle, modulated_costate_solution(instance), oracle.times)
        return [InvariantCheck.at_most("prop2.planar_trajectory", deviation, 1e-6)]


class HJBSuite(VerificationSuite):
    @property
    def name(self) -> str:
        return "hjb"

    @property
    def description(self) -> str:
        return "HJB residuals of the closed-form value functions and of a perturbed candidate."

    def checks(self) -> List:
        return [self._bridge_grid, self._perturbed, self._constant, self._finite_gamma_values]

    @staticmethod
    def _grid():
        axis = np.linspace(-2.0, 2.0, 20)
        times = np.linspace(0.0, 0.9, 10)
        for t in times:
            for a in axis:
                for b in axis:
                    yield np.array([a, b]), float(t)

    def _bridge_grid(self, context: SuiteContext):
        value = BridgeValueFunction([0.5, -0.25])
        worst = max(abs(hjb_residual(value, x, t)) for x, t in self._grid())
        return [InvariantCheck.at_most("hjb.bridge_residual", worst, 1e-8)]

    def _perturbed(self, context: SuiteContext):
        value = ShiftedValueFunction(BridgeValueFunction([0.5, -0.25]), rate=1.0)
        worst = max(abs(hjb_residual(value, x, t) - 1.0) for x, t in self._grid())
        return [InvariantCheck.at_most("hjb.perturbed_residual_is_one", worst, 1e-8)]

    def _constant(self, context: SuiteContext):
        value = CallableValueFunction(lambda x, t: 3.0, name="constant")
        residual = abs(hjb_residual(value, np.array([0.7, -1.1]), 0.4))
        return [InvariantCheck.at_most("hjb.constant_residual", residual, 1e-12)]

    def _finite_gamma_values(self, context: SuiteContext):
        A, y1 = np.array([[1.0, 0.5]]), np.array([0.75])
        style = StyleValueFunction(A, y1, 4.0)
        modulated = ModulatedValueFunction(A, y1, 4.0)
        worst_style = max(abs(hjb_residual(style, x, t)) for x, t in self._grid())
        worst_modulated = max(
            abs(hjb_residual(modulated, x, t, ControlDriftMode.STATE_PLUS_CONTROL)) for x, t in self._grid()
        )
        return [
            InvariantCheck.at_most("hjb.style_value_residual", worst_style, 1e-8),
            InvariantCheck.at_most("hjb.modulated_value_residual", worst_modulated, 1e-8),
        ]
