"""
Reference-guided reverse sampling.

Both samplers walk the DDIM chain from t = T down to 1. The gradient sampler
optimises a state control u through the posterior-mean estimate at every
step; the proximal sampler computes the posterior mean once per step and
corrects it with a proximal solve, so it never differentiates the score.
"""

import math
from typing import Callable, Hashable, Optional

import numpy as np

from src.config import settings
from src.custom_logging import logger
from src.diffusion.sampling import ddim_step, tweedie_posterior_mean
from src.diffusion.score_models import ScoreModel
from src.diffusion.types import NoiseSchedule, Trajectory
from src.errors import InvalidArgumentError, NumericalFailureError
from src.features.terminal_cost import TerminalCost, terminal_cost, terminal_cost_grad
from src.sampler.types import ControlVariable, GradientMode, ProxInit, SamplerConfig

StepCallback = Callable[[int, str, dict], None]


class ModulatedSampler:
    def __init__(self, score: ScoreModel, cost: TerminalCost, schedule: NoiseSchedule, config: SamplerConfig,
                 context: Optional[Hashable] = None, step_callback: Optional[StepCallback] = None):
        """
        Args:
            score: Score model evaluated at continuous time t/T.
            cost: Terminal cost whose reference features steer the run.
            schedule: DDIM schedule; must have config.num_steps steps.
            config: Sampler parameters.
            context: Opaque conditioning tag handed to the score model.
            step_callback: Optional callable accepting (step, event_type, data).
        """
        if schedule.num_steps != config.num_steps:
            raise InvalidArgumentError(
                f"schedule has {schedule.num_steps} steps but the config asks for {config.num_steps}"
            )
        if cost.input_dim != score.dimension:
            raise InvalidArgumentError(
                f"cost acts on dimension {cost.input_dim}, score model on {score.dimension}"
            )
        self.score = score
        self.cost = cost
        self.schedule = schedule
        self.config = config
        self.context = context
        self.step_callback = step_callback

        self.gradient_mode = config.gradient_mode
        if self.gradient_mode is GradientMode.ANALYTIC and not score.is_analytic:
            logger.warning(f"{score.name} has no analytic Jacobian; using finite differences for the control gradient")
            self.gradient_mode = GradientMode.FINITE_DIFFERENCE

    @property
    def dimension(self) -> int:
        return self.score.dimension

    def set_step_callback(self, callback: Optional[StepCallback]):
        self.step_callback = callback

    def _notify_callback(self, step: int, event_type: str, data: Optional[dict] = None):
        if self.step_callback:
            try:
                self.step_callback(step, event_type, data or {})
            except Exception as e:
                logger.error(f"Error in step callback: {e}")

    def initial_state(self, seed: Optional[int] = None) -> np.ndarray:
        rng = np.random.default_rng(self.config.seed if seed is None else seed)
        return rng.standard_normal(self.dimension)

    # ------------------------------------------------------------------
    # Inner loops
    # ------------------------------------------------------------------

    def _posterior_mean(self, x: np.ndarray, t: int) -> np.ndarray:
        return tweedie_posterior_mean(x, t, self.score, self.schedule, self.context)

    def _posterior_mean_jacobian(self, x: np.ndarray, t: int) -> np.ndarray:
        """d x0_hat / d x = (I + (1 - abar) J_s) / sqrt(abar)."""
        alpha_bar = self.schedule.at(t)
        score_jacobian = self.score.score_jacobian(x, self.schedule.continuous_time(t), self.context)
        return (np.eye(self.dimension) + (1.0 - alpha_bar) * score_jacobian) / math.sqrt(alpha_bar)

    def _control_cost(self, x_t: np.ndarray, u: np.ndarray, t: int) -> float:
        return terminal_cost(self.cost, self._posterior_mean(x_t + u, t))

    def control_gradient(self, x_t: np.ndarray, u: np.ndarray, t: int) -> np.ndarray:
        """grad_u h(x0_hat(x_t + u))."""
        if self.gradient_mode is GradientMode.ANALYTIC:
            shifted = x_t + u
            x0_hat = self._posterior_mean(shifted, t)
            jacobian = self._posterior_mean_jacobian(shifted, t)
            return jacobian.T @ terminal_cost_grad(self.cost, x0_hat)

        step = settings.SAMPLER_FD_RELATIVE_STEP * float(np.linalg.norm(u)) + settings.SAMPLER_FD_ABSOLUTE_STEP
        gradient = np.empty(self.dimension)
        for i in range(self.dimension):
            offset = np.zeros(self.dimension)
            offset[i] = step
            forward = self._control_cost(x_t, u + offset, t)
            backward = self._control_cost(x_t, u - offset, t)
            gradient[i] = (forward - backward) / (2.0 * step)
        return gradient

    def optimize_control_step(self, x_t: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Exactly M gradient steps on u from zero; returns (u*, x0_hat at x_t + u*)."""
        if self.schedule.at(t) <= 0.0:
            raise InvalidArgumentError(f"alpha_bar at t={t} must be positive")
        x_t = np.asarray(x_t, dtype=np.float64)
        control = ControlVariable.zero(self.dimension)
        self._notify_callback(t, "controller-reset", {"norm": control.norm})

        for iteration in range(self.config.opt_steps):
            gradient = self.control_gradient(x_t, control.u, t)
            if not np.all(np.isfinite(gradient)):
                logger.error(f"Control gradient is not finite at step {t}, iteration {iteration}")
                raise NumericalFailureError("control gradient is not finite", iteration=iteration, last_state=x_t)
            control = control.descend(gradient, self.config.stepsize)
            self._notify_callback(t, "inner-iteration", {
                "iteration": iteration,
                "gradient_norm": float(np.linalg.norm(gradient)),
                "control_norm": control.norm,
            })

        x0_hat = self._posterior_mean(x_t + control.u, t)
        return np.array(control.u), x0_hat

    def proximal_x0_solve(self, x0_bar: np.ndarray) -> np.ndarray:
        return proximal_x0_solve(x0_bar, self.cost, self.config)

    # ------------------------------------------------------------------
    # Outer loops
    # ------------------------------------------------------------------

    def _start(self, x_start: Optional[np.ndarray], seed: Optional[int]) -> tuple[np.ndarray, Trajectory]:
        run_seed = self.config.seed if seed is None else seed
        x = self.initial_state(run_seed) if x_start is None else np.array(x_start, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dimension:
            raise InvalidArgumentError(f"start state has dimension {x.shape[0]}, expected {self.dimension}")
        trajectory = Trajectory(states=[x.copy()], times=[self.schedule.num_steps], seed=run_seed)
        return x, trajectory

    def _advance(self, trajectory: Trajectory, x_t: np.ndarray, x0_hat: np.ndarray, control: np.ndarray,
                 t: int) -> np.ndarray:
        step_cost = terminal_cost(self.cost, x0_hat)
        x_prev = ddim_step(x_t, x0_hat, t, t - 1, self.schedule).values
        trajectory.controls.append(np.array(control))
        trajectory.costs.append(step_cost)
        trajectory.states.append(np.array(x_prev))
        trajectory.times.append(t - 1)
        self._notify_callback(t, "step-completed", {"cost": step_cost})
        return np.array(x_prev)

    def _finish(self, trajectory: Trajectory) -> Trajectory:
        trajectory.costs.append(terminal_cost(self.cost, trajectory.final_state))
        return trajectory.validate()

    def run_algorithm1(self, x_start: Optional[np.ndarray] = None, seed: Optional[int] = None) -> Trajectory:
        """Gradient-through-the-posterior-mean sampler; M = 0 is plain DDIM."""
        x, trajectory = self._start(x_start, seed)
        for t in range(self.schedule.num_steps, 0, -1):
            self._notify_callback(t, "step-started", {"algorithm": 1})
            try:
                control, x0_hat = self.optimize_control_step(x, t)
                x = self._advance(trajectory, x + control, x0_hat, control, t)
            except NumericalFailureError as exc:
                self._notify_callback(t, "failed", {"error": str(exc)})
                raise exc.with_step(t) from exc
        return self._finish(trajectory)

    def run_algorithm2(self, x_start: Optional[np.ndarray] = None, seed: Optional[int] = None) -> Trajectory:
        """
        Proximal sampler. The recorded control is the correction x0* - x0_bar
        applied to the posterior mean.
        """
        self.config.require_proximal_strength()
        x, trajectory = self._start(x_start, seed)
        for t in range(self.schedule.num_steps, 0, -1):
            self._notify_callback(t, "step-started", {"algorithm": 2})
            try:
                x0_bar = self._posterior_mean(x, t)
                x0 = self.proximal_x0_solve(x0_bar)
                x = self._advance(trajectory, x, x0, x0 - x0_bar, t)
            except NumericalFailureError as exc:
                self._notify_callback(t, "failed", {"error": str(exc)})
                raise exc.with_step(t) from exc
        return self._finish(trajectory)

    def run_uncontrolled(self, x_start: Optional[np.ndarray] = None, seed: Optional[int] = None) -> Trajectory:
        """Plain DDIM in the same record format (zero controls)."""
        x, trajectory = self._start(x_start, seed)
        zero = np.zeros(self.dimension)
        for t in range(self.schedule.num_steps, 0, -1):
            try:
                x = self._advance(trajectory, x, self._posterior_mean(x, t), zero, t)
            except NumericalFailureError as exc:
                raise exc.with_step(t) from exc
        return self._finish(trajectory)


def optimize_control_step(x_t, t: int, score: ScoreModel, cost: TerminalCost, config: SamplerConfig,
                          schedule: NoiseSchedule) -> tuple[np.ndarray, np.ndarray]:
    return ModulatedSampler(score, cost, schedule, config).optimize_control_step(np.asarray(x_t, dtype=np.float64), t)


def proximal_x0_solve(x0_bar, cost: TerminalCost, config: SamplerConfig) -> np.ndarray:
    """
    M proximal-gradient steps on ||ref - Psi(x0)||^2 + lambda ||x0 - x0_bar||^2:
    x0 <- (x0 - eta grad f(x0) + 2 eta lambda x0_bar) / (1 + 2 eta lambda).

    The fixed point is the exact minimiser; lambda -> infinity returns x0_bar.
    """
    strength = config.require_proximal_strength()
    eta = config.stepsize
    x0_bar = np.asarray(x0_bar, dtype=np.float64)
    x0 = x0_bar.copy() if config.prox_init is ProxInit.POSTERIOR_MEAN else np.zeros_like(x0_bar)

    shrink = 1.0 + 2.0 * eta * strength
    for iteration in range(config.opt_steps):
        x0 = (x0 - eta * terminal_cost_grad(cost, x0) + 2.0 * eta * strength * x0_bar) / shrink
        if not np.all(np.isfinite(x0)):
            logger.error(f"Proximal iterate diverged at iteration {iteration}")
            raise NumericalFailureError("proximal iterate is not finite", iteration=iteration, last_state=x0_bar)
    return x0


def run_algorithm1(config: SamplerConfig, score: ScoreModel, cost: TerminalCost, schedule: NoiseSchedule,
                   x_start: Optional[np.ndarray] = None) -> Trajectory:
    return ModulatedSampler(score, cost, schedule, config).run_algorithm1(x_start)


def run_algorithm2(config: SamplerConfig, score: ScoreModel, cost: TerminalCost, schedule: NoiseSchedule,
                   x_start: Optional[np.ndarray] = None) -> Trajectory:
    return ModulatedSampler(score, cost, schedule, config).run_algorithm2(x_start)


def run_uncontrolled(config: SamplerConfig, score: ScoreModel, cost: TerminalCost, schedule: NoiseSchedule,
                     x_start: Optional[np.ndarray] = None) -> Trajectory:
    return ModulatedSampler(score, cost, schedule, config).run_uncontrolled(x_start)
