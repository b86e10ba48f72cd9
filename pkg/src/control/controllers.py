"""
Closed-form optimal controllers.

Everything here runs on the control clock: t in [t0, 1] flows from noise
towards data and the terminal cost is charged at t = 1. The sampler counts
its steps the other way (T down to 0); step_to_control_time and
control_time_to_step are the only place the two meet.
"""

import math
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from src.config import settings
from src.control.types import ControlDriftMode, CostateSolution, LQInstance
from src.custom_logging import logger
from src.errors import InvalidArgumentError, LinearSolveError, SingularTimeError
from src.features.terminal_cost import GammaWeight, check_gamma, is_infinite


def step_to_control_time(step: int, num_steps: int) -> float:
    """Sampler step index (T..0) -> control clock, t = 1 - step/T."""
    if num_steps < 1 or not 0 <= step <= num_steps:
        raise InvalidArgumentError(f"step {step} outside [0, {num_steps}]")
    return 1.0 - step / num_steps


def control_time_to_step(t: float, num_steps: int) -> int:
    """Inverse of step_to_control_time; t must sit on the sampler grid."""
    if num_steps < 1:
        raise InvalidArgumentError("num_steps must be >= 1")
    position = (1.0 - t) * num_steps
    step = round(position)
    if abs(position - step) > 1e-9 or not 0 <= step <= num_steps:
        raise InvalidArgumentError(f"control time {t} is not on a {num_steps}-step grid")
    return int(step)


def _remaining_time(t: float) -> float:
    if t >= 1.0:
        raise SingularTimeError(f"controller is singular at t={t} (needs t < 1)")
    return 1.0 - t


def bridge_controller(x, t: float, x1, gamma: GammaWeight) -> np.ndarray:
    """
    Steer towards the fixed point x1 by t = 1.

    gamma = INFINITE_GAMMA: (x1 - x) / (1 - t)
    finite gamma:           gamma (x1 - x) / (1 + gamma (1 - t))
    """
    remaining = _remaining_time(t)
    gamma = check_gamma(gamma)
    offset = np.asarray(x1, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    if is_infinite(gamma):
        return offset / remaining
    return gamma * offset / (1.0 + gamma * remaining)


def feature_pseudoinverse(matrix) -> np.ndarray:
    """Moore-Penrose A^+ with the documented relative rank tolerance."""
    return scipy.linalg.pinv(np.atleast_2d(np.asarray(matrix, dtype=np.float64)), rtol=settings.PINV_RANK_TOL)


def _solve_symmetric(system: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve system @ z = rhs for rhs with leading batch axes (..., d)."""
    flat = rhs.reshape(-1, rhs.shape[-1]).T
    try:
        solution = scipy.linalg.solve(system, flat, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise LinearSolveError(f"singular {system.shape[0]}x{system.shape[0]} system: {exc}") from exc
    return solution.T.reshape(rhs.shape)


def style_controller(x, t: float, A, y1, gamma: GammaWeight) -> np.ndarray:
    """
    Optimal control for the linear style cost gamma ||A X_1 - y1||^2 with dX = u dt.

    gamma = INFINITE_GAMMA: A^+ (y1 - A x) / (1 - t)
    finite gamma:           -(I/gamma + A^T A (1 - t))^{-1} (A^T A x - A^T y1)
    """
    remaining = _remaining_time(t)
    gamma = check_gamma(gamma)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    y1 = np.asarray(y1, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != A.shape[1] or y1.shape[0] != A.shape[0]:
        raise InvalidArgumentError(f"A is {A.shape}, x has dimension {x.shape[-1]}, y1 has {y1.shape[0]}")

    feature_residual = x @ A.T - y1
    if is_infinite(gamma):
        return -(feature_residual @ feature_pseudoinverse(A).T) / remaining

    system = np.eye(A.shape[1]) / gamma + remaining * (A.T @ A)
    return -_solve_symmetric(system, feature_residual @ A)


def style_costate_solution(instance: LQInstance) -> CostateSolution:
    """
    Closed-form minimum-principle solution in pure-control mode, finite gamma.

    The costate is constant: p = (I/gamma + A^T A (1 - t0))^{-1} (A^T A x0 - A^T y1),
    and x(t) = x0 - p (t - t0).
    """
    if instance.drift_mode is not ControlDriftMode.PURE_CONTROL:
        raise InvalidArgumentError("style_costate_solution needs drift_mode=pure-control")
    if not instance.has_finite_gamma:
        raise InvalidArgumentError("style_costate_solution needs a finite gamma")
    costate = -style_controller(instance.initial_state, instance.initial_time, instance.extractor_matrix,
                                instance.target, instance.gamma)
    x0 = instance.initial_state
    t0 = instance.initial_time

    def state_fn(t: float) -> np.ndarray:
        return x0 - costate * (t - t0)

    return CostateSolution(
        state_fn=state_fn,
        costate_fn=lambda t: costate.copy(),
        terminal_state=state_fn(1.0),
    )


def _check_modulated(instance: LQInstance) -> None:
    if instance.drift_mode is not ControlDriftMode.STATE_PLUS_CONTROL:
        raise InvalidArgumentError("drift-modulated closed form needs drift_mode=state-plus-control")
    if not instance.has_finite_gamma:
        raise InvalidArgumentError("drift-modulated closed form needs a finite gamma")
    if instance.initial_time != 0.0:
        # The displayed solution x0 e^t only satisfies x(t0) = x0 at t0 = 0.
        raise InvalidArgumentError(
            f"drift-modulated closed form is pinned to t0 = 0 (got {instance.initial_time}); "
            "use shooting_bvp_solve for other start times"
        )


def solve_terminal_state_prop2(instance: LQInstance) -> np.ndarray:
    """
    Terminal state of the drift-modulated problem dX = (X + u) dt.

    x1 appears on both sides of the closed-form trajectory; evaluating it at
    t = 1 gives the linear system
    [I + (gamma/2)(e^2 - 1) A^T A] x1 = e x0 + (gamma/2)(e^2 - 1) A^T y1.
    """
    _check_modulated(instance)
    A = instance.extractor_matrix
    weight = 0.5 * instance.gamma * math.expm1(2.0)
    system = np.eye(instance.dimension) + weight * instance.gram
    rhs = math.e * instance.initial_state + weight * (A.T @ instance.target)
    try:
        return scipy.linalg.solve(system, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        logger.error(f"Terminal-state system is singular for gamma={instance.gamma}")
        raise LinearSolveError(f"terminal-state system is singular: {exc}") from exc


class ModulatedPoint(NamedTuple):
    state: np.ndarray
    costate: np.ndarray
    control: np.ndarray


def modulated_solution(instance: LQInstance, t: float, x1: Optional[np.ndarray] = None) -> ModulatedPoint:
    """
    x_t = x0 e^t - (c/2) e^{1+t} + (c/2) e^{1-t},  p_t = c e^{1-t},  u_t = -p_t
    with c = gamma A^T (A x1 - y1).
    """
    _check_modulated(instance)
    if not instance.initial_time <= t <= 1.0:
        raise InvalidArgumentError(f"t must be in [{instance.initial_time}, 1], got {t}")
    if x1 is None:
        x1 = solve_terminal_state_prop2(instance)
    A = instance.extractor_matrix
    coefficient = instance.gamma * (A.T @ (A @ np.asarray(x1, dtype=np.float64) - instance.target))

    state = (
        instance.initial_state * math.exp(t)
        - 0.5 * coefficient * math.exp(1.0 + t)
        + 0.5 * coefficient * math.exp(1.0 - t)
    )
    costate = coefficient * math.exp(1.0 - t)
    return ModulatedPoint(state=state, costate=costate, control=-costate)


def modulated_costate_solution(instance: LQInstance) -> CostateSolution:
    """The drift-modulated closed form packaged like a shooting solution."""
    x1 = solve_terminal_state_prop2(instance)
    return CostateSolution(
        state_fn=lambda t: modulated_solution(instance, t, x1).state,
        costate_fn=lambda t: modulated_solution(instance, t, x1).costate,
        terminal_state=x1,
    )
