import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from src.control.types import ControlDriftMode
from src.custom_logging import logger
from src.diffusion.types import Trajectory
from src.errors import AbortedTrajectoryError, InvalidArgumentError

Controller = Callable[[np.ndarray, float], np.ndarray]


def _control_grid(t0: float, dt: float) -> tuple[int, int]:
    """(total grid intervals to t = 1, steps actually taken), stopping at 1 - dt."""
    if dt <= 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    if not t0 < 1.0:
        raise InvalidArgumentError(f"t0 must be < 1, got {t0}")
    total = int(math.floor((1.0 - t0) / dt + 1e-9))
    return total, max(total - 1, 0)


def simulate_controlled(controller: Controller, x0, t0: float, dt: float,
                        noise: Optional[np.random.Generator] = None,
                        drift_mode: ControlDriftMode | str = ControlDriftMode.PURE_CONTROL,
                        cost: Optional[Callable[[np.ndarray], float]] = None,
                        seed: Optional[int] = None) -> Trajectory:
    """
    Euler(-Maruyama) integration of dX = (v + u) dt (+ dW) on t0 + i dt.

    The run stops at 1 - dt, so 1/(1 - t) controllers are never evaluated at
    the singularity. Time indices count the grid intervals left before t = 1.
    costs hold `cost(state)` for every state when a cost is given, otherwise
    the transient cost 1/2 ||u||^2 dt of every step.
    """
    drift_mode = ControlDriftMode(drift_mode)
    total, steps = _control_grid(t0, dt)
    x = np.array(x0, dtype=np.float64, copy=True).reshape(-1)
    trajectory = Trajectory(states=[x.copy()], times=[total], clock=[t0], seed=seed)
    if cost is not None:
        trajectory.costs.append(float(cost(x)))

    for i in range(steps):
        t = t0 + i * dt
        u = np.asarray(controller(x, t), dtype=np.float64)
        drift = u + x if drift_mode is ControlDriftMode.STATE_PLUS_CONTROL else u
        x_next = x + drift * dt
        if noise is not None:
            x_next = x_next + math.sqrt(dt) * noise.standard_normal(x.shape)

        if not np.all(np.isfinite(x_next)):
            logger.error(f"Controlled trajectory left the finite range at step {i} (t={t:.6g})")
            raise AbortedTrajectoryError("controlled trajectory produced a non-finite state", step=i,
                                         last_state=x, partial=trajectory)

        x = x_next
        trajectory.controls.append(u.copy())
        trajectory.states.append(x.copy())
        trajectory.times.append(total - i - 1)
        trajectory.clock.append(t0 + (i + 1) * dt)
        if cost is not None:
            trajectory.costs.append(float(cost(x)))
        else:
            trajectory.costs.append(0.5 * float(u @ u) * dt)

    return trajectory.validate()


def simulate_ensemble(controller: Controller, x0, t0: float, dt: float, num_paths: int,
                      rng: np.random.Generator,
                      drift_mode: ControlDriftMode | str = ControlDriftMode.PURE_CONTROL) -> np.ndarray:
    """
    Vectorised Euler-Maruyama over num_paths Brownian paths; returns the
    (num_paths, d) states at 1 - dt. The controller must accept batched x.
    """
    if num_paths < 1:
        raise InvalidArgumentError("num_paths must be >= 1")
    drift_mode = ControlDriftMode(drift_mode)
    _, steps = _control_grid(t0, dt)
    x = np.tile(np.asarray(x0, dtype=np.float64).reshape(1, -1), (num_paths, 1))
    root_dt = math.sqrt(dt)

    for i in range(steps):
        t = t0 + i * dt
        u = np.asarray(controller(x, t), dtype=np.float64)
        drift = u + x if drift_mode is ControlDriftMode.STATE_PLUS_CONTROL else u
        x = x + drift * dt + root_dt * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise AbortedTrajectoryError("ensemble produced a non-finite state", step=i, last_state=x)
    return x


def measure_convergence_slope(parameters: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(parameter)."""
    parameters = np.asarray(parameters, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if parameters.shape != errors.shape or parameters.size < 2:
        raise InvalidArgumentError("need at least two (parameter, error) pairs")
    if np.any(parameters <= 0) or np.any(errors <= 0):
        raise InvalidArgumentError("log-log fit needs strictly positive parameters and errors")
    return float(stats.linregress(np.log(parameters), np.log(errors)).slope)
