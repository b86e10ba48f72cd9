import numpy as np
from scipy.integrate import solve_ivp

from src.config import settings
from src.control.types import ControlDriftMode, CostateSolution, LQInstance
from src.custom_logging import logger
from src.errors import ConvergenceError, InvalidArgumentError, NumericalFailureError

MAX_BACKTRACKS = 30


def _hamiltonian_rhs(instance: LQInstance):
    d = instance.dimension
    modulated = instance.drift_mode is ControlDriftMode.STATE_PLUS_CONTROL

    def rhs(t, z):
        x, p = z[:d], z[d:]
        if modulated:
            return np.concatenate([x - p, -p])
        return np.concatenate([-p, np.zeros(d)])

    return rhs


def _integrate(instance: LQInstance, p0: np.ndarray, t_eval=None):
    z0 = np.concatenate([instance.initial_state, p0])
    result = solve_ivp(
        _hamiltonian_rhs(instance),
        (instance.initial_time, 1.0),
        z0,
        method="DOP853",
        rtol=settings.SHOOTING_ODE_RTOL,
        atol=settings.SHOOTING_ODE_ATOL,
        t_eval=t_eval,
        dense_output=t_eval is not None,
    )
    if not result.success or not np.all(np.isfinite(result.y)):
        raise NumericalFailureError(f"Hamiltonian integration failed: {result.message}", last_state=z0)
    return result


def _terminal_residual(instance: LQInstance, p0: np.ndarray) -> np.ndarray:
    """p(1)/gamma - A^T (A x(1) - y1); zero when the terminal costate condition holds."""
    d = instance.dimension
    end = _integrate(instance, p0).y[:, -1]
    x1, p1 = end[:d], end[d:]
    A = instance.extractor_matrix
    return p1 / instance.gamma - A.T @ (A @ x1 - instance.target)


def _finite_difference_jacobian(instance: LQInstance, p0: np.ndarray, base: np.ndarray) -> np.ndarray:
    jacobian = np.empty((p0.shape[0], p0.shape[0]))
    for i in range(p0.shape[0]):
        step = 1e-6 * max(1.0, abs(p0[i]))
        shifted = p0.copy()
        shifted[i] += step
        jacobian[:, i] = (_terminal_residual(instance, shifted) - base) / step
    return jacobian


def shooting_bvp_solve(instance: LQInstance, grid_points: int = 100) -> CostateSolution:
    """
    Independent oracle for the closed forms.

    Integrates the Hamiltonian system forward from a guessed p(t0)
    (dx = -p, dp = 0 for pure control; dx = x - p, dp = -p with the state in
    the drift) and drives the terminal condition p(1) = gamma A^T (A x(1) - y1)
    to zero with damped Newton on the guess.
    """
    if not instance.has_finite_gamma:
        raise InvalidArgumentError("shooting needs a finite gamma")
    if grid_points < 2:
        raise InvalidArgumentError("grid_points must be >= 2")

    d = instance.dimension
    p0 = np.zeros(d)
    residual = _terminal_residual(instance, p0)
    norm = float(np.linalg.norm(residual))
    iterations = 0

    while norm > settings.SHOOTING_RESIDUAL_TOL:
        if iterations >= settings.SHOOTING_MAX_ITERATIONS:
            logger.error(f"Shooting stalled at residual {norm:.3e} after {iterations} iterations")
            raise ConvergenceError("shooting root-finder did not converge", residual=norm, iterations=iterations)
        iterations += 1

        jacobian = _finite_difference_jacobian(instance, p0, residual)
        try:
            direction = np.linalg.solve(jacobian, -residual)
        except np.linalg.LinAlgError:
            direction = -np.linalg.lstsq(jacobian, residual, rcond=None)[0]

        damping = 1.0
        for _ in range(MAX_BACKTRACKS):
            candidate = p0 + damping * direction
            candidate_residual = _terminal_residual(instance, candidate)
            candidate_norm = float(np.linalg.norm(candidate_residual))
            if candidate_norm < norm:
                break
            damping *= 0.5
        else:
            logger.error(f"Shooting line search failed at residual {norm:.3e}")
            raise ConvergenceError("shooting line search found no descent", residual=norm, iterations=iterations)

        p0, residual, norm = candidate, candidate_residual, candidate_norm
        logger.debug(f"Shooting iteration {iterations}: residual {norm:.3e} (damping {damping:g})")

    times = np.linspace(instance.initial_time, 1.0, grid_points)
    solution = _integrate(instance, p0, t_eval=times)
    dense = solution.sol

    return CostateSolution(
        state_fn=lambda t: dense(t)[:d],
        costate_fn=lambda t: dense(t)[d:],
        terminal_state=solution.y[:d, -1].copy(),
        times=solution.t,
        states=solution.y[:d].T.copy(),
        costates=solution.y[d:].T.copy(),
        iterations=iterations,
        residual=norm,
    )
