"""
Forward marginals, posterior-mean estimates, DDIM stepping and reverse drifts.

Every function accepts states with leading batch axes (shape (..., d)).
"""

import math
from typing import Hashable, Optional

import numpy as np

from src.custom_logging import logger
from src.diffusion.score_models import ScoreModel, evaluate_score
from src.diffusion.types import DriftMode, NoiseSchedule, SdeCoefficients, State
from src.errors import (
    InvalidArgumentError,
    NumericalFailureError,
    SingularDenoiseError,
    SingularTimeError,
)

OU_COEFFICIENTS = SdeCoefficients()


def _as_states(x) -> np.ndarray:
    array = np.asarray(x, dtype=np.float64)
    if array.ndim == 0:
        raise InvalidArgumentError("expected a state vector, got a scalar")
    return array


def forward_marginal_sample(x0, t: int, noise, schedule: NoiseSchedule) -> State:
    """sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise."""
    x0 = _as_states(x0)
    noise = _as_states(noise)
    if noise.shape[-1] != x0.shape[-1]:
        raise InvalidArgumentError(f"noise dimension {noise.shape[-1]} != state dimension {x0.shape[-1]}")
    alpha_bar = schedule.at(t)
    values = math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * noise
    return State(values=values, time_index=t)


def flow_path_sample(x0, t: float, noise) -> np.ndarray:
    """t * x0 + (1 - t) * noise."""
    if not 0.0 <= t <= 1.0:
        raise InvalidArgumentError(f"flow time must be in [0, 1], got {t}")
    x0 = _as_states(x0)
    noise = _as_states(noise)
    if noise.shape[-1] != x0.shape[-1]:
        raise InvalidArgumentError(f"noise dimension {noise.shape[-1]} != state dimension {x0.shape[-1]}")
    return t * x0 + (1.0 - t) * noise


def tweedie_posterior_mean(x, t: int, score: ScoreModel, schedule: NoiseSchedule,
                           context: Optional[Hashable] = None) -> np.ndarray:
    """
    E[X_0 | X_t = x] = x / sqrt(abar) + (1 - abar) / sqrt(abar) * s(x, t).

    Exact for any prior when s is the true marginal score.
    """
    x = _as_states(x)
    alpha_bar = schedule.at(t)
    root = math.sqrt(alpha_bar)
    score_value = evaluate_score(score, x, schedule.continuous_time(t), context, step=t)
    return x / root + (1.0 - alpha_bar) / root * score_value


def flow_posterior_mean(x, t: float, score: ScoreModel, context: Optional[Hashable] = None) -> np.ndarray:
    """E[X_1 | X_t = x] = x / (1 - t) + t^2 / (1 - t) * grad log p(x, 1 - t) on the flow path."""
    if t >= 1.0:
        raise SingularTimeError(f"flow posterior mean is singular at t={t}")
    if t < 0.0:
        raise InvalidArgumentError(f"flow time must be >= 0, got {t}")
    x = _as_states(x)
    score_value = evaluate_score(score, x, 1.0 - t, context)
    return x / (1.0 - t) + t * t / (1.0 - t) * score_value


def ddim_step(x_t, x0_hat, t: int, t_prev: int, schedule: NoiseSchedule) -> State:
    """Deterministic DDIM update from level t to level t_prev < t."""
    if t_prev >= t:
        raise InvalidArgumentError(f"DDIM steps towards data: need t_prev < t, got {t_prev} >= {t}")
    x_t = _as_states(x_t)
    x0_hat = _as_states(x0_hat)
    alpha_bar = schedule.at(t)
    alpha_bar_prev = schedule.at(t_prev)

    if alpha_bar == 1.0:
        if not np.array_equal(x_t, x0_hat):
            raise SingularDenoiseError(f"noise estimate undefined at t={t}: abar=1 and x0_hat != x_t")
        noise_hat = np.zeros_like(x_t)
    else:
        noise_hat = (x_t - math.sqrt(alpha_bar) * x0_hat) / math.sqrt(1.0 - alpha_bar)

    values = math.sqrt(alpha_bar_prev) * x0_hat + math.sqrt(1.0 - alpha_bar_prev) * noise_hat
    if not np.all(np.isfinite(values)):
        raise NumericalFailureError("DDIM produced a non-finite state", step=t, last_state=x_t)
    return State(values=values, time_index=t_prev)


def reverse_drift(x, t: float, score: ScoreModel, mode: DriftMode | str = DriftMode.SDE,
                  sde: SdeCoefficients = OU_COEFFICIENTS, context: Optional[Hashable] = None) -> np.ndarray:
    """
    sde:              f - g^2 s
    probability-flow: f - g^2 s / 2
    flow-remark:      t/(1-t)^2 x + t^2/(1-t)^2 s(x, 1-t)
    """
    mode = DriftMode(mode)
    x = _as_states(x)
    if mode is DriftMode.FLOW_REMARK:
        if t >= 1.0:
            raise SingularTimeError(f"flow-remark drift is singular at t={t}")
        score_value = evaluate_score(score, x, 1.0 - t, context)
        denominator = (1.0 - t) ** 2
        return t / denominator * x + t * t / denominator * score_value

    score_value = evaluate_score(score, x, t, context)
    g = sde.g(x, t)
    weight = g * g if mode is DriftMode.SDE else 0.5 * g * g
    return sde.f(x, t) - weight * score_value


def simulate_reverse(x_start, score: ScoreModel, num_steps: int, rng: Optional[np.random.Generator] = None,
                     mode: DriftMode | str = DriftMode.SDE, sde: SdeCoefficients = OU_COEFFICIENTS,
                     context: Optional[Hashable] = None) -> np.ndarray:
    """
    Euler(-Maruyama) integration of the reverse dynamics.

    sde / probability-flow run the forward clock backwards from t=1 to t=0;
    flow-remark runs the control clock from t=0 and stops at 1 - dt.
    Brownian increments are added only when rng is given (and never for the
    probability-flow ODE).
    """
    if num_steps < 1:
        raise InvalidArgumentError("num_steps must be >= 1")
    mode = DriftMode(mode)
    x = np.array(_as_states(x_start), dtype=np.float64, copy=True)
    dt = 1.0 / num_steps

    if mode is DriftMode.FLOW_REMARK:
        for i in range(num_steps - 1):
            t = i * dt
            previous = x
            x = x + reverse_drift(x, t, score, mode, sde, context) * dt
            if rng is not None:
                x = x + math.sqrt(dt) * rng.standard_normal(x.shape)
            _check_finite_step(x, i, previous)
        return x

    for i in range(num_steps, 0, -1):
        t = i * dt
        previous = x
        drift = reverse_drift(x, t, score, mode, sde, context)
        x = x - drift * dt
        if rng is not None and mode is DriftMode.SDE:
            x = x + sde.g(x, t) * math.sqrt(dt) * rng.standard_normal(x.shape)
        _check_finite_step(x, i, previous)
    return x


def ddim_sample(x_start, score: ScoreModel, schedule: NoiseSchedule,
                context: Optional[Hashable] = None) -> np.ndarray:
    """Uncontrolled deterministic DDIM chain from level T to 0."""
    x = _as_states(x_start)
    for t in range(schedule.num_steps, 0, -1):
        x0_hat = tweedie_posterior_mean(x, t, score, schedule, context)
        x = ddim_step(x, x0_hat, t, t - 1, schedule).values
    return np.array(x)


def _check_finite_step(x: np.ndarray, step: int, previous: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        logger.error(f"Reverse simulation diverged at step {step}")
        raise NumericalFailureError("reverse simulation produced a non-finite state", step=step,
                                    last_state=previous)
