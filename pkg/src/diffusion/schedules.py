"""
Noise schedules for the variance-preserving chain and the continuous marginal
paths the analytic score models are defined on.

Discrete convention: alpha_bar[0] = 1 is clean data, alpha_bar[T] is the
noisiest level. Continuous formulas receive t/T.
"""

import math
from abc import ABC, abstractmethod

import numpy as np

from src.diffusion.types import NoiseSchedule, ScheduleKind
from src.errors import InvalidArgumentError

LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 0.02
# Reference chain length the linear betas are quoted for; shorter chains scale them up.
LINEAR_BETA_REFERENCE_STEPS = 1000
COSINE_OFFSET = 0.008
MAX_BETA = 0.999


def linear_betas(num_steps: int) -> np.ndarray:
    """
    beta_i = linspace(s * 1e-4, s * 0.02, T) with s = 1000 / T, clipped at 0.999.

    T = 1000 reproduces the classic 1e-4..0.02 range exactly; T = 1 gives the
    single beta 0.1.
    """
    scale = LINEAR_BETA_REFERENCE_STEPS / num_steps
    betas = np.linspace(scale * LINEAR_BETA_START, scale * LINEAR_BETA_END, num_steps, dtype=np.float64)
    return np.minimum(betas, MAX_BETA)


def cosine_betas(num_steps: int) -> np.ndarray:
    def f(step: float) -> float:
        return math.cos((step / num_steps + COSINE_OFFSET) / (1 + COSINE_OFFSET) * math.pi / 2) ** 2

    betas = [min(1.0 - f(i) / f(i - 1), MAX_BETA) for i in range(1, num_steps + 1)]
    return np.asarray(betas, dtype=np.float64)


def make_schedule(num_steps: int, kind: ScheduleKind | str = ScheduleKind.LINEAR_BETA) -> NoiseSchedule:
    if num_steps < 1:
        raise InvalidArgumentError(f"schedule needs T >= 1, got {num_steps}")
    kind = ScheduleKind(kind)
    if kind is ScheduleKind.LINEAR_BETA:
        betas = linear_betas(num_steps)
    elif kind is ScheduleKind.COSINE:
        betas = cosine_betas(num_steps)
    else:
        raise InvalidArgumentError("tabulated schedules are built with NoiseSchedule.tabulated")

    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(num_steps=num_steps, alpha_bar=tuple(float(a) for a in alpha_bar), kind=kind)


class MarginalPath(ABC):
    """X_t = scale(t) * X_0 + noise_std(t) * eps, t continuous."""

    @abstractmethod
    def scale(self, t: float) -> float:
        ...

    @abstractmethod
    def noise_std(self, t: float) -> float:
        ...

    def variance_of(self, prior_variance: float, t: float) -> float:
        """Marginal variance of one isotropic Gaussian component."""
        return self.scale(t) ** 2 * prior_variance + self.noise_std(t) ** 2


class VariancePreservingPath(MarginalPath):
    """alpha_bar read from the schedule at index t*T, log-linear in between."""

    def __init__(self, schedule: NoiseSchedule):
        self.schedule = schedule
        self._log_alpha_bar = np.log(np.asarray(schedule.alpha_bar, dtype=np.float64))

    def alpha_bar(self, t: float) -> float:
        if not 0.0 <= t <= 1.0:
            raise InvalidArgumentError(f"continuous time must be in [0, 1], got {t}")
        position = t * self.schedule.num_steps
        nearest = round(position)
        if abs(position - nearest) < 1e-9:
            return self.schedule.alpha_bar[int(nearest)]
        lower = int(math.floor(position))
        weight = position - lower
        log_value = (1 - weight) * self._log_alpha_bar[lower] + weight * self._log_alpha_bar[lower + 1]
        return float(math.exp(log_value))

    def scale(self, t: float) -> float:
        return math.sqrt(self.alpha_bar(t))

    def noise_std(self, t: float) -> float:
        return math.sqrt(1.0 - self.alpha_bar(t))

    def variance_of(self, prior_variance: float, t: float) -> float:
        alpha_bar = self.alpha_bar(t)
        return alpha_bar * prior_variance + 1.0 - alpha_bar


class FlowPath(MarginalPath):
    """Optimal-transport path X_t = t X_0 + (1 - t) eps."""

    def scale(self, t: float) -> float:
        return t

    def noise_std(self, t: float) -> float:
        return 1.0 - t


class OrnsteinUhlenbeckPath(MarginalPath):
    """Law of dX = -X dt + sqrt(2) dW after t * horizon units of time."""

    def __init__(self, horizon: float = 1.0):
        if horizon <= 0:
            raise InvalidArgumentError("horizon must be positive")
        self.horizon = horizon

    def scale(self, t: float) -> float:
        return math.exp(-t * self.horizon)

    def noise_std(self, t: float) -> float:
        return math.sqrt(-math.expm1(-2.0 * t * self.horizon))
