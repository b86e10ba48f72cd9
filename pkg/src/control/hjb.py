"""
HJB residuals and the closed-form value functions they certify.

With transient cost 1/2 ||u||^2 the minimisation over u is explicit, so
residual = dV/dt + grad V . v - 1/2 ||grad V||^2 where v = 0 (pure control)
or v = x (state plus control). The true value function gives zero.
"""

import math

import numpy as np
import scipy.linalg

from src.control.types import ControlDriftMode, ValueFunction
from src.custom_logging import logger
from src.errors import InvalidArgumentError, NumericalFailureError, SingularTimeError
from src.features.terminal_cost import GammaWeight, check_gamma, is_infinite


def hjb_residual(V: ValueFunction, x, t: float,
                 drift_mode: ControlDriftMode | str = ControlDriftMode.PURE_CONTROL) -> float:
    drift_mode = ControlDriftMode(drift_mode)
    x = np.asarray(x, dtype=np.float64)
    gradient = np.asarray(V.gradient(x, t), dtype=np.float64)
    time_derivative = float(V.time_derivative(x, t))
    if not (np.all(np.isfinite(gradient)) and math.isfinite(time_derivative)):
        logger.error(f"Non-finite derivative of {V.name} at t={t}")
        raise NumericalFailureError(f"{V.name} has a non-finite derivative at t={t}", last_state=x)

    residual = time_derivative - 0.5 * float(gradient @ gradient)
    if drift_mode is ControlDriftMode.STATE_PLUS_CONTROL:
        residual += float(gradient @ x)
    return residual


def _remaining(t: float) -> float:
    if t >= 1.0:
        raise SingularTimeError(f"value function is singular at t={t}")
    return 1.0 - t


class BridgeValueFunction(ValueFunction):
    """V(x, t) = ||x1 - x||^2 / (2 (1 - t)), the gamma = infinity bridge."""

    name = "bridge"

    def __init__(self, x1):
        self.x1 = np.asarray(x1, dtype=np.float64)

    def value(self, x, t):
        offset = self.x1 - np.asarray(x, dtype=np.float64)
        return float(offset @ offset) / (2.0 * _remaining(t))

    def gradient(self, x, t):
        return -(self.x1 - np.asarray(x, dtype=np.float64)) / _remaining(t)

    def time_derivative(self, x, t):
        offset = self.x1 - np.asarray(x, dtype=np.float64)
        return float(offset @ offset) / (2.0 * _remaining(t) ** 2)


class _QuadraticFeatureValue(ValueFunction):
    """V = 1/2 r^T S^{-1} r with S = I/gamma + G(t) A A^T."""

    def __init__(self, A, y1, gamma: GammaWeight):
        gamma = check_gamma(gamma)
        if is_infinite(gamma):
            raise InvalidArgumentError(f"{self.name} value function needs a finite gamma")
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.y1 = np.asarray(y1, dtype=np.float64).reshape(-1)
        self.gamma = gamma
        self._outer = self.A @ self.A.T

    def _weighted(self, residual: np.ndarray, horizon_gain: float) -> np.ndarray:
        system = np.eye(self.A.shape[0]) / self.gamma + horizon_gain * self._outer
        return scipy.linalg.solve(system, residual, assume_a="pos")


class StyleValueFunction(_QuadraticFeatureValue):
    """Pure-control finite-gamma value, r = A x - y1 and G = 1 - t."""

    name = "style"

    def value(self, x, t):
        residual = self.A @ np.asarray(x, dtype=np.float64) - self.y1
        return 0.5 * float(residual @ self._weighted(residual, _remaining(t)))

    def gradient(self, x, t):
        residual = self.A @ np.asarray(x, dtype=np.float64) - self.y1
        return self.A.T @ self._weighted(residual, _remaining(t))

    def time_derivative(self, x, t):
        residual = self.A @ np.asarray(x, dtype=np.float64) - self.y1
        weighted = self._weighted(residual, _remaining(t))
        return 0.5 * float(weighted @ self._outer @ weighted)


class ModulatedValueFunction(_QuadraticFeatureValue):
    """State-plus-control value, r = A e^{1-t} x - y1 and G = (e^{2(1-t)} - 1) / 2."""

    name = "modulated"

    def _parts(self, x, t):
        remaining = 1.0 - t
        growth = math.exp(remaining)
        residual = growth * (self.A @ np.asarray(x, dtype=np.float64)) - self.y1
        gain = 0.5 * math.expm1(2.0 * remaining)
        return growth, residual, self._weighted(residual, gain)

    def value(self, x, t):
        _, residual, weighted = self._parts(x, t)
        return 0.5 * float(residual @ weighted)

    def gradient(self, x, t):
        growth, _, weighted = self._parts(x, t)
        return growth * (self.A.T @ weighted)

    def time_derivative(self, x, t):
        growth, _, weighted = self._parts(x, t)
        x = np.asarray(x, dtype=np.float64)
        drift_term = -growth * float(weighted @ (self.A @ x))
        gain_term = 0.5 * growth ** 2 * float(weighted @ self._outer @ weighted)
        return drift_term + gain_term


class ShiftedValueFunction(ValueFunction):
    """V(x, t) + rate * t; shifts every HJB residual by exactly `rate`."""

    def __init__(self, base: ValueFunction, rate: float = 1.0):
        self.base = base
        self.rate = float(rate)
        self.name = f"{base.name}+{self.rate:g}t"

    def value(self, x, t):
        return self.base.value(x, t) + self.rate * t

    def gradient(self, x, t):
        return self.base.gradient(x, t)

    def time_derivative(self, x, t):
        return self.base.time_derivative(x, t) + self.rate
