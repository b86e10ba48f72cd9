import enum
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from src.config import settings
from src.errors import InvalidArgumentError
from src.features.terminal_cost import GammaWeight, check_gamma, is_infinite


class ControlDriftMode(enum.Enum):
    """dX = u dt, or dX = (X + u) dt."""

    PURE_CONTROL = "pure-control"
    STATE_PLUS_CONTROL = "state-plus-control"


@dataclass(frozen=True)
class LQInstance:
    """A linear-quadratic control problem on the control clock t in [t0, 1]."""

    extractor_matrix: np.ndarray
    target: np.ndarray
    initial_state: np.ndarray
    initial_time: float = 0.0
    gamma: GammaWeight = 1.0
    drift_mode: ControlDriftMode = ControlDriftMode.PURE_CONTROL

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.extractor_matrix, dtype=np.float64))
        target = np.asarray(self.target, dtype=np.float64).reshape(-1)
        x0 = np.asarray(self.initial_state, dtype=np.float64).reshape(-1)

        if np.any(np.isnan(matrix)):
            raise InvalidArgumentError("extractor matrix contains NaN")
        if matrix.shape != (target.shape[0], x0.shape[0]):
            raise InvalidArgumentError(
                f"A has shape {matrix.shape}, expected ({target.shape[0]}, {x0.shape[0]}) from y1 and x0"
            )
        if not self.initial_time < 1.0:
            raise InvalidArgumentError(f"t0 must be < 1, got {self.initial_time}")

        for array in (matrix, target, x0):
            array.setflags(write=False)
        object.__setattr__(self, "extractor_matrix", matrix)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "initial_state", x0)
        object.__setattr__(self, "initial_time", float(self.initial_time))
        object.__setattr__(self, "gamma", check_gamma(self.gamma))
        object.__setattr__(self, "drift_mode", ControlDriftMode(self.drift_mode))

    @property
    def dimension(self) -> int:
        return self.initial_state.shape[0]

    @property
    def feature_dimension(self) -> int:
        return self.target.shape[0]

    @property
    def gram(self) -> np.ndarray:
        """A^T A."""
        return self.extractor_matrix.T @ self.extractor_matrix

    @property
    def has_finite_gamma(self) -> bool:
        return not is_infinite(self.gamma)

    def replace(self, **changes) -> "LQInstance":
        values = {
            "extractor_matrix": self.extractor_matrix,
            "target": self.target,
            "initial_state": self.initial_state,
            "initial_time": self.initial_time,
            "gamma": self.gamma,
            "drift_mode": self.drift_mode,
        }
        values.update(changes)
        return LQInstance(**values)


@dataclass
class CostateSolution:
    """
    State and costate along an optimal trajectory; u*(t) = -p(t).

    times/states/costates hold the grid a numerical solve was evaluated on
    (empty for closed forms).
    """

    state_fn: Callable[[float], np.ndarray]
    costate_fn: Callable[[float], np.ndarray]
    terminal_state: np.ndarray
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    states: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    costates: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    iterations: int = 0
    residual: float = 0.0

    def control(self, t: float) -> np.ndarray:
        return -np.asarray(self.costate_fn(t))

    def sample(self, times: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """States and costates stacked over the given times."""
        states = np.stack([np.asarray(self.state_fn(t), dtype=np.float64) for t in times])
        costates = np.stack([np.asarray(self.costate_fn(t), dtype=np.float64) for t in times])
        return states, costates


def _central_steps(values: np.ndarray) -> np.ndarray:
    return settings.FD_RELATIVE_STEP * np.maximum(np.abs(values), 1.0)


class ValueFunction(ABC):
    """
    Candidate value function V(x, t) on the control clock.

    Subclasses with closed forms override gradient / time_derivative; the
    defaults are central differences.
    """

    name: str = "value"

    @abstractmethod
    def value(self, x: np.ndarray, t: float) -> float:
        pass

    def gradient(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        steps = _central_steps(x)
        grad = np.empty_like(x)
        for i in range(x.shape[0]):
            offset = np.zeros_like(x)
            offset[i] = steps[i]
            grad[i] = (self.value(x + offset, t) - self.value(x - offset, t)) / (2.0 * steps[i])
        return grad

    def time_derivative(self, x: np.ndarray, t: float) -> float:
        step = float(_central_steps(np.asarray(t)))
        return (self.value(x, t + step) - self.value(x, t - step)) / (2.0 * step)

    def __call__(self, x: np.ndarray, t: float) -> float:
        return self.value(x, t)


class CallableValueFunction(ValueFunction):
    """Wraps plain callables; missing derivatives fall back to central differences."""

    def __init__(self, value_fn: Callable[[np.ndarray, float], float],
                 gradient_fn: Optional[Callable[[np.ndarray, float], np.ndarray]] = None,
                 time_derivative_fn: Optional[Callable[[np.ndarray, float], float]] = None,
                 name: str = "callable"):
        self.value_fn = value_fn
        self.gradient_fn = gradient_fn
        self.time_derivative_fn = time_derivative_fn
        self.name = name

    def value(self, x, t):
        return float(self.value_fn(np.asarray(x, dtype=np.float64), t))

    def gradient(self, x, t):
        if self.gradient_fn is None:
            return super().gradient(x, t)
        return np.asarray(self.gradient_fn(np.asarray(x, dtype=np.float64), t), dtype=np.float64)

    def time_derivative(self, x, t):
        if self.time_derivative_fn is None:
            return super().time_derivative(x, t)
        return float(self.time_derivative_fn(np.asarray(x, dtype=np.float64), t))
