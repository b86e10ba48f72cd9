import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from src.errors import InvalidArgumentError


class ScheduleKind(enum.Enum):
    LINEAR_BETA = "linear-beta"
    COSINE = "cosine"
    TABULATED = "tabulated"


class DriftMode(enum.Enum):
    SDE = "sde"
    PROBABILITY_FLOW = "probability-flow"
    FLOW_REMARK = "flow-remark"


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal levels alpha_bar[0..T] of a variance-preserving chain."""

    num_steps: int
    alpha_bar: tuple[float, ...]
    kind: ScheduleKind = ScheduleKind.LINEAR_BETA

    def __post_init__(self):
        if self.num_steps < 1:
            raise InvalidArgumentError(f"num_steps must be >= 1, got {self.num_steps}")
        if len(self.alpha_bar) != self.num_steps + 1:
            raise InvalidArgumentError(
                f"alpha_bar needs {self.num_steps + 1} entries, got {len(self.alpha_bar)}"
            )
        values = np.asarray(self.alpha_bar, dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0) or np.any(values > 1.0):
            raise InvalidArgumentError("alpha_bar entries must be finite and in (0, 1]")
        if values[0] != 1.0:
            raise InvalidArgumentError(f"alpha_bar[0] must be exactly 1, got {values[0]!r}")
        if np.any(np.diff(values) > 0.0):
            raise InvalidArgumentError("alpha_bar must be non-increasing in t")

    def at(self, t: int) -> float:
        if not 0 <= t <= self.num_steps:
            raise InvalidArgumentError(f"time index {t} outside [0, {self.num_steps}]")
        return self.alpha_bar[t]

    def continuous_time(self, t: int) -> float:
        """Continuous formulas receive t/T."""
        return t / self.num_steps

    @classmethod
    def tabulated(cls, alpha_bar) -> "NoiseSchedule":
        values = tuple(float(a) for a in alpha_bar)
        return cls(num_steps=len(values) - 1, alpha_bar=values, kind=ScheduleKind.TABULATED)


@dataclass(frozen=True)
class State:
    """X_t at a discrete time index. values may carry leading batch axes."""

    values: np.ndarray
    time_index: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 0:
            raise InvalidArgumentError("State values must be a vector")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError(f"State at t={self.time_index} has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class SdeCoefficients:
    """Forward SDE dX = f(x, t) dt + g(x, t) dW. Defaults to the OU process."""

    drift: Callable[[np.ndarray, float], np.ndarray] = field(default=lambda x, t: -np.asarray(x))
    volatility: Callable[[np.ndarray, float], float] = field(default=lambda x, t: math.sqrt(2.0))

    def f(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.asarray(self.drift(x, t), dtype=float)

    def g(self, x: np.ndarray, t: float) -> float:
        value = float(self.volatility(x, t))
        if value < 0.0:
            raise InvalidArgumentError(f"volatility must be non-negative, got {value}")
        return value


@dataclass
class Trajectory:
    """
    Ordered record of a (controlled) reverse run.

    states[i] is the state at times[i]; controls[i] and costs[i] belong to the
    step that left states[i]. costs may carry one extra entry: the cost of the
    final state.
    """

    states: list[np.ndarray] = field(default_factory=list)
    times: list[int] = field(default_factory=list)
    controls: list[np.ndarray] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)
    seed: Optional[int] = None
    # continuous clock values, filled by runs that integrate in control time
    clock: list[float] = field(default_factory=list)

    def validate(self) -> "Trajectory":
        if len(self.states) != len(self.controls) + 1:
            raise InvalidArgumentError(
                f"trajectory has {len(self.states)} states for {len(self.controls)} controls"
            )
        if len(self.times) != len(self.states):
            raise InvalidArgumentError("every state needs a time index")
        if any(later >= earlier for earlier, later in zip(self.times, self.times[1:])):
            raise InvalidArgumentError("trajectory time indices must strictly decrease")
        return self

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def num_steps(self) -> int:
        return len(self.controls)

    def __len__(self) -> int:
        return len(self.states)
