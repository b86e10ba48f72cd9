import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.config import settings
from src.errors import InvalidArgumentError, NumericalFailureError


class GradientMode(str, enum.Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite-difference"


class ProxInit(str, enum.Enum):
    """Starting point of the proximal inner loop."""

    POSTERIOR_MEAN = "posterior-mean"
    ZERO = "zero"


class SamplerConfig(BaseModel):
    """Parameters shared by both modulated samplers."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_steps: int = Field(default=settings.DEFAULT_NUM_STEPS, ge=1)
    stepsize: float = Field(default=settings.DEFAULT_STEPSIZE, gt=0)
    opt_steps: int = Field(default=settings.DEFAULT_OPT_STEPS, ge=0)
    proximal_strength: Optional[float] = Field(default=None, gt=0)
    gradient_mode: GradientMode = GradientMode.ANALYTIC
    prox_init: ProxInit = ProxInit.POSTERIOR_MEAN
    seed: int = settings.DEFAULT_SEED

    @field_validator("stepsize", "proximal_strength")
    @classmethod
    def _finite(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not math.isfinite(value):
            raise ValueError("must be finite")
        return value

    def require_proximal_strength(self) -> float:
        if self.proximal_strength is None:
            raise InvalidArgumentError("the proximal sampler needs proximal_strength (lambda) > 0")
        return self.proximal_strength


@dataclass(frozen=True)
class ControlVariable:
    """The inner-loop control u; a fresh zero vector at every outer step."""

    u: np.ndarray

    def __post_init__(self):
        values = np.array(self.u, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise NumericalFailureError("control variable has non-finite entries", last_state=values)
        values.setflags(write=False)
        object.__setattr__(self, "u", values)

    @classmethod
    def zero(cls, dimension: int) -> "ControlVariable":
        return cls(np.zeros(dimension))

    def descend(self, gradient: np.ndarray, stepsize: float) -> "ControlVariable":
        return ControlVariable(self.u - stepsize * gradient)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.u))
