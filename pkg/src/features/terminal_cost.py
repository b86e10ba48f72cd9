import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from src.errors import InvalidArgumentError, NumericalFailureError
from src.features.extractors import FeatureExtractor, extractor_jacobian


class GammaFlag(enum.Enum):
    """The gamma -> infinity limit. Never represented as a float overflow."""

    INFINITE = "inf"


INFINITE_GAMMA = GammaFlag.INFINITE
GammaWeight = Union[float, GammaFlag]


def is_infinite(gamma: GammaWeight) -> bool:
    return gamma is GammaFlag.INFINITE


def check_gamma(gamma: GammaWeight) -> GammaWeight:
    if is_infinite(gamma):
        return gamma
    if isinstance(gamma, bool) or not isinstance(gamma, (int, float)):
        raise InvalidArgumentError(f"gamma must be a positive real or INFINITE_GAMMA, got {gamma!r}")
    if not math.isfinite(gamma) or gamma <= 0:
        raise InvalidArgumentError(f"gamma must be positive and finite (use INFINITE_GAMMA), got {gamma!r}")
    return float(gamma)


def parse_gamma(raw) -> GammaWeight:
    """Config values: a number, or one of "inf" / "infinite"."""
    if isinstance(raw, str):
        if raw.strip().lower() in {"inf", "infinite", "+inf"}:
            return INFINITE_GAMMA
        raise InvalidArgumentError(f"cannot read gamma from {raw!r}")
    return check_gamma(raw)


@dataclass(frozen=True)
class TerminalCost:
    """h(x) = ||reference - Psi(x)||^2, with gamma carried for the control problems."""

    extractor: FeatureExtractor
    reference_features: np.ndarray
    gamma: GammaWeight = INFINITE_GAMMA

    def __post_init__(self):
        reference = np.asarray(self.reference_features, dtype=np.float64).reshape(-1)
        if reference.shape[0] != self.extractor.output_dim:
            raise InvalidArgumentError(
                f"reference has {reference.shape[0]} features, extractor produces {self.extractor.output_dim}"
            )
        reference.setflags(write=False)
        object.__setattr__(self, "reference_features", reference)
        object.__setattr__(self, "gamma", check_gamma(self.gamma))

    @property
    def input_dim(self) -> int:
        return self.extractor.input_dim

    def residual(self, x) -> np.ndarray:
        return self.reference_features - self.extractor(x)


def terminal_cost(cost: TerminalCost, x) -> np.ndarray | float:
    residual = cost.residual(x)
    value = np.sum(residual ** 2, axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def terminal_cost_grad(cost: TerminalCost, x) -> np.ndarray:
    """grad_x ||ref - Psi(x)||^2 = -2 J^T (ref - Psi(x)); 2 A^T (A x - ref) for linear Psi."""
    x = cost.extractor.check_input(x)
    residual = cost.residual(x)
    jacobian = extractor_jacobian(cost.extractor, x)
    gradient = -2.0 * np.einsum("...kd,...k->...d", jacobian, residual)
    if not np.all(np.isfinite(gradient)):
        raise NumericalFailureError("terminal cost gradient is not finite", last_state=x)
    return gradient
