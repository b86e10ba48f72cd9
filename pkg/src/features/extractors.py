from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence

import numpy as np

from src.config import settings
from src.errors import InvalidArgumentError, NumericalFailureError


class FeatureExtractor(ABC):
    """
    Abstract style descriptor Psi: R^d -> R^k.

    Inputs may carry leading batch axes; the last axis is the state dimension.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Machine-readable variant name, e.g. "linear", "quadratic"."""
        pass

    @property
    @abstractmethod
    def input_dim(self) -> int:
        pass

    @property
    @abstractmethod
    def output_dim(self) -> int:
        pass

    @property
    def has_analytic_jacobian(self) -> bool:
        return False

    @abstractmethod
    def __call__(self, x: np.ndarray) -> np.ndarray:
        pass

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """dPsi/dx with shape (..., k, d)."""
        raise NotImplementedError(f"{self.name} extractor has no analytic Jacobian")

    def check_input(self, x) -> np.ndarray:
        array = np.asarray(x, dtype=np.float64)
        if array.ndim == 0 or array.shape[-1] != self.input_dim:
            raise InvalidArgumentError(
                f"{self.name} extractor expects dimension {self.input_dim}, got shape {array.shape}"
            )
        return array

    def describe(self) -> dict:
        return {"name": self.name, "input_dim": self.input_dim, "output_dim": self.output_dim}


class LinearExtractor(FeatureExtractor):
    """Psi(x) = A x with A of shape (k, d)."""

    def __init__(self, matrix: Sequence[Sequence[float]]):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        if not np.all(np.isfinite(self.matrix)):
            raise InvalidArgumentError("extractor matrix has non-finite entries")
        self.matrix.setflags(write=False)

    @property
    def name(self) -> str:
        return "linear"

    @property
    def input_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def output_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def has_analytic_jacobian(self) -> bool:
        return True

    def __call__(self, x):
        return self.check_input(x) @ self.matrix.T

    def jacobian(self, x):
        x = self.check_input(x)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()

    def describe(self) -> dict:
        return {**super().describe(), "matrix": self.matrix.tolist()}


class QuadraticExtractor(FeatureExtractor):
    """Per-coordinate squares: the smallest nonlinear extractor."""

    def __init__(self, dimension: int):
        if dimension < 1:
            raise InvalidArgumentError("dimension must be positive")
        self._dimension = int(dimension)

    @property
    def name(self) -> str:
        return "quadratic"

    @property
    def input_dim(self) -> int:
        return self._dimension

    @property
    def output_dim(self) -> int:
        return self._dimension

    @property
    def has_analytic_jacobian(self) -> bool:
        return True

    def __call__(self, x):
        return self.check_input(x) ** 2

    def jacobian(self, x):
        x = self.check_input(x)
        return 2.0 * x[..., :, None] * np.eye(self._dimension)


class CompositeExtractor(FeatureExtractor):
    """Concatenation of extractors sharing one input dimension (e.g. style + content)."""

    def __init__(self, parts: Sequence[FeatureExtractor]):
        if not parts:
            raise InvalidArgumentError("composite extractor needs at least one part")
        dims = {part.input_dim for part in parts}
        if len(dims) != 1:
            raise InvalidArgumentError(f"composite parts disagree on input dimension: {sorted(dims)}")
        self.parts = tuple(parts)

    @property
    def name(self) -> str:
        return "composite"

    @property
    def input_dim(self) -> int:
        return self.parts[0].input_dim

    @property
    def output_dim(self) -> int:
        return sum(part.output_dim for part in self.parts)

    @property
    def has_analytic_jacobian(self) -> bool:
        return all(part.has_analytic_jacobian for part in self.parts)

    def __call__(self, x):
        x = self.check_input(x)
        return np.concatenate([part(x) for part in self.parts], axis=-1)

    def jacobian(self, x):
        x = self.check_input(x)
        return np.concatenate([extractor_jacobian(part, x) for part in self.parts], axis=-2)

    def describe(self) -> dict:
        return {**super().describe(), "parts": [part.describe() for part in self.parts]}


class FunctionExtractor(FeatureExtractor):
    """Arbitrary callable Psi; gradients come from central differences."""

    def __init__(self, function: Callable[[np.ndarray], np.ndarray], input_dim: int, output_dim: int,
                 label: str = "function"):
        self.function = function
        self._input_dim = int(input_dim)
        self._output_dim = int(output_dim)
        self.label = label

    @property
    def name(self) -> str:
        return self.label

    @property
    def input_dim(self) -> int:
        return self._input_dim

    @property
    def output_dim(self) -> int:
        return self._output_dim

    def __call__(self, x):
        x = self.check_input(x)
        if x.ndim == 1:
            return np.asarray(self.function(x), dtype=np.float64).reshape(self._output_dim)
        flat = x.reshape(-1, self._input_dim)
        values = np.stack([np.asarray(self.function(row), dtype=np.float64) for row in flat])
        return values.reshape(x.shape[:-1] + (self._output_dim,))


def extract(extractor: FeatureExtractor, x) -> np.ndarray:
    """Psi(x)."""
    return extractor(x)


def finite_difference_step(x: np.ndarray) -> np.ndarray:
    """Relative step 1e-4 with an absolute floor of 1e-8, per coordinate."""
    return np.maximum(settings.FD_RELATIVE_STEP * np.abs(x), settings.FD_ABSOLUTE_FLOOR)


def extractor_jacobian(extractor: FeatureExtractor, x) -> np.ndarray:
    """Analytic Jacobian when available, central differences otherwise."""
    x = extractor.check_input(x)
    if extractor.has_analytic_jacobian:
        return extractor.jacobian(x)
    if x.ndim > 1:
        flat = x.reshape(-1, extractor.input_dim)
        stacked = np.stack([extractor_jacobian(extractor, row) for row in flat])
        return stacked.reshape(x.shape[:-1] + stacked.shape[-2:])

    steps = finite_difference_step(x)
    columns = []
    for i in range(extractor.input_dim):
        offset = np.zeros_like(x)
        offset[i] = steps[i]
        columns.append((extractor(x + offset) - extractor(x - offset)) / (2.0 * steps[i]))
    jacobian = np.stack(columns, axis=-1)
    if not np.all(np.isfinite(jacobian)):
        raise NumericalFailureError(f"finite-difference Jacobian of {extractor.name} is not finite",
                                    last_state=x)
    return jacobian


def build_extractor(kind: str, dimension: int, matrix: Optional[Sequence[Sequence[float]]] = None,
                    coordinates: Optional[Sequence[int]] = None,
                    parts: Optional[Sequence[dict]] = None) -> FeatureExtractor:
    """
    Named variants loadable from experiment files:

    identity               A = I_d
    project                rows of I_d picked by `coordinates`
    linear                 explicit `matrix`
    quadratic              per-coordinate squares
    composite              concatenation of `parts` (each a mapping of extractor keys)
    """
    if kind == "identity":
        return LinearExtractor(np.eye(dimension))
    if kind == "project":
        if not coordinates:
            raise InvalidArgumentError("project extractor needs coordinates")
        return LinearExtractor(np.eye(dimension)[list(coordinates)])
    if kind == "linear":
        if matrix is None:
            raise InvalidArgumentError("linear extractor needs a matrix")
        extractor = LinearExtractor(matrix)
        if extractor.input_dim != dimension:
            raise InvalidArgumentError(
                f"extractor matrix has {extractor.input_dim} columns, state dimension is {dimension}"
            )
        return extractor
    if kind == "quadratic":
        return QuadraticExtractor(dimension)
    if kind == "composite":
        if not parts:
            raise InvalidArgumentError("composite extractor needs parts")
        return CompositeExtractor([build_extractor(dimension=dimension, **part) for part in parts])
    raise InvalidArgumentError(f"unknown extractor kind {kind!r}")
