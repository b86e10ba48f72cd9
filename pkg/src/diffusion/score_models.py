import math
import threading
from abc import ABC, abstractmethod
from typing import Hashable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import logsumexp, softmax

from src.diffusion.schedules import MarginalPath
from src.errors import InvalidArgumentError, NumericalFailureError


class ScoreModel(ABC):
    """
    Evaluatable score field s(x, t, context) ~ grad log p(x, t).

    x may carry leading batch axes; the last axis is the state dimension.
    t is continuous time in [0, 1] on the model's marginal path.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Short identifier used in logs and configs, e.g. "isotropic-gaussian"."""
        pass

    @property
    @abstractmethod
    def dimension(self) -> int:
        pass

    @property
    def is_analytic(self) -> bool:
        """Analytic models expose log_density and an exact score Jacobian."""
        return False

    @abstractmethod
    def score(self, x: np.ndarray, t: float, context: Optional[Hashable] = None) -> np.ndarray:
        pass

    def log_density(self, x: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError(f"{self.name} has no analytic log-density")

    def score_jacobian(self, x: np.ndarray, t: float, context: Optional[Hashable] = None) -> np.ndarray:
        """d score / d x, shape (..., d, d)."""
        raise NotImplementedError(f"{self.name} has no analytic score Jacobian")

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        array = np.asarray(x, dtype=np.float64)
        if array.ndim == 0 or array.shape[-1] != self.dimension:
            raise InvalidArgumentError(
                f"{self.name} expects vectors of dimension {self.dimension}, got shape {array.shape}"
            )
        return array

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}(d={self.dimension})>"


class IsotropicGaussian(ScoreModel):
    """Prior N(mean, variance * I) pushed along a marginal path."""

    def __init__(self, mean: Sequence[float], variance: float, path: MarginalPath):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        if variance <= 0 or not math.isfinite(variance):
            raise InvalidArgumentError(f"variance must be positive and finite, got {variance}")
        self.variance = float(variance)
        self.path = path

    @property
    def name(self) -> str:
        return "isotropic-gaussian"

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    @property
    def is_analytic(self) -> bool:
        return True

    def marginal(self, t: float) -> tuple[np.ndarray, float]:
        """Mean and per-coordinate variance of the marginal at t."""
        return self.path.scale(t) * self.mean, self.path.variance_of(self.variance, t)

    def score(self, x, t, context=None):
        x = self._check_input(x)
        mean, variance = self.marginal(t)
        return -(x - mean) / variance

    def log_density(self, x, t):
        x = self._check_input(x)
        mean, variance = self.marginal(t)
        squared = np.sum((x - mean) ** 2, axis=-1)
        return -0.5 * squared / variance - 0.5 * self.dimension * math.log(2 * math.pi * variance)

    def score_jacobian(self, x, t, context=None):
        x = self._check_input(x)
        _, variance = self.marginal(t)
        identity = np.eye(self.dimension)
        return np.broadcast_to(-identity / variance, x.shape[:-1] + identity.shape).copy()


class GaussianMixture(ScoreModel):
    """sum_i w_i N(mu_i, sigma_i^2 I) pushed along a marginal path."""

    def __init__(self, weights: Sequence[float], means: Sequence[Sequence[float]],
                 variances: Sequence[float], path: MarginalPath):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        self.variances = np.asarray(variances, dtype=np.float64)
        self.path = path

        n_components = self.weights.shape[0]
        if self.means.shape[0] != n_components or self.variances.shape != (n_components,):
            raise InvalidArgumentError("weights, means and variances must describe the same components")
        if np.any(self.weights < 0) or abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise InvalidArgumentError(f"mixture weights must sum to 1, got {np.sum(self.weights)!r}")
        if np.any(self.variances <= 0):
            raise InvalidArgumentError("component variances must be positive")
        self._log_weights = np.log(self.weights)

    @property
    def name(self) -> str:
        return "gaussian-mixture"

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def is_analytic(self) -> bool:
        return True

    def _components(self, x: np.ndarray, t: float):
        scale = self.path.scale(t)
        variances = np.array([self.path.variance_of(v, t) for v in self.variances])
        # (..., n, d)
        offsets = x[..., None, :] - scale * self.means
        log_terms = (
            self._log_weights
            - 0.5 * np.sum(offsets ** 2, axis=-1) / variances
            - 0.5 * self.dimension * np.log(2 * math.pi * variances)
        )
        component_scores = -offsets / variances[:, None]
        return log_terms, component_scores, variances

    def responsibilities(self, x: np.ndarray, t: float) -> np.ndarray:
        x = self._check_input(x)
        log_terms, _, _ = self._components(x, t)
        return softmax(log_terms, axis=-1)

    def score(self, x, t, context=None):
        x = self._check_input(x)
        log_terms, component_scores, _ = self._components(x, t)
        weights = softmax(log_terms, axis=-1)
        return np.sum(weights[..., None] * component_scores, axis=-2)

    def log_density(self, x, t):
        x = self._check_input(x)
        log_terms, _, _ = self._components(x, t)
        return logsumexp(log_terms, axis=-1)

    def score_jacobian(self, x, t, context=None):
        x = self._check_input(x)
        log_terms, component_scores, variances = self._components(x, t)
        weights = softmax(log_terms, axis=-1)
        score = np.sum(weights[..., None] * component_scores, axis=-2)
        identity = np.eye(self.dimension)
        curvature = -np.sum(weights / variances, axis=-1)[..., None, None] * identity
        second_moment = np.einsum("...n,...ni,...nj->...ij", weights, component_scores, component_scores)
        return curvature + second_moment - np.einsum("...i,...j->...ij", score, score)


class TabulatedScore(ScoreModel):
    """
    One-dimensional score table on a (t, x) grid, applied to each coordinate.

    Only meant for tests and fixtures: no log-density, no Jacobian.
    """

    def __init__(self, grid_t: Sequence[float], grid_x: Sequence[float], values: np.ndarray, dimension: int = 1):
        self.grid_t = np.asarray(grid_t, dtype=np.float64)
        self.grid_x = np.asarray(grid_x, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.shape != (self.grid_t.size, self.grid_x.size):
            raise InvalidArgumentError(
                f"table shape {self.values.shape} does not match grid ({self.grid_t.size}, {self.grid_x.size})"
            )
        self._dimension = int(dimension)
        self._interpolator = RegularGridInterpolator((self.grid_t, self.grid_x), self.values, method="linear")

    @classmethod
    def from_model(cls, model: ScoreModel, grid_t: Sequence[float], grid_x: Sequence[float],
                   dimension: int = 1) -> "TabulatedScore":
        if model.dimension != 1:
            raise InvalidArgumentError("only one-dimensional models can be tabulated")
        grid_x = np.asarray(grid_x, dtype=np.float64)
        table = np.stack([model.score(grid_x[:, None], float(t))[:, 0] for t in grid_t])
        return cls(grid_t, grid_x, table, dimension=dimension)

    @property
    def name(self) -> str:
        return "tabulated"

    @property
    def dimension(self) -> int:
        return self._dimension

    def score(self, x, t, context=None):
        x = self._check_input(x)
        points = np.stack([np.full(x.shape, float(t)), x], axis=-1).reshape(-1, 2)
        try:
            values = self._interpolator(points)
        except ValueError as exc:
            raise InvalidArgumentError(f"point outside the tabulated grid: {exc}") from exc
        return values.reshape(x.shape)


class ConditionalScoreModel(ScoreModel):
    """Selects among score models by an opaque context tag (the prompt stand-in)."""

    def __init__(self, default: Optional[Hashable] = None):
        self._models: dict[Hashable, ScoreModel] = {}
        self.default = default

    def register(self, context: Hashable, model: ScoreModel) -> None:
        if self._models and model.dimension != self.dimension:
            raise InvalidArgumentError("all conditional models must share one dimension")
        self._models[context] = model
        if self.default is None:
            self.default = context

    def resolve(self, context: Optional[Hashable]) -> ScoreModel:
        key = self.default if context is None else context
        if key not in self._models:
            raise InvalidArgumentError(f"no score model registered for context {key!r}")
        return self._models[key]

    @property
    def name(self) -> str:
        return "conditional"

    @property
    def dimension(self) -> int:
        if not self._models:
            raise InvalidArgumentError("conditional score model has no registered models")
        return next(iter(self._models.values())).dimension

    @property
    def is_analytic(self) -> bool:
        return all(model.is_analytic for model in self._models.values())

    def score(self, x, t, context=None):
        return self.resolve(context).score(x, t)

    def log_density(self, x, t):
        return self.resolve(None).log_density(x, t)

    def score_jacobian(self, x, t, context=None):
        return self.resolve(context).score_jacobian(x, t)


class CountingScoreModel(ScoreModel):
    """Wraps a model and counts score and score-gradient evaluations."""

    def __init__(self, inner: ScoreModel):
        self.inner = inner
        self.score_calls = 0
        self.jacobian_calls = 0
        self._lock = threading.Lock()

    @property
    def name(self) -> str:
        return f"counting({self.inner.name})"

    @property
    def dimension(self) -> int:
        return self.inner.dimension

    @property
    def is_analytic(self) -> bool:
        return self.inner.is_analytic

    def score(self, x, t, context=None):
        with self._lock:
            self.score_calls += 1
        return self.inner.score(x, t, context)

    def log_density(self, x, t):
        return self.inner.log_density(x, t)

    def score_jacobian(self, x, t, context=None):
        with self._lock:
            self.jacobian_calls += 1
        return self.inner.score_jacobian(x, t, context)


def evaluate_score(score: ScoreModel, x: np.ndarray, t: float, context: Optional[Hashable] = None,
                   step: Optional[int] = None) -> np.ndarray:
    """Score evaluation that refuses to pass NaN/Inf downstream."""
    value = np.asarray(score.score(x, t, context), dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise NumericalFailureError(f"{score.name} returned a non-finite score at t={t}", step=step,
                                    last_state=np.asarray(x))
    return value
