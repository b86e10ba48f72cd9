from typing import Any, Optional

import numpy as np


class SocDiffuseError(Exception):
    """Base class for every error raised by the library."""


class InvalidArgumentError(SocDiffuseError, ValueError):
    """Dimension mismatch, out-of-range argument or violated precondition."""


class NumericalFailureError(SocDiffuseError, ArithmeticError):
    """
    A NaN/Inf appeared mid-computation.

    Carries where it happened (outer step and/or inner iteration) and the last
    finite state so oracle comparisons can report something useful.
    """

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        iteration: Optional[int] = None,
        last_state: Optional[np.ndarray] = None,
    ):
        context = []
        if step is not None:
            context.append(f"step={step}")
        if iteration is not None:
            context.append(f"iteration={iteration}")
        full_message = f"{message} ({', '.join(context)})" if context else message
        super().__init__(full_message)
        self.base_message = message
        self.step = step
        self.iteration = iteration
        self.last_state = None if last_state is None else np.array(last_state, copy=True)

    def with_step(self, step: int) -> "NumericalFailureError":
        """Re-raise helper: attach the outer step index to an inner failure."""
        return NumericalFailureError(self.base_message, step=step, iteration=self.iteration, last_state=self.last_state)


class SingularTimeError(SocDiffuseError, ZeroDivisionError):
    """A 1/(1-t) formula was evaluated at (or past) t = 1."""


class SingularDenoiseError(SocDiffuseError, ZeroDivisionError):
    """DDIM noise estimate requested at a noiseless level with x0_hat != x_t."""


class LinearSolveError(SocDiffuseError, ArithmeticError):
    """A closed-form linear system was singular."""


class ConvergenceError(SocDiffuseError, ArithmeticError):
    """Iterative solver hit its iteration cap."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class AbortedTrajectoryError(NumericalFailureError):
    """Trajectory integration stopped on a non-finite state."""

    def __init__(self, message: str, step: int, last_state: np.ndarray, partial: Any = None):
        super().__init__(message, step=step, last_state=last_state)
        self.partial = partial


class ConfigError(SocDiffuseError):
    """Experiment configuration could not be read or validated."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        super().__init__(f"{message} [{', '.join(location)}]" if location else message)
        self.field = field
        self.line = line


class UnknownSuiteError(SocDiffuseError, KeyError):
    """Requested verification suite is not registered."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown suite"


def ensure_finite(values: np.ndarray, message: str, **context: Any) -> np.ndarray:
    """Raise NumericalFailureError unless every entry is finite."""
    array = np.asarray(values)
    if not np.all(np.isfinite(array)):
        raise NumericalFailureError(message, **context)
    return array
