from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, List

from src.config import settings
from src.custom_logging import logger
from src.errors import SocDiffuseError
from src.experiments.report import InvariantCheck


@dataclass(frozen=True)
class SuiteContext:
    """What a suite may depend on: the seed, the thread count, optional overrides."""

    seed: int = settings.DEFAULT_SEED
    threads: int = settings.DEFAULT_THREADS
    params: dict = field(default_factory=dict)

    def param(self, key: str, default):
        return self.params.get(key, default)


class VerificationSuite(ABC):
    """
    Abstract base class for a named group of invariant checks.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """
        A unique, machine-readable name for the suite.
        Example: "bridge", "afa"
        """
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        pass

    @abstractmethod
    def checks(self) -> List[Callable[[SuiteContext], list[InvariantCheck]]]:
        """
        The check functions, in report order. Each returns one or more
        InvariantCheck entries.
        """
        pass

    def run(self, context: SuiteContext) -> list[InvariantCheck]:
        """
        Runs every check. A check that raises a library error is reported as
        failed with the error text instead of aborting the suite.
        """
        results: list[InvariantCheck] = []
        for check in self.checks():
            label = f"{self.name}.{check.__name__.lstrip('_')}"
            try:
                results.extend(check(context))
            except SocDiffuseError as e:
                logger.error(f"Check {label} raised: {e}")
                results.append(InvariantCheck.failed(label, str(e)))
        for result in results:
            logger.info(f"[{self.name}] {result.name}: {'pass' if result.passed else 'FAIL'} "
                        f"(measured={result.measured}, threshold={result.threshold})")
        return results

    def get_suite_info(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "checks": [check.__name__.lstrip("_") for check in self.checks()],
        }
