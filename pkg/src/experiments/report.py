import json
import math
from typing import Optional

from pydantic import BaseModel, Field


class InvariantCheck(BaseModel):
    """One pass/fail entry: what was measured, against which threshold."""

    name: str
    passed: bool
    measured: Optional[float]
    threshold: Optional[float]
    comparison: str
    expected: Optional[float] = None
    advisory: bool = False
    detail: str = ""

    @classmethod
    def at_most(cls, name: str, measured: float, threshold: float, **kwargs) -> "InvariantCheck":
        return cls(name=name, passed=bool(_finite(measured) and measured <= threshold), measured=_clean(measured),
                   threshold=threshold, comparison="<=", **kwargs)

    @classmethod
    def at_least(cls, name: str, measured: float, threshold: float, **kwargs) -> "InvariantCheck":
        return cls(name=name, passed=bool(_finite(measured) and measured >= threshold), measured=_clean(measured),
                   threshold=threshold, comparison=">=", **kwargs)

    @classmethod
    def within(cls, name: str, measured: float, expected: float, tolerance: float, **kwargs) -> "InvariantCheck":
        """|measured - expected| <= tolerance."""
        passed = bool(_finite(measured) and abs(measured - expected) <= tolerance)
        return cls(name=name, passed=passed, measured=_clean(measured), threshold=tolerance,
                   comparison="|measured-expected|<=", expected=expected, **kwargs)

    @classmethod
    def failed(cls, name: str, detail: str) -> "InvariantCheck":
        """A check whose measurement raised."""
        return cls(name=name, passed=False, measured=None, threshold=None, comparison="error", detail=detail)


def _finite(value: float) -> bool:
    return value is not None and math.isfinite(float(value))


def _clean(value: float) -> Optional[float]:
    return float(value) if _finite(value) else None


class SeedResult(BaseModel):
    seed: int
    terminal_cost: float
    baseline_cost: Optional[float] = None


class RunReport(BaseModel):
    name: str
    seeds: list[int] = Field(default_factory=list)
    seed_results: list[SeedResult] = Field(default_factory=list)
    checks: list[InvariantCheck] = Field(default_factory=list)
    # mean per-step cost over seeds, in step order (T..0)
    cost_curve: list[float] = Field(default_factory=list)
    config_echo: Optional[str] = None
    artifacts: list[str] = Field(default_factory=list)
    error: Optional[str] = None
    # logged, never serialised: it would break byte-identical summaries
    wall_clock_seconds: float = Field(default=0.0, exclude=True)

    @property
    def passed(self) -> bool:
        return self.error is None and all(check.passed for check in self.checks if not check.advisory)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def failures(self) -> list[InvariantCheck]:
        return [check for check in self.checks if not check.passed and not check.advisory]

    def to_json(self) -> str:
        payload = self.model_dump(mode="json")
        payload["passed"] = self.passed
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def merge(self, other: "RunReport") -> "RunReport":
        self.checks.extend(other.checks)
        self.artifacts.extend(other.artifacts)
        if other.error and not self.error:
            self.error = other.error
        return self
