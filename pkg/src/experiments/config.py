"""
Experiment files.

A single TOML file of flat dotted keys (section.key = value):

    experiment.kind = "sample-alg1"
    experiment.seeds = [0, 1, 2]
    sampler.num_steps = 50
    score.kind = "isotropic-gaussian"
    extractor.kind = "project"
    extractor.coordinates = [0]
    cost.reference = [2.0]
    sampler.stepsize = 0.1
    sampler.opt_steps = 3

Only SEED may come from the environment (as the default seed list).
"""

import enum
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config import settings
from src.diffusion.schedules import FlowPath, OrnsteinUhlenbeckPath, VariancePreservingPath, make_schedule
from src.diffusion.score_models import GaussianMixture, IsotropicGaussian, ScoreModel
from src.diffusion.types import NoiseSchedule, ScheduleKind
from src.errors import ConfigError, SocDiffuseError
from src.features.extractors import FeatureExtractor, build_extractor
from src.features.terminal_cost import TerminalCost, parse_gamma
from src.sampler.types import SamplerConfig


class ExperimentKind(str, enum.Enum):
    SAMPLE_ALG1 = "sample-alg1"
    SAMPLE_ALG2 = "sample-alg2"
    SAMPLE_DDIM = "sample-ddim"
    VERIFY_LQ = "verify-lq"
    VERIFY_BRIDGE = "verify-bridge"
    VERIFY_PROP2 = "verify-prop2"
    VERIFY_HJB = "verify-hjb"
    VERIFY_AFA = "verify-afa"
    VERIFY_DIFFUSION = "verify-diffusion"
    VERIFY_SAMPLER = "verify-sampler"
    SWEEP_GAMMA = "sweep-gamma"
    SWEEP_HPARAMS = "sweep-hparams"

    @property
    def is_sampling(self) -> bool:
        return self in {ExperimentKind.SAMPLE_ALG1, ExperimentKind.SAMPLE_ALG2, ExperimentKind.SAMPLE_DDIM,
                        ExperimentKind.SWEEP_HPARAMS}


# verify-* kinds run a registered suite
VERIFY_SUITES = {
    ExperimentKind.VERIFY_LQ: "style-lq",
    ExperimentKind.VERIFY_BRIDGE: "bridge",
    ExperimentKind.VERIFY_PROP2: "prop2",
    ExperimentKind.VERIFY_HJB: "hjb",
    ExperimentKind.VERIFY_AFA: "afa",
    ExperimentKind.VERIFY_DIFFUSION: "diffusion-core",
    ExperimentKind.VERIFY_SAMPLER: "soc-sampler",
}

# sampler keys a sampling experiment must state explicitly
REQUIRED_SAMPLER_KEYS = ("num_steps", "stepsize", "opt_steps")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExperimentSection(_Section):
    kind: ExperimentKind
    seeds: list[int] = Field(default_factory=lambda: [settings.DEFAULT_SEED], min_length=1)
    output_dir: str = "out"
    threads: int = Field(default=settings.DEFAULT_THREADS, ge=1)
    plot: bool = True


class ScheduleSection(_Section):
    """The chain length is sampler.num_steps."""

    kind: ScheduleKind = ScheduleKind.LINEAR_BETA
    alpha_bar: Optional[list[float]] = None

    @model_validator(mode="after")
    def _tabulated_needs_table(self):
        if self.kind is ScheduleKind.TABULATED and not self.alpha_bar:
            raise ValueError("tabulated schedules need schedule.alpha_bar")
        return self


class ScoreSection(_Section):
    kind: Literal["isotropic-gaussian", "gaussian-mixture"] = "isotropic-gaussian"
    path: Literal["variance-preserving", "flow", "ou"] = "variance-preserving"
    mean: Optional[list[float]] = None
    variance: float = Field(default=1.0, gt=0)
    weights: Optional[list[float]] = None
    means: Optional[list[list[float]]] = None
    variances: Optional[list[float]] = None

    @model_validator(mode="after")
    def _mixture_needs_components(self):
        if self.kind == "gaussian-mixture" and None in (self.weights, self.means, self.variances):
            raise ValueError("gaussian-mixture needs score.weights, score.means and score.variances")
        return self


class ExtractorSection(_Section):
    kind: str = "identity"
    matrix: Optional[list[list[float]]] = None
    coordinates: Optional[list[int]] = None
    parts: Optional[list[dict[str, Any]]] = None


class CostSection(_Section):
    reference: list[float]
    gamma: Union[float, str] = "inf"

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, value):
        parse_gamma(value)
        return value


class ProblemSection(_Section):
    """Shared parameters of the control and sweep experiments."""

    dimension: int = Field(default=2, ge=1)
    x0: Optional[list[float]] = None
    x1: Optional[list[float]] = None
    t0: float = Field(default=0.0, lt=1.0)
    dt: float = Field(default=1e-3, gt=0)
    fixture_dir: Optional[str] = None


class SweepSection(_Section):
    gammas: list[float] = Field(default_factory=lambda: [1e1, 1e2, 1e3, 1e4, 1e5, 1e6], min_length=2)
    stepsizes: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2], min_length=1)
    opt_steps: list[int] = Field(default_factory=lambda: [1, 3, 5], min_length=1)


class ExperimentConfig(_Section):
    experiment: ExperimentSection
    problem: ProblemSection = ProblemSection()
    schedule: ScheduleSection = ScheduleSection()
    score: ScoreSection = ScoreSection()
    extractor: ExtractorSection = ExtractorSection()
    cost: Optional[CostSection] = None
    sampler: SamplerConfig = SamplerConfig()
    sweep: SweepSection = SweepSection()

    @model_validator(mode="after")
    def _table_matches_steps(self):
        table = self.schedule.alpha_bar
        if table is not None and len(table) != self.sampler.num_steps + 1:
            raise ValueError(
                f"schedule.alpha_bar has {len(table)} entries, sampler.num_steps needs {self.sampler.num_steps + 1}"
            )
        return self

    @property
    def kind(self) -> ExperimentKind:
        return self.experiment.kind

    # ------------------------------------------------------------------
    # Resolution of the specs into library objects
    # ------------------------------------------------------------------

    def build_schedule(self) -> NoiseSchedule:
        if self.schedule.kind is ScheduleKind.TABULATED:
            return NoiseSchedule.tabulated(self.schedule.alpha_bar)
        return make_schedule(self.sampler.num_steps, self.schedule.kind)

    def build_score(self, schedule: NoiseSchedule) -> ScoreModel:
        if self.score.path == "variance-preserving":
            path = VariancePreservingPath(schedule)
        elif self.score.path == "flow":
            path = FlowPath()
        else:
            path = OrnsteinUhlenbeckPath()

        d = self.problem.dimension
        if self.score.kind == "isotropic-gaussian":
            mean = self.score.mean if self.score.mean is not None else [0.0] * d
            return IsotropicGaussian(mean, self.score.variance, path)
        return GaussianMixture(self.score.weights, self.score.means, self.score.variances, path)

    def build_extractor(self) -> FeatureExtractor:
        options = self.extractor.model_dump(exclude_none=True)
        return build_extractor(dimension=self.problem.dimension, **options)

    def build_cost(self) -> TerminalCost:
        if self.cost is None:
            raise ConfigError("missing cost section", field="cost.reference")
        return TerminalCost(self.build_extractor(), np.asarray(self.cost.reference), parse_gamma(self.cost.gamma))

    def to_toml(self) -> str:
        """Flat dotted-key echo; load_config_text(echo) == self."""
        lines = []
        for section, values in self.model_dump(mode="json", exclude_none=True).items():
            for key, value in values.items():
                lines.append(f"{section}.{key} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, float):
        return repr(value) if np.isfinite(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(item) for item in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{key} = {_toml_value(item)}" for key, item in value.items()) + "}"
    raise ConfigError(f"cannot echo value {value!r}")


def _line_of(text: str, dotted: str) -> Optional[int]:
    section, _, key = dotted.partition(".")
    pattern = re.compile(rf"^\s*{re.escape(section)}\s*\.\s*{re.escape(key.split('.')[0])}\s*=")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return number
    return None


def _check_flat(data: dict) -> None:
    for section, values in data.items():
        if not isinstance(values, dict):
            raise ConfigError("top-level keys must be dotted (section.key = value)", field=section)
        for key, value in values.items():
            if isinstance(value, dict):
                raise ConfigError("keys nest at most one level (section.key)", field=f"{section}.{key}")


def _check_required(data: dict) -> None:
    kind = data.get("experiment", {}).get("kind")
    try:
        kind = ExperimentKind(kind)
    except ValueError:
        return
    if kind.is_sampling:
        sampler = data.get("sampler", {})
        for key in REQUIRED_SAMPLER_KEYS:
            if key not in sampler:
                raise ConfigError(f"sampling experiments must set sampler.{key}", field=f"sampler.{key}")
        if "cost" not in data:
            raise ConfigError("sampling experiments need a cost section", field="cost.reference")
        if kind is ExperimentKind.SAMPLE_ALG2 and "proximal_strength" not in sampler:
            raise ConfigError("sample-alg2 must set sampler.proximal_strength",
                              field="sampler.proximal_strength")


def load_config_text(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            match = re.search(r"line (\d+)", str(exc))
            line = int(match.group(1)) if match else None
        raise ConfigError(f"invalid TOML: {exc}", line=line) from exc

    _check_flat(data)
    _check_required(data)
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ConfigError(first["msg"], field=field, line=_line_of(text, field)) from exc

    try:
        schedule = config.build_schedule()
        if config.kind.is_sampling:
            config.build_score(schedule)
            config.build_cost()
    except ConfigError:
        raise
    except SocDiffuseError as exc:
        raise ConfigError(f"unresolvable experiment settings: {exc}") from exc
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return load_config_text(text)
