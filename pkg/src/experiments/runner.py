"""
Experiment orchestration: load a config, run the named experiment over its
seeds, gate the result on invariant checks and write the artifacts.

Artifacts land in the output directory as trajectories.csv, checks.csv,
cost_curve.svg/.csv and summary.json. Paths inside the summary are relative
to that directory so two runs into different directories compare equal.
"""

import itertools
import time
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.config import settings
from src.control.controllers import style_controller
from src.control.simulation import measure_convergence_slope
from src.custom_logging import logger
from src.diffusion.types import Trajectory
from src.errors import ConfigError, NumericalFailureError
from src.experiments.artifacts import (
    emit_plot_data,
    format_float,
    write_checks_csv,
    write_summary_json,
    write_trajectories_csv,
)
from src.experiments.base_suite import SuiteContext
from src.experiments.config import VERIFY_SUITES, ExperimentConfig, ExperimentKind, load_config
from src.experiments.parallel import map_seeds
from src.experiments.report import InvariantCheck, RunReport, SeedResult
from src.experiments.suites import build_default_registry
from src.features.extractors import LinearExtractor
from src.features.terminal_cost import INFINITE_GAMMA
from src.sampler.modulation import ModulatedSampler

PathLike = Union[str, Path]


class _Artifacts:
    """Collects written files as paths relative to the output directory."""

    def __init__(self, out_dir: Path, report: RunReport):
        self.out_dir = out_dir
        self.report = report

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def add(self, written: Path) -> None:
        self.report.artifacts.append(written.relative_to(self.out_dir).as_posix())


def _override(config: ExperimentConfig, **updates) -> ExperimentConfig:
    """Command-line overrides of the experiment section; None leaves the file value."""
    updates = {key: value for key, value in updates.items() if value is not None}
    if not updates:
        return config
    return config.model_copy(update={"experiment": config.experiment.model_copy(update=updates)})


def _mean_cost_curve(trajectories: list[Trajectory]) -> list[float]:
    return [float(value) for value in np.mean([trajectory.costs for trajectory in trajectories], axis=0)]


def _suite_params(config: ExperimentConfig) -> dict:
    return config.problem.model_dump(exclude_none=True)


# ----------------------------------------------------------------------
# Experiment kinds
# ----------------------------------------------------------------------

def _sampler_for(config: ExperimentConfig, **overrides) -> ModulatedSampler:
    schedule = config.build_schedule()
    sampler_config = config.sampler.model_copy(update=overrides) if overrides else config.sampler
    return ModulatedSampler(config.build_score(schedule), config.build_cost(), schedule, sampler_config)


def _run_sampling(config: ExperimentConfig, report: RunReport, artifacts: _Artifacts) -> None:
    sampler = _sampler_for(config)
    kind = config.kind
    run = {
        ExperimentKind.SAMPLE_ALG1: sampler.run_algorithm1,
        ExperimentKind.SAMPLE_ALG2: sampler.run_algorithm2,
        ExperimentKind.SAMPLE_DDIM: sampler.run_uncontrolled,
    }[kind]

    def run_seed(seed: int) -> tuple[Trajectory, Trajectory]:
        x_start = sampler.initial_state(seed)
        return run(x_start, seed), sampler.run_uncontrolled(x_start, seed)

    pairs = map_seeds(run_seed, config.experiment.seeds, config.experiment.threads, kind.value)
    trajectories = [trajectory for trajectory, _ in pairs]
    for trajectory, baseline in pairs:
        report.seed_results.append(SeedResult(seed=trajectory.seed, terminal_cost=trajectory.costs[-1],
                                              baseline_cost=baseline.costs[-1]))
    report.cost_curve = _mean_cost_curve(trajectories)
    artifacts.add(write_trajectories_csv(trajectories, artifacts.path("trajectories.csv")))

    controlled = float(np.mean([result.terminal_cost for result in report.seed_results]))
    baseline = float(np.mean([result.baseline_cost for result in report.seed_results]))
    logger.info(f"{kind.value}: mean terminal cost {controlled:.6g} vs uncontrolled {baseline:.6g}")
    if kind is not ExperimentKind.SAMPLE_DDIM:
        ratio = controlled / baseline if baseline > 0 else (0.0 if controlled == 0 else np.inf)
        report.checks.append(InvariantCheck.at_most(f"{kind.value}.cost_ratio_vs_uncontrolled", ratio, 1.0))
    report.checks.append(InvariantCheck.at_least(f"{kind.value}.finite_terminal_costs",
                                                 float(np.isfinite(controlled)), 1.0))


def _run_sweep_hparams(config: ExperimentConfig, report: RunReport, artifacts: _Artifacts) -> None:
    """Gradient-modulated sampler over the stepsize x opt_steps grid; one mean-cost row per cell."""
    rows = []
    baseline_sampler = _sampler_for(config)
    baselines = map_seeds(lambda seed: baseline_sampler.run_uncontrolled(seed=seed).costs[-1],
                          config.experiment.seeds, config.experiment.threads, "uncontrolled")
    baseline = float(np.mean(baselines))
    for stepsize, opt_steps in itertools.product(config.sweep.stepsizes, config.sweep.opt_steps):
        sampler = _sampler_for(config, stepsize=stepsize, opt_steps=opt_steps)
        costs = map_seeds(lambda seed: sampler.run_algorithm1(seed=seed).costs[-1], config.experiment.seeds,
                          config.experiment.threads, f"eta={stepsize:g} M={opt_steps}")
        rows.append((stepsize, opt_steps, float(np.mean(costs))))
        logger.info(f"sweep-hparams: eta={stepsize:g} M={opt_steps} mean cost {rows[-1][2]:.6g}")

    path = artifacts.path("sweep_hparams.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        handle.write("stepsize,opt_steps,mean_terminal_cost,uncontrolled_mean_cost\n")
        for stepsize, opt_steps, cost in rows:
            handle.write(f"{format_float(stepsize)},{opt_steps},{format_float(cost)},{format_float(baseline)}\n")
    artifacts.add(path)

    best = min(cost for _, _, cost in rows)
    report.checks.append(InvariantCheck.at_most("sweep-hparams.best_cost_ratio_vs_uncontrolled",
                                                best / baseline if baseline > 0 else 0.0, 1.0))


def _run_sweep_gamma(config: ExperimentConfig, report: RunReport, artifacts: _Artifacts) -> None:
    """Finite-gamma style control against its gamma -> infinity limit at (x0, t0)."""
    extractor = config.build_extractor()
    if not isinstance(extractor, LinearExtractor):
        raise ConfigError("sweep-gamma needs a linear extractor", field="extractor.kind")
    cost = config.build_cost()
    A, y1 = extractor.matrix, cost.reference_features
    x = np.asarray(config.problem.x0 if config.problem.x0 is not None else np.zeros(extractor.input_dim))
    t = config.problem.t0

    limit = style_controller(x, t, A, y1, INFINITE_GAMMA)
    gammas = list(config.sweep.gammas)
    errors = [float(np.linalg.norm(style_controller(x, t, A, y1, gamma) - limit)) for gamma in gammas]

    path = artifacts.path("sweep_gamma.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as handle:
        handle.write("gamma,control_error\n")
        for gamma, error in zip(gammas, errors):
            handle.write(f"{format_float(gamma)},{format_float(error)}\n")
    artifacts.add(path)

    slope = measure_convergence_slope(gammas, errors)
    report.checks.append(InvariantCheck.within("sweep-gamma.convergence_slope", slope, -1.0, 0.1))


def _run_verify(config: ExperimentConfig, report: RunReport, artifacts: _Artifacts) -> None:
    suite = build_default_registry().get_suite(VERIFY_SUITES[config.kind])
    context = SuiteContext(seed=config.experiment.seeds[0], threads=config.experiment.threads,
                           params=_suite_params(config))
    report.checks.extend(suite.run(context))


# ----------------------------------------------------------------------
# Entry points
# ----------------------------------------------------------------------

def _finalize(report: RunReport, artifacts: _Artifacts, plot: bool, started: float) -> RunReport:
    if plot and report.cost_curve:
        artifacts.add(emit_plot_data(report, artifacts.path("cost_curve.svg")))
    if report.checks:
        artifacts.add(write_checks_csv(report.checks, artifacts.path("checks.csv")))
    report.artifacts.append("summary.json")
    report.wall_clock_seconds = time.perf_counter() - started
    write_summary_json(report, artifacts.path("summary.json"))

    logger.info(f"{report.name}: {'PASS' if report.passed else 'FAIL'} in {report.wall_clock_seconds:.2f}s")
    for failure in report.failures():
        logger.info(f"  failed {failure.name}: measured={failure.measured} threshold={failure.threshold}")
    return report


def run_experiment(config_path: PathLike, seed: Optional[int] = None, out_dir: Optional[PathLike] = None,
                   threads: Optional[int] = None) -> RunReport:
    """
    Runs the experiment a config file names and writes its artifacts.

    Config problems raise ConfigError. A numerical failure mid-run is recorded
    in report.error (with its step context) and the partial report is still
    written.
    """
    started = time.perf_counter()
    # the echo carries the seed override but not the thread count
    config = _override(load_config(config_path), seeds=None if seed is None else [seed])
    echo = config.to_toml()
    config = _override(config, threads=threads)
    out = Path(config.experiment.output_dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)

    report = RunReport(name=config.kind.value, seeds=sorted(config.experiment.seeds), config_echo=echo)
    artifacts = _Artifacts(out, report)
    logger.info(f"Running {config.kind.value} with seeds {report.seeds} into {out}")

    try:
        if config.kind in VERIFY_SUITES:
            _run_verify(config, report, artifacts)
        elif config.kind is ExperimentKind.SWEEP_GAMMA:
            _run_sweep_gamma(config, report, artifacts)
        elif config.kind is ExperimentKind.SWEEP_HPARAMS:
            _run_sweep_hparams(config, report, artifacts)
        else:
            _run_sampling(config, report, artifacts)
    except NumericalFailureError as exc:
        logger.error(f"{config.kind.value} aborted: {exc}")
        report.error = str(exc)

    return _finalize(report, artifacts, config.experiment.plot, started)


def verify_suite(name: str, seed: Optional[int] = None, out_dir: Optional[PathLike] = None,
                 threads: Optional[int] = None) -> RunReport:
    """Runs a registered suite (or group). Unknown names raise UnknownSuiteError."""
    started = time.perf_counter()
    suite = build_default_registry().get_suite(name)
    context = SuiteContext(seed=settings.DEFAULT_SEED if seed is None else seed,
                           threads=settings.DEFAULT_THREADS if threads is None else threads)
    report = RunReport(name=suite.name, seeds=[context.seed])
    logger.info(f"Verifying {suite.name}: {suite.description}")
    report.checks.extend(suite.run(context))

    if out_dir is None:
        report.wall_clock_seconds = time.perf_counter() - started
        logger.info(f"{report.name}: {'PASS' if report.passed else 'FAIL'} in {report.wall_clock_seconds:.2f}s")
        return report
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _finalize(report, _Artifacts(out, report), plot=False, started=started)
