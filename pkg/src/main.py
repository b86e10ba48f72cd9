from pathlib import Path
from typing import Optional

from src.custom_logging import logger
from src.errors import ConfigError, NumericalFailureError, SocDiffuseError, UnknownSuiteError
from src.experiments.artifacts import plot_csv
from src.experiments.report import RunReport
from src.experiments.runner import run_experiment, verify_suite

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _print_report(report: RunReport) -> None:
    for check in report.checks:
        status = "pass" if check.passed else ("advisory" if check.advisory else "FAIL")
        print(f"  [{status}] {check.name}: measured={check.measured} {check.comparison} {check.threshold}"
              + (f" (expected {check.expected})" if check.expected is not None else ""))
    if report.error:
        print(f"  error: {report.error}")
    print(f"{report.name}: {'PASS' if report.passed else 'FAIL'}")


def _guarded(action) -> int:
    """Runs action() and maps library errors onto exit codes."""
    try:
        return action()
    except (ConfigError, UnknownSuiteError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"Error: {e}")
        return EXIT_CONFIG
    except NumericalFailureError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"Numerical failure: {e}")
        return EXIT_FAILURE
    except (SocDiffuseError, OSError) as e:
        logger.error(f"Run failed: {e}")
        print(f"Error: {e}")
        return EXIT_FAILURE


def run_command(config_path: str, seed: Optional[int] = None, out_dir: Optional[str] = None,
                threads: Optional[int] = None) -> int:
    """
    Runs the experiment a config file describes.
    """
    def action() -> int:
        logger.info("Experiment config received: %s", config_path)
        report = run_experiment(config_path, seed=seed, out_dir=out_dir, threads=threads)
        _print_report(report)
        return report.exit_code

    return _guarded(action)


def verify_command(suite: str, seed: Optional[int] = None, out_dir: Optional[str] = None,
                   threads: Optional[int] = None) -> int:
    def action() -> int:
        logger.info("Verification suite requested: %s", suite)
        report = verify_suite(suite, seed=seed, out_dir=out_dir, threads=threads)
        _print_report(report)
        return report.exit_code

    return _guarded(action)


def plot_command(csv_path: str, out_path: str) -> int:
    def action() -> int:
        written = plot_csv(Path(csv_path), Path(out_path))
        print(f"Wrote {written}")
        return EXIT_OK

    return _guarded(action)
